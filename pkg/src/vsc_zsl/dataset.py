"""Data model, on-disk format and synthetic domain-shift generator.

A dataset directory holds four plain-text files (no headers, comma
separated, ``.`` decimals)::

    features_seen.csv    label,f1,...,fd       labeled source instances
    features_unseen.csv  f1,...,fd             unlabeled target instances
    attributes.csv       class_id,a1,...,am    one row per class
    split.txt            seen: ...\\nunseen: ...[\\ntest_seen_rows: ...]

plus two optional files: ``labels_unseen.csv`` (one id per line, aligned
with ``features_unseen.csv``) used only for scoring and diagnostics, and
``dataset.json`` carrying dataset-level flags such as ``normalize``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from vsc_zsl.embed import leaky_relu
from vsc_zsl.seeding import component_rng

logger = logging.getLogger(__name__)

FEATURES_SEEN = "features_seen.csv"
FEATURES_UNSEEN = "features_unseen.csv"
LABELS_UNSEEN = "labels_unseen.csv"
ATTRIBUTES = "attributes.csv"
SPLIT = "split.txt"
META = "dataset.json"


class DataError(ValueError):
    """Malformed or inconsistent input data."""


def _as_matrix(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise DataError(f"{name} must be a 2-D matrix with at least one column, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class LabeledFeatureSet:
    """Instance features (N x d) with optional integer class labels."""

    features: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "features", _as_matrix(self.features, "features"))
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if labels.shape[0] != self.features.shape[0]:
                raise DataError(
                    f"{labels.shape[0]} labels for {self.features.shape[0]} feature rows"
                )
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> LabeledFeatureSet:
        rows = np.asarray(rows, dtype=np.int64)
        labels = None if self.labels is None else self.labels[rows]
        return LabeledFeatureSet(self.features[rows], labels)


@dataclass(frozen=True)
class AttributeTable:
    """Per-class attribute vectors, one row per class id."""

    attributes: np.ndarray
    class_ids: np.ndarray

    def __post_init__(self):
        attrs = _as_matrix(self.attributes, "attributes")
        ids = np.asarray(self.class_ids, dtype=np.int64).reshape(-1)
        if ids.shape[0] != attrs.shape[0]:
            raise DataError(f"{ids.shape[0]} class ids for {attrs.shape[0]} attribute rows")
        if len(set(ids.tolist())) != ids.shape[0]:
            raise DataError("duplicate class id in attribute table")
        object.__setattr__(self, "attributes", attrs)
        object.__setattr__(self, "class_ids", ids)

    @property
    def m(self) -> int:
        return self.attributes.shape[1]

    def rows(self, class_ids: Sequence[int]) -> np.ndarray:
        """Attribute matrix for ``class_ids``, in the order given."""
        index = {c: i for i, c in enumerate(self.class_ids.tolist())}
        try:
            return self.attributes[[index[int(c)] for c in class_ids]]
        except KeyError as exc:
            raise DataError(f"no attributes for class id {exc.args[0]}") from None


@dataclass(frozen=True)
class ClassSplit:
    seen: tuple[int, ...]
    unseen: tuple[int, ...]
    test_seen_instances: tuple[int, ...] | None = None

    def __post_init__(self):
        seen = tuple(int(c) for c in self.seen)
        unseen = tuple(int(c) for c in self.unseen)
        if not seen or not unseen:
            raise DataError("split needs at least one seen and one unseen class")
        if len(set(seen)) != len(seen) or len(set(unseen)) != len(unseen):
            raise DataError("duplicate class id in split")
        overlap = set(seen) & set(unseen)
        if overlap:
            raise DataError(f"classes both seen and unseen: {sorted(overlap)}")
        if any(c < 0 for c in seen + unseen):
            raise DataError("class ids must be non-negative")
        object.__setattr__(self, "seen", seen)
        object.__setattr__(self, "unseen", unseen)
        if self.test_seen_instances is not None:
            object.__setattr__(
                self, "test_seen_instances", tuple(int(i) for i in self.test_seen_instances)
            )

    @property
    def all_classes(self) -> tuple[int, ...]:
        return self.seen + self.unseen


@dataclass(frozen=True)
class CenterSet:
    """K centers in visual space; ``class_ids`` is None for anonymous clusters."""

    centers: np.ndarray
    class_ids: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "centers", _as_matrix(self.centers, "centers"))
        if self.class_ids is not None:
            ids = np.asarray(self.class_ids, dtype=np.int64).reshape(-1)
            if ids.shape[0] != self.centers.shape[0]:
                raise DataError(f"{ids.shape[0]} class ids for {self.centers.shape[0]} centers")
            if len(set(ids.tolist())) != ids.shape[0]:
                raise DataError("center class ids must be distinct")
            object.__setattr__(self, "class_ids", ids)

    def __len__(self) -> int:
        return self.centers.shape[0]

    @property
    def d(self) -> int:
        return self.centers.shape[1]


class ZSLDataset(NamedTuple):
    source: LabeledFeatureSet
    target: LabeledFeatureSet
    attributes: AttributeTable
    split: ClassSplit

    def train_source(self) -> LabeledFeatureSet:
        """Source instances minus the rows held out for generalized testing."""
        held = self.split.test_seen_instances
        if not held:
            return self.source
        keep = np.setdiff1d(np.arange(self.source.n), np.asarray(held, dtype=np.int64))
        return self.source.subset(keep)


def l2_normalize_rows(m) -> np.ndarray:
    """Divide every row by its Euclidean norm. All-zero rows are rejected."""
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    zero = np.flatnonzero(norms[:, 0] == 0)
    if zero.size:
        raise DataError(f"cannot normalize zero-norm row {int(zero[0])}")
    return m / norms


def compute_real_centers(data: LabeledFeatureSet, classes: Sequence[int]) -> CenterSet:
    """Per-class mean of the labeled features, ordered as ``classes``."""
    if data.labels is None:
        raise DataError("real centers need labeled features")
    centers = np.empty((len(classes), data.d))
    for i, c in enumerate(classes):
        mask = data.labels == c
        if not mask.any():
            raise DataError(f"class {c} has no instances")
        centers[i] = data.features[mask].mean(axis=0)
    return CenterSet(centers, np.asarray(classes, dtype=np.int64))


# ---------------------------------------------------------------------------
# Text format


def _read_rows(path: Path, leading_id: bool) -> tuple[np.ndarray | None, np.ndarray]:
    """Parse a headerless numeric CSV; errors name the file and line."""
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    ids, rows = [], []
    width = None
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if width is None:
                width = len(fields)
                if width < (2 if leading_id else 1):
                    raise DataError(f"{path}:{lineno}: row has no values")
            elif len(fields) != width:
                raise DataError(f"{path}:{lineno}: expected {width} fields, got {len(fields)}")
            try:
                if leading_id:
                    ids.append(int(fields[0]))
                    rows.append([float(x) for x in fields[1:]])
                else:
                    rows.append([float(x) for x in fields])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    values = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values).all(axis=1))[0])
        raise DataError(f"{path}: non-finite value in data row {bad + 1}")
    return (np.asarray(ids, dtype=np.int64) if leading_id else None), values


def _read_ids(path: Path) -> np.ndarray:
    out = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(int(line))
            except ValueError:
                raise DataError(f"{path}:{lineno}: not an integer class id: {line!r}") from None
    return np.asarray(out, dtype=np.int64)


def _parse_split(path: Path) -> ClassSplit:
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    entries = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        key, sep, rest = line.partition(":")
        key = key.strip()
        if not sep or key not in ("seen", "unseen", "test_seen_rows"):
            raise DataError(f"{path}:{lineno}: unrecognized line {line!r}")
        try:
            entries[key] = tuple(int(tok) for tok in rest.split())
        except ValueError:
            raise DataError(f"{path}:{lineno}: expected integers") from None
    for key in ("seen", "unseen"):
        if key not in entries:
            raise DataError(f"{path}: missing '{key}:' line")
    return ClassSplit(entries["seen"], entries["unseen"], entries.get("test_seen_rows"))


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_rows(path: Path, values: np.ndarray, ids=None) -> None:
    lines = []
    for i, row in enumerate(values.tolist()):
        body = ",".join(map(_fmt, row))
        lines.append(f"{int(ids[i])},{body}" if ids is not None else body)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_dataset(path, normalize: bool | None = None) -> ZSLDataset:
    """Load and cross-check a dataset directory.

    Args:
        path: Dataset directory.
        normalize: L2-normalize feature and attribute rows. ``None`` reads
            the ``normalize`` flag of ``dataset.json`` (default True).

    Raises:
        DataError: on missing files, arity or dimension mismatches, class
            ids absent from the split, or zero-norm rows under normalization.
    """
    root = Path(path)
    if not root.is_dir():
        raise DataError(f"dataset directory not found: {root}")
    if normalize is None:
        normalize = True
        if (root / META).is_file():
            normalize = bool(json.loads((root / META).read_text(encoding="utf-8")).get("normalize", True))

    split = _parse_split(root / SPLIT)
    known = set(split.all_classes)

    attr_ids, attrs = _read_rows(root / ATTRIBUTES, leading_id=True)
    for c in attr_ids.tolist():
        if c not in known:
            raise DataError(f"{root / ATTRIBUTES}: unknown class id {c} (not in {SPLIT})")
    missing = known - set(attr_ids.tolist())
    if missing:
        raise DataError(f"{root / ATTRIBUTES}: no attributes for class ids {sorted(missing)}")

    seen_labels, seen_feats = _read_rows(root / FEATURES_SEEN, leading_id=True)
    seen_set = set(split.seen)
    for row, c in enumerate(seen_labels.tolist()):
        if c not in seen_set:
            raise DataError(f"{root / FEATURES_SEEN}:{row + 1}: label {c} not a seen class in {SPLIT}")

    _, unseen_feats = _read_rows(root / FEATURES_UNSEEN, leading_id=False)
    if unseen_feats.shape[1] != seen_feats.shape[1]:
        raise DataError(
            f"feature dimension mismatch: {FEATURES_SEEN} has d={seen_feats.shape[1]}, "
            f"{FEATURES_UNSEEN} has d={unseen_feats.shape[1]}"
        )

    unseen_labels = None
    if (root / LABELS_UNSEEN).is_file():
        unseen_labels = _read_ids(root / LABELS_UNSEEN)
        if unseen_labels.shape[0] != unseen_feats.shape[0]:
            raise DataError(
                f"{root / LABELS_UNSEEN}: {unseen_labels.shape[0]} labels for "
                f"{unseen_feats.shape[0]} rows of {FEATURES_UNSEEN}"
            )
        unseen_set = set(split.unseen)
        for row, c in enumerate(unseen_labels.tolist()):
            if c not in unseen_set:
                raise DataError(f"{root / LABELS_UNSEEN}:{row + 1}: label {c} not an unseen class")

    if split.test_seen_instances:
        bad = [i for i in split.test_seen_instances if not 0 <= i < seen_feats.shape[0]]
        if bad:
            raise DataError(f"{root / SPLIT}: test_seen_rows index {bad[0]} out of range")

    if normalize:
        for name, mat in ((FEATURES_SEEN, seen_feats), (FEATURES_UNSEEN, unseen_feats), (ATTRIBUTES, attrs)):
            zero = np.flatnonzero(~np.any(mat != 0, axis=1))
            if zero.size:
                raise DataError(f"{root / name}:{int(zero[0]) + 1}: zero-norm row cannot be normalized")
        seen_feats = l2_normalize_rows(seen_feats)
        unseen_feats = l2_normalize_rows(unseen_feats)
        attrs = l2_normalize_rows(attrs)

    logger.debug("loaded %s: %d seen rows, %d unseen rows, d=%d, m=%d",
                 root, seen_feats.shape[0], unseen_feats.shape[0], seen_feats.shape[1], attrs.shape[1])
    return ZSLDataset(
        LabeledFeatureSet(seen_feats, seen_labels),
        LabeledFeatureSet(unseen_feats, unseen_labels),
        AttributeTable(attrs, attr_ids),
        split,
    )


def save_dataset(data: ZSLDataset, path, meta: dict | None = None) -> Path:
    """Write ``data`` in the directory format; floats keep full precision."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    src, tgt, attrs, split = data
    if src.labels is None:
        raise DataError("source features must be labeled")
    _write_rows(root / FEATURES_SEEN, src.features, src.labels)
    _write_rows(root / FEATURES_UNSEEN, tgt.features)
    if tgt.labels is not None:
        (root / LABELS_UNSEEN).write_text("".join(f"{int(c)}\n" for c in tgt.labels), encoding="utf-8")
    _write_rows(root / ATTRIBUTES, attrs.attributes, attrs.class_ids)
    lines = ["seen: " + " ".join(map(str, split.seen)), "unseen: " + " ".join(map(str, split.unseen))]
    if split.test_seen_instances:
        lines.append("test_seen_rows: " + " ".join(map(str, split.test_seen_instances)))
    (root / SPLIT).write_text("\n".join(lines) + "\n", encoding="utf-8")
    if meta is not None:
        (root / META).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return root


# ---------------------------------------------------------------------------
# Synthetic data


@dataclass(frozen=True)
class SynthParams:
    """Knobs of the synthetic domain-shift generator.

    ``sigma`` is the per-coordinate standard deviation of instance noise and
    ``delta`` the length of the random offset added to each unseen center.
    ``center_scale`` fixes the mean norm of the ground-truth centers.
    """

    S: int = 20
    U: int = 10
    d: int = 32
    m: int = 16
    per_class: int = 50
    sigma: float = 0.05
    delta: float = 0.5
    seed: int = 0
    center_scale: float = 0.7
    test_seen_fraction: float = 0.2
    negative_slope: float = 0.2

    def __post_init__(self):
        for name in ("S", "U", "d", "m", "per_class"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} must be positive, got {getattr(self, name)}")
        if self.sigma < 0 or self.delta < 0 or self.center_scale <= 0:
            raise DataError("sigma and delta must be >= 0, center_scale > 0")
        if not 0 <= self.test_seen_fraction < 1:
            raise DataError("test_seen_fraction must lie in [0, 1)")


def synthesize(params: SynthParams) -> ZSLDataset:
    """Build a synthetic dataset in memory (see :func:`generate_synthetic`)."""
    p = params
    rng = component_rng(p.seed, "synth")
    n_cls = p.S + p.U
    class_ids = np.arange(n_cls, dtype=np.int64)
    seen, unseen = class_ids[: p.S], class_ids[p.S:]

    attrs = l2_normalize_rows(rng.standard_normal((n_cls, p.m)))
    # ground-truth map: same architecture as EmbeddingNet with hidden width d
    g1 = rng.standard_normal((p.m, p.d))
    g2 = rng.standard_normal((p.d, p.d)) / np.sqrt(p.d)
    raw = leaky_relu(leaky_relu(attrs @ g1, p.negative_slope) @ g2, p.negative_slope)
    # leaky_relu is positively homogeneous, so rescaling g2 rescales the output
    g2 = g2 * (p.center_scale / np.linalg.norm(raw, axis=1).mean())
    centers = leaky_relu(leaky_relu(attrs @ g1, p.negative_slope) @ g2, p.negative_slope)

    shift = rng.standard_normal((p.U, p.d))
    shift = p.delta * shift / np.linalg.norm(shift, axis=1, keepdims=True)
    centers[p.S:] += shift

    def instances(classes):
        labels = np.repeat(classes, p.per_class)
        feats = centers[labels] + p.sigma * rng.standard_normal((labels.size, p.d))
        order = rng.permutation(labels.size)
        return feats[order], labels[order]

    seen_x, seen_y = instances(seen)
    unseen_x, unseen_y = instances(unseen)

    held = None
    n_held = int(round(p.test_seen_fraction * p.per_class))
    if n_held:
        held = []
        for c in seen.tolist():
            rows = np.flatnonzero(seen_y == c)
            held.extend(rng.choice(rows, size=n_held, replace=False).tolist())
        held = tuple(sorted(held))

    return ZSLDataset(
        LabeledFeatureSet(seen_x, seen_y),
        LabeledFeatureSet(unseen_x, unseen_y),
        AttributeTable(attrs, class_ids),
        ClassSplit(tuple(seen.tolist()), tuple(unseen.tolist()), held),
    )


def generate_synthetic(params: SynthParams, out_dir) -> Path:
    """Write a synthetic domain-shift dataset to ``out_dir``.

    Every class gets a random unit attribute vector. Seen centers are the
    image of the attributes under a fixed random two-layer leaky-ReLU map;
    unseen centers are displaced from that image by ``delta`` in a random
    direction, and instances scatter around the centers with Gaussian noise.
    The files are written unnormalized (``dataset.json`` says so), so that
    the ground-truth map stays exactly realizable by an EmbeddingNet.
    """
    data = synthesize(params)
    meta = {"normalize": False, "synth": asdict(params)}
    return save_dataset(data, out_dir, meta=meta)
