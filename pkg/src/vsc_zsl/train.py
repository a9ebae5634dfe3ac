"""Full-batch training of the embedding network on class centers.

Every epoch projects all seen and unseen attribute vectors, refreshes the
structure pairing (Chamfer nearest neighbours for ``cdvsc``, exact
matching for ``bmvsc``) against the fixed K-means centers of the target
features, and takes one Adam step on

    mse + beta * structure + weight_decay * (|w1|^2 + |w2|^2)

where ``mse`` averages squared center errors over the seen classes and
``structure`` sums over the unseen ones.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from vsc_zsl.align import chamfer, cost_matrix, many_to_one_report, min_weight_perfect_matching
from vsc_zsl.cluster import KMeansResult, kmeans
from vsc_zsl.dataset import (
    AttributeTable,
    ClassSplit,
    DataError,
    LabeledFeatureSet,
    ZSLDataset,
    compute_real_centers,
)
from vsc_zsl.embed import COSTS, METHODS, AdamState, EmbeddingNet, LossSpec, adam_step, forward, loss_and_grad
from vsc_zsl.evaluation import per_class_accuracy, predict
from vsc_zsl.seeding import component_rng, component_seed

logger = logging.getLogger(__name__)

DEFAULT_BETA_GRID = (0.001, 0.01, 0.1, 1.0, 10.0)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, detail: str):
        super().__init__(f"training diverged at epoch {epoch}: {detail}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    method: str = "bmvsc"
    beta: float = 1.0
    weight_decay: float = 5e-4
    learning_rate: float = 1e-4
    epochs: int = 1000
    seed: int = 0
    restarts: int = 10
    cost: str = "squared"
    hidden: int | None = None
    negative_slope: float = 0.2
    final_activation: bool = True
    refresh_every: int = 1
    warmup_epochs: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.cost not in COSTS:
            raise ValueError(f"unknown cost {self.cost!r}; expected one of {COSTS}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.refresh_every < 1:
            raise ValueError("refresh_every must be >= 1")
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be >= 0")


@dataclass
class TrainLog:
    """Per-epoch record, measured on the weights the epoch's step started from.

    ``right_matches`` and ``center_dist`` are filled only when the target
    labels are known; they compare synthetic unseen centers against the
    real (label-derived) unseen centers and never feed back into training.
    """

    method: str
    beta: float
    weight_decay: float
    mse: list[float] = field(default_factory=list)
    structure: list[float] = field(default_factory=list)
    reg: list[float] = field(default_factory=list)
    total: list[float] = field(default_factory=list)
    right_matches: list[int] = field(default_factory=list)
    center_dist: list[float] = field(default_factory=list)
    assignments: list[np.ndarray] = field(default_factory=list, repr=False)
    many_to_one: list[tuple[int, int]] = field(default_factory=list)
    clusters: KMeansResult | None = field(default=None, repr=False)

    @property
    def epochs(self) -> int:
        return len(self.total)

    @property
    def has_diagnostics(self) -> bool:
        return bool(self.right_matches)

    def rows(self) -> list[list]:
        out = []
        for e in range(self.epochs):
            row = [e + 1, self.mse[e], self.structure[e], self.reg[e], self.total[e]]
            if self.has_diagnostics:
                row += [self.right_matches[e], self.center_dist[e]]
            out.append(row)
        return out

    def to_csv(self, path) -> None:
        header = ["epoch", "mse", "structure", "reg", "total"]
        if self.has_diagnostics:
            header += ["right_matches", "center_dist"]
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in self.rows():
                writer.writerow([v if isinstance(v, int) else f"{v:.6g}" for v in row])


def _match_diagnostics(syn: np.ndarray, real: np.ndarray) -> tuple[int, float]:
    diff = syn[:, None, :] - real[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    right = int(np.sum(np.argmin(dist, axis=1) == np.arange(syn.shape[0])))
    return right, float(np.mean(np.diag(dist)))


def _drop_held_out(source: LabeledFeatureSet, split: ClassSplit) -> LabeledFeatureSet:
    if not split.test_seen_instances:
        return source
    keep = np.setdiff1d(np.arange(source.n), np.asarray(split.test_seen_instances, dtype=np.int64))
    return source.subset(keep)


def train(config: TrainConfig, source: LabeledFeatureSet, target: LabeledFeatureSet | None,
          attrs: AttributeTable, split: ClassSplit) -> tuple[EmbeddingNet, TrainLog]:
    """Train an embedding network with the configured objective.

    ``source`` is the full labeled source set; rows listed as
    ``test_seen_rows`` in ``split`` are excluded here. ``target`` supplies
    the unlabeled features for the structure term; its labels, if present,
    are used only for the logged diagnostics.
    """
    cfg = config
    train_src = _drop_held_out(source, split)
    seen_targets = compute_real_centers(train_src, split.seen).centers
    seen_attrs = attrs.rows(split.seen)
    unseen_attrs = attrs.rows(split.unseen)
    if target is not None and target.d != seen_targets.shape[1]:
        raise DataError(f"source d={seen_targets.shape[1]} does not match target d={target.d}")

    net = EmbeddingNet.initialize(
        attrs.m, seen_targets.shape[1], cfg.hidden, rng=component_rng(cfg.seed, "init"),
        negative_slope=cfg.negative_slope, final_activation=cfg.final_activation,
    )
    state = AdamState.zeros_like(net, learning_rate=cfg.learning_rate, weight_decay=cfg.weight_decay)
    log = TrainLog(cfg.method, cfg.beta, cfg.weight_decay)

    clusters = None
    if cfg.method != "vcl":
        if target is None or target.n == 0:
            raise DataError(f"method {cfg.method} needs target features")
        log.clusters = kmeans(target.features, len(split.unseen), seed=component_seed(cfg.seed, "kmeans"),
                              restarts=cfg.restarts)
        clusters = log.clusters.centers.centers

    real_unseen = None
    if target is not None and target.labels is not None:
        real_unseen = compute_real_centers(target, split.unseen).centers

    nn_ab = nn_ba = pairs = None
    for epoch in range(1, cfg.epochs + 1):
        need_unseen = clusters is not None or real_unseen is not None
        syn_u = forward(net, unseen_attrs) if need_unseen else None
        if clusters is not None and (epoch - 1) % cfg.refresh_every == 0:
            if cfg.method == "cdvsc":
                _, nn_ab, nn_ba = chamfer(syn_u, clusters)
                rep = many_to_one_report(nn_ab, nn_ba)
            else:
                pairs = min_weight_perfect_matching(cost_matrix(syn_u, clusters, cfg.cost)).pairs
        if cfg.method == "cdvsc":
            log.many_to_one.append((rep.crowded_b, rep.crowded_a))
        elif cfg.method == "bmvsc":
            log.assignments.append(pairs.copy())

        spec = LossSpec(
            cfg.method, seen_attrs, seen_targets, unseen_attrs, clusters,
            beta=cfg.beta if epoch > cfg.warmup_epochs else 0.0, weight_decay=cfg.weight_decay, nn_ab=nn_ab, nn_ba=nn_ba, pairs=pairs, cost=cfg.cost,
        )
        try:
            terms, grads = loss_and_grad(net, spec)
            net, state = adam_step(net, grads, state)
        except FloatingPointError as exc:
            raise TrainingDiverged(epoch, str(exc)) from None
        log.mse.append(terms.mse)
        log.structure.append(terms.structure)
        log.reg.append(terms.reg)
        log.total.append(terms.total)
        if real_unseen is not None:
            right, dist = _match_diagnostics(syn_u, real_unseen)
            log.right_matches.append(right)
            log.center_dist.append(dist)
        if epoch == 1 or epoch % 200 == 0:
            logger.debug("epoch %d: total %.6g (mse %.6g, structure %.6g)", epoch, terms.total, terms.mse, terms.structure)
    return net, log


def train_dataset(config: TrainConfig, dataset: ZSLDataset) -> tuple[EmbeddingNet, TrainLog]:
    return train(config, dataset.source, dataset.target, dataset.attributes, dataset.split)


class BetaSelection(NamedTuple):
    beta: float
    scores: dict[float, float]


def select_beta(grid: Sequence[float], config: TrainConfig, source: LabeledFeatureSet, attrs: AttributeTable,
                split: ClassSplit, folds: int = 3) -> BetaSelection:
    """Choose the constraint weight by cross-validation over seen classes.

    Seen classes are shuffled and cut into ``folds`` groups. Each group in
    turn plays the unseen role: its features become unlabeled targets and
    the network is trained on the remaining classes for every ``beta``.
    The winner maximizes mean per-class accuracy on the held-out groups;
    ties go to the smaller ``beta``.
    """
    grid = sorted(float(b) for b in grid)
    if not grid:
        raise ValueError("beta grid is empty")
    if folds < 2:
        raise ValueError("need at least 2 folds")
    seen = np.asarray(split.seen, dtype=np.int64)
    if seen.size < 2 * folds:
        raise DataError(f"{seen.size} seen classes are too few for {folds} folds of >= 2 classes")

    train_src = _drop_held_out(source, split)
    order = component_rng(config.seed, "cv").permutation(seen)
    groups = np.array_split(order, folds)

    scores = {b: [] for b in grid}
    for fold, held in enumerate(groups):
        pseudo_unseen = tuple(held.tolist())
        pseudo_seen = tuple(c for c in order.tolist() if c not in set(pseudo_unseen))
        pseudo_split = ClassSplit(tuple(sorted(pseudo_seen, key=split.seen.index)),
                                  tuple(sorted(pseudo_unseen, key=split.seen.index)))
        in_seen = np.isin(train_src.labels, pseudo_split.seen)
        in_unseen = np.isin(train_src.labels, pseudo_split.unseen)
        fold_src = train_src.subset(np.flatnonzero(in_seen))
        truth = train_src.labels[in_unseen]
        fold_tgt = LabeledFeatureSet(train_src.features[in_unseen])
        for b in grid:
            net, _ = train(replace(config, beta=b), fold_src, fold_tgt, attrs, pseudo_split)
            pred = predict(net, attrs, pseudo_split.unseen, fold_tgt.features)
            acc = per_class_accuracy(pred, truth, pseudo_split.unseen)
            scores[b].append(acc)
            logger.debug("fold %d beta %g: accuracy %.4f", fold, b, acc)

    means = {b: float(np.mean(v)) for b, v in scores.items()}
    best = grid[0]
    for b in grid[1:]:
        if means[b] > means[best]:
            best = b
    return BetaSelection(best, means)
