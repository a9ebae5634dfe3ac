"""Nearest-synthetic-center prediction and ZSL scoring."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from vsc_zsl.dataset import AttributeTable, ClassSplit, DataError, ZSLDataset, compute_real_centers
from vsc_zsl.embed import EmbeddingNet, forward


def nearest_center(features, centers: np.ndarray, class_ids: Sequence[int]) -> np.ndarray:
    """Label of the Euclidean-nearest center; ties go to the earliest center."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != centers.shape[1]:
        raise DataError(f"features have d={x.shape[-1]}, centers have d={centers.shape[1]}")
    diff = x[:, None, :] - centers[None, :, :]
    dist = np.einsum("ijk,ijk->ij", diff, diff)
    return np.asarray(class_ids, dtype=np.int64)[np.argmin(dist, axis=1)]


def predict(net: EmbeddingNet, attrs: AttributeTable, candidate_classes: Sequence[int], features) -> np.ndarray:
    """Assign each feature row the candidate class whose synthetic center is nearest."""
    candidates = [int(c) for c in candidate_classes]
    if not candidates:
        raise DataError("empty candidate class set")
    if attrs.m != net.m:
        raise DataError(f"attribute dimension m={attrs.m} does not match model m={net.m}")
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.d:
        raise DataError(f"feature dimension d={x.shape[-1]} does not match model d={net.d}")
    centers = forward(net, attrs.rows(candidates))
    return nearest_center(x, centers, candidates)


def per_class_accuracy(pred, truth, classes: Sequence[int]) -> float:
    """Mean over ``classes`` of the fraction of that class's samples predicted correctly."""
    pred = np.asarray(pred).reshape(-1)
    truth = np.asarray(truth).reshape(-1)
    if pred.shape != truth.shape:
        raise DataError(f"{pred.size} predictions for {truth.size} labels")
    classes = list(classes)
    if not classes:
        raise DataError("no classes to score")
    unknown = set(np.unique(truth).tolist()) - set(int(c) for c in classes)
    if unknown:
        raise DataError(f"true labels outside the scored classes: {sorted(unknown)}")
    accs = []
    for c in classes:
        mask = truth == c
        if not mask.any():
            raise DataError(f"class {c} has no test samples")
        accs.append(np.mean(pred[mask] == c))
    return float(np.mean(accs))


def harmonic_mean(acc_u: float, acc_s: float) -> float:
    """Harmonic mean of unseen and seen accuracy; 0 when both are 0."""
    if acc_u < 0 or acc_s < 0:
        raise ValueError(f"accuracies must be non-negative, got {acc_u}, {acc_s}")
    if acc_u + acc_s == 0:
        return 0.0
    return 2.0 * acc_u * acc_s / (acc_u + acc_s)


def _unseen_truth(dataset: ZSLDataset) -> np.ndarray:
    if dataset.target.labels is None:
        raise DataError("evaluation needs unseen labels (labels_unseen.csv)")
    return dataset.target.labels


def evaluate_conventional(net: EmbeddingNet, dataset: ZSLDataset, split: ClassSplit | None = None) -> float:
    """Per-class accuracy on target instances, choosing among unseen classes only."""
    split = split or dataset.split
    truth = _unseen_truth(dataset)
    pred = predict(net, dataset.attributes, split.unseen, dataset.target.features)
    return per_class_accuracy(pred, truth, split.unseen)


@dataclass(frozen=True)
class GeneralizedResult:
    acc_u: float
    acc_s: float
    H: float


def evaluate_generalized(net: EmbeddingNet, dataset: ZSLDataset, split: ClassSplit | None = None,
                         seen_centers: str = "synthetic") -> GeneralizedResult:
    """Score unseen target instances and held-out seen instances against all classes.

    Args:
        seen_centers: ``"synthetic"`` projects seen attributes like unseen
            ones; ``"real"`` uses the means of the seen training instances.
    """
    split = split or dataset.split
    if not split.test_seen_instances:
        raise DataError("generalized evaluation needs test_seen_rows in split.txt")
    truth_u = _unseen_truth(dataset)
    classes = list(split.all_classes)
    if seen_centers == "synthetic":
        # predict() raises if any candidate is missing from the attribute table
        pred_u = predict(net, dataset.attributes, classes, dataset.target.features)
        test_seen = dataset.source.subset(split.test_seen_instances)
        pred_s = predict(net, dataset.attributes, classes, test_seen.features)
    elif seen_centers == "real":
        real = compute_real_centers(dataset._replace(split=split).train_source(), split.seen).centers
        if real.shape[1] != net.d:
            raise DataError(f"feature dimension d={real.shape[1]} does not match model d={net.d}")
        centers = np.vstack([real, forward(net, dataset.attributes.rows(split.unseen))])
        pred_u = nearest_center(dataset.target.features, centers, classes)
        test_seen = dataset.source.subset(split.test_seen_instances)
        pred_s = nearest_center(test_seen.features, centers, classes)
    else:
        raise ValueError(f"seen_centers must be 'synthetic' or 'real', got {seen_centers!r}")
    acc_u = per_class_accuracy(pred_u, truth_u, split.unseen)
    acc_s = per_class_accuracy(pred_s, test_seen.labels, sorted(set(test_seen.labels.tolist()), key=split.seen.index))
    return GeneralizedResult(acc_u, acc_s, harmonic_mean(acc_u, acc_s))
