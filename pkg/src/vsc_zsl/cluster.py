"""K-means over unlabeled target features, and the voting upper bound."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from vsc_zsl.dataset import CenterSet, DataError
from vsc_zsl.evaluation import per_class_accuracy

logger = logging.getLogger(__name__)

# slack for float round-off when checking that inertia never increases
_MONOTONE_RTOL = 1e-12


@dataclass(frozen=True)
class KMeansResult:
    centers: CenterSet
    assignments: np.ndarray
    inertia: float
    n_iter: int
    history: tuple[float, ...] = field(default=(), repr=False)
    run_histories: tuple[tuple[float, ...], ...] = field(default=(), repr=False)


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - c[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _assign(x, centers):
    dist = _sq_dists(x, centers)
    labels = np.argmin(dist, axis=1)  # first minimum: ties go to the lowest index
    return labels, dist[np.arange(x.shape[0]), labels]


def _plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy k-means++: each pick samples a few D^2-weighted candidates and
    keeps the one that lowers the potential most."""
    n = x.shape[0]
    trials = 2 + int(np.log(k))
    chosen = [int(rng.integers(n))]
    closest = _sq_dists(x, x[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            cand = rng.choice(n, size=trials, p=closest / total)
        else:
            cand = rng.integers(n, size=trials)
        pots = np.minimum(closest[None, :], _sq_dists(x[cand], x))
        best = int(np.argmin(pots.sum(axis=1)))
        chosen.append(int(cand[best]))
        closest = pots[best]
    return x[chosen].copy()


def _update(x, labels, point_dists, k, centers):
    """Cluster means; an empty cluster jumps to the point farthest from its center."""
    new = centers.copy()
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts):
        new[j] = x[labels == j].mean(axis=0)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        far = point_dists.copy()
        for j in empty:
            idx = int(np.argmax(far))
            if far[idx] == 0:
                break  # fewer distinct points than clusters
            new[j] = x[idx]
            far = np.minimum(far, _sq_dists(x, x[idx:idx + 1])[:, 0])
    return new, bool(empty.size)


def _lloyd(x, k, rng, max_iter):
    centers = _plusplus(x, k, rng)
    labels, dists = _assign(x, centers)
    inertia = float(dists.sum())
    history = [inertia]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        centers, repaired = _update(x, labels, dists, k, centers)
        new_labels, dists = _assign(x, centers)
        new_inertia = float(dists.sum())
        assert new_inertia <= inertia + _MONOTONE_RTOL * max(1.0, inertia), (
            f"inertia increased at iteration {n_iter}: {inertia} -> {new_inertia}"
        )
        history.append(new_inertia)
        inertia = new_inertia
        done = not repaired and np.array_equal(new_labels, labels)
        labels = new_labels
        if done:
            break
    return centers, labels, inertia, n_iter, tuple(history)


def kmeans(features, k: int, seed: int | np.random.SeedSequence = 0, restarts: int = 10, max_iter: int = 300) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding, best of ``restarts`` by inertia.

    Each restart draws from its own child of ``seed``, so the result does
    not depend on the order restarts are executed in; equal inertia keeps
    the earliest restart.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise DataError(f"features must be a matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DataError("features contain non-finite values")
    n = x.shape[0]
    if not 1 <= k <= n:
        raise DataError(f"need 1 <= k <= N, got k={k}, N={n}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")

    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    best = None
    histories = []
    for r, child in enumerate(root.spawn(restarts)):
        run = _lloyd(x, k, np.random.default_rng(child), max_iter)
        histories.append(run[4])
        if best is None or run[2] < best[2]:
            best = run
        logger.debug("k-means restart %d: inertia %.6g after %d iterations", r, run[2], run[3])
    centers, labels, inertia, n_iter, history = best
    return KMeansResult(CenterSet(centers), labels, inertia, n_iter, history, tuple(histories))


def voting_upper_bound(clusters, true_labels) -> float:
    """Per-class accuracy when every cluster is labeled by its majority class.

    This uses the ground truth, so it bounds what any labeling of the
    clusters can reach. Majority ties go to the smallest class id.
    """
    if true_labels is None:
        raise DataError("voting upper bound needs ground-truth labels")
    clusters = np.asarray(clusters, dtype=np.int64).reshape(-1)
    truth = np.asarray(true_labels, dtype=np.int64).reshape(-1)
    if clusters.shape != truth.shape:
        raise DataError(f"{clusters.size} cluster assignments for {truth.size} labels")
    pred = np.empty_like(truth)
    for c in np.unique(clusters):
        members = clusters == c
        ids, counts = np.unique(truth[members], return_counts=True)
        pred[members] = ids[np.argmax(counts)]
    return per_class_accuracy(pred, truth, np.unique(truth))
