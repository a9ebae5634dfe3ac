"""Alignment between synthetic centers and cluster centers.

Two ways of pairing the sets are provided: the symmetric Chamfer distance,
whose nearest-neighbour pairing may be many-to-one, and an exact
min-weight perfect matching, which is always one-to-one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from vsc_zsl.dataset import CenterSet


def _points(x, name: str) -> np.ndarray:
    arr = x.centers if isinstance(x, CenterSet) else np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError(f"{name} must be a non-empty set of points, got shape {arr.shape}")
    return arr


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # explicit differences rather than the |a|^2 - 2ab + |b|^2 expansion:
    # exact zeros on coincident points and never negative
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def chamfer(a, b) -> tuple[float, np.ndarray, np.ndarray]:
    """Symmetric Chamfer distance with squared Euclidean point distances.

    Returns:
        ``(loss, nn_ab, nn_ba)`` where ``nn_ab[i]`` indexes the point of ``b``
        nearest to ``a[i]`` and ``nn_ba[j]`` the point of ``a`` nearest to
        ``b[j]``. Ties go to the lowest index.
    """
    a, b = _points(a, "A"), _points(b, "B")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    dist = _sq_dists(a, b)
    nn_ab = np.argmin(dist, axis=1)
    nn_ba = np.argmin(dist, axis=0)
    loss = float(dist[np.arange(a.shape[0]), nn_ab].sum() + dist[nn_ba, np.arange(b.shape[0])].sum())
    return loss, nn_ab, nn_ba


def cost_matrix(a, b, cost: str = "squared") -> np.ndarray:
    """Pairwise distances ``D[i, j] = |a_i - b_j|^2`` (or unsquared)."""
    a, b = _points(a, "A"), _points(b, "B")
    if a.shape != b.shape:
        raise ValueError(f"cost matrix needs equal-size sets of equal dimension, got {a.shape} and {b.shape}")
    dist = _sq_dists(a, b)
    if cost == "squared":
        return dist
    if cost == "euclidean":
        return np.sqrt(dist)
    raise ValueError(f"unknown cost {cost!r}")


@dataclass(frozen=True)
class Assignment:
    """One-to-one matching: row ``i`` is paired with column ``pairs[i]``."""

    pairs: np.ndarray
    total_cost: float

    def matrix(self) -> np.ndarray:
        n = self.pairs.shape[0]
        x = np.zeros((n, n))
        x[np.arange(n), self.pairs] = 1.0
        return x

    def is_permutation(self) -> bool:
        n = self.pairs.shape[0]
        return bool(np.array_equal(np.sort(self.pairs), np.arange(n)))


def _check_square(d) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] == 0:
        raise ValueError(f"cost matrix must be square and non-empty, got shape {d.shape}")
    if not np.all(np.isfinite(d)):
        raise ValueError("cost matrix has non-finite entries")
    return d


def min_weight_perfect_matching(d) -> Assignment:
    """Exact min-cost perfect matching on a square cost matrix.

    Hungarian method in its shortest-augmenting-path form with row and
    column potentials, O(n^3). Rows are inserted one at a time; each
    insertion grows a Dijkstra-like tree over columns on reduced costs
    until it reaches a free column, then flips the alternating path.
    """
    d = _check_square(d)
    n = d.shape[0]
    inf = np.inf
    u = np.zeros(n + 1)             # row potentials, 1-based
    v = np.zeros(n + 1)             # column potentials, column 0 is virtual
    owner = np.zeros(n + 1, dtype=np.int64)  # owner[j]: row matched to column j (0 = free)
    way = np.zeros(n + 1, dtype=np.int64)
    cost = np.zeros((n + 1, n + 1))
    cost[1:, 1:] = d

    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used
            free[0] = False
            reduced = cost[i0] - u[i0] - v
            better = free & (reduced < minv)
            minv[better] = reduced[better]
            way[better] = j0
            cand = np.where(free, minv, inf)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1

    pairs = np.empty(n, dtype=np.int64)
    pairs[owner[1:] - 1] = np.arange(n)
    return Assignment(pairs, float(d[np.arange(n), pairs].sum()))


def matching_loss(d, x: Assignment) -> float:
    """Sum of the costs selected by the assignment, ``1^T (X o D) 1``."""
    d = _check_square(d)
    pairs = np.asarray(x.pairs, dtype=np.int64)
    if pairs.shape != (d.shape[0],) or not x.is_permutation():
        raise ValueError("assignment is not a permutation matching the cost matrix")
    return float(d[np.arange(d.shape[0]), pairs].sum())


@dataclass(frozen=True)
class ManyToOneReport:
    """Collision counts of a nearest-neighbour pairing.

    ``hits_ab[j]`` counts the points of A whose nearest neighbour is B_j;
    ``crowded_b`` is how many B points received two or more (and the
    mirror for the other direction).
    """

    hits_ab: np.ndarray
    hits_ba: np.ndarray
    crowded_b: int
    crowded_a: int
    is_one_to_one: bool

    def lines(self) -> list[str]:
        out = [
            f"A->B targets hit more than once: {self.crowded_b}",
            f"B->A targets hit more than once: {self.crowded_a}",
            f"one-to-one: {'yes' if self.is_one_to_one else 'no'}",
        ]
        for j, hits in enumerate(self.hits_ab.tolist()):
            if hits >= 2:
                out.append(f"  B[{j}] is nearest to {hits} points of A")
        for i, hits in enumerate(self.hits_ba.tolist()):
            if hits >= 2:
                out.append(f"  A[{i}] is nearest to {hits} points of B")
        return out


def many_to_one_report(nn_ab, nn_ba) -> ManyToOneReport:
    nn_ab = np.asarray(nn_ab, dtype=np.int64)
    nn_ba = np.asarray(nn_ba, dtype=np.int64)
    n_a, n_b = nn_ab.shape[0], nn_ba.shape[0]
    hits_ab = np.bincount(nn_ab, minlength=n_b)
    hits_ba = np.bincount(nn_ba, minlength=n_a)
    one_to_one = (
        n_a == n_b
        and bool(np.all(hits_ab == 1))
        and bool(np.all(hits_ba == 1))
        and bool(np.array_equal(nn_ba[nn_ab], np.arange(n_a)))
    )
    return ManyToOneReport(hits_ab, hits_ba, int(np.sum(hits_ab >= 2)), int(np.sum(hits_ba >= 2)), one_to_one)
