"""Two-layer attribute-to-visual embedding network, its losses and Adam.

The network maps a class attribute vector ``a`` to a synthetic visual
center ``leaky(leaky(a @ w1) @ w2)``. There are no bias terms. Gradients
are written out by hand; the combinatorial parts of the structure losses
(Chamfer nearest neighbours, matching assignment) enter as constants.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

METHODS = ("vcl", "cdvsc", "bmvsc")
COSTS = ("squared", "euclidean")


def leaky_relu(z: np.ndarray, negative_slope: float) -> np.ndarray:
    return np.where(z >= 0, z, negative_slope * z)


def _leaky_grad(z: np.ndarray, negative_slope: float) -> np.ndarray:
    return np.where(z >= 0, 1.0, negative_slope)


@dataclass
class EmbeddingNet:
    """Weights ``w1`` (m x h) and ``w2`` (h x d) of the embedding network.

    ``final_activation=False`` drops the output Leaky ReLU, for ablations.
    """

    w1: np.ndarray
    w2: np.ndarray
    negative_slope: float = 0.2
    final_activation: bool = True

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        if self.w1.ndim != 2 or self.w2.ndim != 2:
            raise ValueError("weights must be matrices")
        if self.w1.shape[1] != self.w2.shape[0]:
            raise ValueError(f"hidden width mismatch: w1 is {self.w1.shape}, w2 is {self.w2.shape}")
        if not 0 < self.negative_slope < 1:
            raise ValueError(f"negative_slope must lie in (0, 1), got {self.negative_slope}")
        if not (np.all(np.isfinite(self.w1)) and np.all(np.isfinite(self.w2))):
            raise ValueError("weights must be finite")

    @property
    def m(self) -> int:
        return self.w1.shape[0]

    @property
    def h(self) -> int:
        return self.w1.shape[1]

    @property
    def d(self) -> int:
        return self.w2.shape[1]

    @classmethod
    def initialize(cls, m: int, d: int, h: int | None = None, *, rng: np.random.Generator,
                   negative_slope: float = 0.2, final_activation: bool = True) -> EmbeddingNet:
        """Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; ``h`` defaults to ``d``."""
        h = d if h is None else h
        if min(m, h, d) < 1:
            raise ValueError("network dimensions must be positive")
        w1 = rng.uniform(-1.0, 1.0, size=(m, h)) / np.sqrt(m)
        w2 = rng.uniform(-1.0, 1.0, size=(h, d)) / np.sqrt(h)
        return cls(w1, w2, negative_slope, final_activation)

    def copy(self) -> EmbeddingNet:
        return replace(self, w1=self.w1.copy(), w2=self.w2.copy())

    def to_dict(self) -> dict:
        return {
            "m": self.m, "h": self.h, "d": self.d,
            "negative_slope": self.negative_slope,
            "final_activation": self.final_activation,
            "w1": self.w1.tolist(), "w2": self.w2.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> EmbeddingNet:
        try:
            m, h, d = int(doc["m"]), int(doc["h"]), int(doc["d"])
            w1 = np.asarray(doc["w1"], dtype=np.float64)
            w2 = np.asarray(doc["w2"], dtype=np.float64)
            slope = float(doc["negative_slope"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed model document: {exc}") from None
        if w1.shape != (m, h) or w2.shape != (h, d):
            raise ValueError(f"model weights have shapes {w1.shape}, {w2.shape}; header says m={m}, h={h}, d={d}")
        return cls(w1, w2, slope, bool(doc.get("final_activation", True)))

    def save(self, path) -> None:
        # json writes floats with repr, so the round trip is exact
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> EmbeddingNet:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _check_attrs(net: EmbeddingNet, attrs) -> np.ndarray:
    attrs = np.asarray(attrs, dtype=np.float64)
    if attrs.ndim == 1:
        attrs = attrs[None, :]
    if attrs.ndim != 2 or attrs.shape[1] != net.m:
        raise ValueError(f"attribute matrix has {attrs.shape[-1]} columns, network expects m={net.m}")
    return attrs


def _forward_cache(net: EmbeddingNet, attrs: np.ndarray):
    z1 = attrs @ net.w1
    hidden = leaky_relu(z1, net.negative_slope)
    z2 = hidden @ net.w2
    out = leaky_relu(z2, net.negative_slope) if net.final_activation else z2
    return z1, hidden, z2, out


def forward(net: EmbeddingNet, attrs) -> np.ndarray:
    """Synthetic centers (K x d) for a K x m attribute matrix."""
    return _forward_cache(net, _check_attrs(net, attrs))[3]


def _backprop(net: EmbeddingNet, attrs, cache, d_out):
    z1, hidden, z2, _ = cache
    d_z2 = d_out * _leaky_grad(z2, net.negative_slope) if net.final_activation else d_out
    g2 = hidden.T @ d_z2
    d_z1 = (d_z2 @ net.w2.T) * _leaky_grad(z1, net.negative_slope)
    g1 = attrs.T @ d_z1
    return g1, g2


@dataclass
class LossSpec:
    """Everything one evaluation of the training objective needs.

    ``seen_targets`` are the real seen centers. For ``cdvsc``, ``nn_ab[i]``
    is the cluster center nearest to synthetic center ``i`` and
    ``nn_ba[j]`` the synthetic center nearest to cluster center ``j``. For
    ``bmvsc``, ``pairs[i]`` is the cluster center assigned to synthetic
    center ``i``. These indices are held fixed when differentiating.
    """

    method: str
    seen_attrs: np.ndarray
    seen_targets: np.ndarray
    unseen_attrs: np.ndarray | None = None
    cluster_centers: np.ndarray | None = None
    beta: float = 0.0
    weight_decay: float = 0.0
    nn_ab: np.ndarray | None = None
    nn_ba: np.ndarray | None = None
    pairs: np.ndarray | None = None
    cost: str = "squared"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.cost not in COSTS:
            raise ValueError(f"unknown cost {self.cost!r}; expected one of {COSTS}")
        if self.method != "vcl":
            if self.unseen_attrs is None or self.cluster_centers is None:
                raise ValueError(f"{self.method} needs unseen attributes and cluster centers")
            if self.method == "cdvsc" and (self.nn_ab is None or self.nn_ba is None):
                raise ValueError("cdvsc needs frozen nearest-neighbour indices")
            if self.method == "bmvsc" and self.pairs is None:
                raise ValueError("bmvsc needs a frozen assignment")

    @property
    def has_structure(self) -> bool:
        return self.method != "vcl"


@dataclass(frozen=True)
class LossTerms:
    mse: float
    structure: float
    reg: float
    total: float


def _structure_value_and_grad(spec: LossSpec, out_u: np.ndarray):
    targets = np.asarray(spec.cluster_centers, dtype=np.float64)
    if targets.shape[1] != out_u.shape[1]:
        raise ValueError(f"cluster centers have d={targets.shape[1]}, network outputs d={out_u.shape[1]}")
    if spec.method == "cdvsc":
        nn_ab = np.asarray(spec.nn_ab, dtype=np.int64)
        nn_ba = np.asarray(spec.nn_ba, dtype=np.int64)
        diff_ab = out_u - targets[nn_ab]
        diff_ba = out_u[nn_ba] - targets
        value = float(np.sum(diff_ab**2) + np.sum(diff_ba**2))
        grad = 2.0 * diff_ab
        np.add.at(grad, nn_ba, 2.0 * diff_ba)
        return value, grad
    pairs = np.asarray(spec.pairs, dtype=np.int64)
    diff = out_u - targets[pairs]
    if spec.cost == "squared":
        return float(np.sum(diff**2)), 2.0 * diff
    norms = np.linalg.norm(diff, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return float(norms.sum()), np.where(norms > 0, diff / safe, 0.0)


def _evaluate(net: EmbeddingNet, spec: LossSpec, want_grad: bool):
    seen_attrs = _check_attrs(net, spec.seen_attrs)
    targets = np.asarray(spec.seen_targets, dtype=np.float64)
    cache_s = _forward_cache(net, seen_attrs)
    if targets.shape != cache_s[3].shape:
        raise ValueError(f"seen targets have shape {targets.shape}, network outputs {cache_s[3].shape}")
    n_seen = seen_attrs.shape[0]
    diff = cache_s[3] - targets
    mse = float(np.sum(diff**2) / n_seen)
    reg = float(np.sum(net.w1**2) + np.sum(net.w2**2))

    structure = 0.0
    grads = None
    if want_grad:
        g1, g2 = _backprop(net, seen_attrs, cache_s, (2.0 / n_seen) * diff)
    if spec.has_structure:
        unseen_attrs = _check_attrs(net, spec.unseen_attrs)
        cache_u = _forward_cache(net, unseen_attrs)
        structure, d_out_u = _structure_value_and_grad(spec, cache_u[3])
        # blocks are backpropagated separately: with beta == 0 the result is
        # bit-identical to the structure-free objective
        if want_grad and spec.beta != 0:
            u1, u2 = _backprop(net, unseen_attrs, cache_u, spec.beta * d_out_u)
            g1 = g1 + u1
            g2 = g2 + u2
    if want_grad and spec.weight_decay != 0:
        g1 = g1 + 2.0 * spec.weight_decay * net.w1
        g2 = g2 + 2.0 * spec.weight_decay * net.w2

    total = mse + (spec.beta * structure if spec.has_structure else 0.0) + spec.weight_decay * reg
    terms = LossTerms(mse, structure, reg, total)
    if not np.isfinite(total):
        raise FloatingPointError(f"non-finite loss: {terms}")
    if want_grad:
        if not (np.all(np.isfinite(g1)) and np.all(np.isfinite(g2))):
            raise FloatingPointError("non-finite gradient")
        grads = (g1, g2)
    return terms, grads


def loss_total(net: EmbeddingNet, spec: LossSpec) -> LossTerms:
    """Objective value: mse + beta * structure + weight_decay * sum of squared weights."""
    return _evaluate(net, spec, want_grad=False)[0]


def grad_total(net: EmbeddingNet, spec: LossSpec) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of :func:`loss_total` with respect to ``(w1, w2)``."""
    return _evaluate(net, spec, want_grad=True)[1]


def loss_and_grad(net: EmbeddingNet, spec: LossSpec):
    return _evaluate(net, spec, want_grad=True)


@dataclass
class AdamState:
    """Adam moments for (w1, w2). The L2 penalty lives in the loss, not here."""

    m1: np.ndarray
    m2: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    step: int = 0
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 5e-4

    @classmethod
    def zeros_like(cls, net: EmbeddingNet, **hyper) -> AdamState:
        return cls(np.zeros_like(net.w1), np.zeros_like(net.w2),
                   np.zeros_like(net.w1), np.zeros_like(net.w2), **hyper)


def adam_step(net: EmbeddingNet, grads, state: AdamState) -> tuple[EmbeddingNet, AdamState]:
    """One bias-corrected Adam update. Inputs are left untouched."""
    g1, g2 = (np.asarray(g, dtype=np.float64) for g in grads)
    if g1.shape != net.w1.shape or g2.shape != net.w2.shape:
        raise ValueError("gradient shapes do not match the weights")
    if state.m1.shape != net.w1.shape or state.m2.shape != net.w2.shape:
        raise ValueError("optimizer state shapes do not match the weights")
    if not (np.all(np.isfinite(g1)) and np.all(np.isfinite(g2))):
        raise FloatingPointError("non-finite gradient")

    b1, b2 = state.beta1, state.beta2
    step = state.step + 1
    m1 = b1 * state.m1 + (1 - b1) * g1
    m2 = b1 * state.m2 + (1 - b1) * g2
    v1 = b2 * state.v1 + (1 - b2) * g1**2
    v2 = b2 * state.v2 + (1 - b2) * g2**2
    c1 = 1 - b1**step
    c2 = 1 - b2**step
    w1 = net.w1 - state.learning_rate * (m1 / c1) / (np.sqrt(v1 / c2) + state.epsilon)
    w2 = net.w2 - state.learning_rate * (m2 / c1) / (np.sqrt(v2 / c2) + state.epsilon)
    return replace(net, w1=w1, w2=w2), replace(state, m1=m1, m2=m2, v1=v1, v2=v2, step=step)
