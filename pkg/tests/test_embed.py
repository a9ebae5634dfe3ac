import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vsc_zsl.align import chamfer, cost_matrix, min_weight_perfect_matching
from vsc_zsl.embed import (
    AdamState,
    EmbeddingNet,
    LossSpec,
    adam_step,
    forward,
    grad_total,
    loss_total,
)


def scalar_forward(w1, w2, a, slope=0.2):
    """Straight-line re-evaluation of the two-layer map, one unit at a time."""
    m, h = w1.shape
    d = w2.shape[1]
    hidden = []
    for j in range(h):
        z = sum(a[i] * w1[i][j] for i in range(m))
        hidden.append(z if z >= 0 else slope * z)
    out = []
    for k in range(d):
        z = sum(hidden[j] * w2[j][k] for j in range(h))
        out.append(z if z >= 0 else slope * z)
    return out


def random_spec(rng, method, m=5, h=8, d=6, S=4, U=3, cost="squared", weight_decay=0.01):
    net = EmbeddingNet(rng.standard_normal((m, h)), rng.standard_normal((h, d)))
    seen_attrs = rng.standard_normal((S, m))
    seen_targets = rng.standard_normal((S, d))
    unseen_attrs = rng.standard_normal((U, m))
    clusters = rng.standard_normal((U, d))
    out_u = forward(net, unseen_attrs)
    _, nn_ab, nn_ba = chamfer(out_u, clusters)
    pairs = min_weight_perfect_matching(cost_matrix(out_u, clusters, cost)).pairs
    spec = LossSpec(method, seen_attrs, seen_targets, unseen_attrs, clusters, beta=0.7,
                    weight_decay=weight_decay, nn_ab=nn_ab, nn_ba=nn_ba, pairs=pairs, cost=cost)
    return net, spec


def finite_difference(net, spec, step=1e-5):
    grads = []
    for name in ("w1", "w2"):
        w = getattr(net, name)
        g = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            plus, minus = net.copy(), net.copy()
            getattr(plus, name)[idx] += step
            getattr(minus, name)[idx] -= step
            g[idx] = (loss_total(plus, spec).total - loss_total(minus, spec).total) / (2 * step)
        grads.append(g)
    return grads


def max_rel_error(analytic, numeric, floor=1e-8):
    return max(float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))
               for a, n in zip(analytic, numeric))


class TestForward:
    def test_zero_weights_give_zero_output(self):
        net = EmbeddingNet(np.zeros((3, 4)), np.zeros((4, 2)))
        np.testing.assert_array_equal(forward(net, np.ones((5, 3))), np.zeros((5, 2)))

    def test_identity_hand_trace(self):
        net = EmbeddingNet(np.eye(2), np.eye(2))
        np.testing.assert_allclose(forward(net, [[1.0, -1.0]]), [[1.0, -0.04]], atol=1e-15)

    def test_matches_scalar_loop(self, rng):
        net = EmbeddingNet(rng.standard_normal((5, 7)), rng.standard_normal((7, 4)))
        a = rng.standard_normal(5)
        np.testing.assert_allclose(forward(net, a[None, :])[0], scalar_forward(net.w1, net.w2, a), atol=1e-12)

    def test_without_final_activation(self):
        net = EmbeddingNet(np.eye(2), np.eye(2), final_activation=False)
        np.testing.assert_allclose(forward(net, [[1.0, -1.0]]), [[1.0, -0.2]], atol=1e-15)

    def test_attribute_width_checked(self, rng):
        net = EmbeddingNet(rng.standard_normal((3, 4)), rng.standard_normal((4, 2)))
        with pytest.raises(ValueError):
            forward(net, np.ones((2, 5)))

    def test_init_bounds_and_default_width(self, rng):
        net = EmbeddingNet.initialize(16, 32, rng=rng)
        assert net.h == 32
        assert np.max(np.abs(net.w1)) <= 1 / np.sqrt(16)
        assert np.max(np.abs(net.w2)) <= 1 / np.sqrt(32)

    def test_json_round_trip(self, tmp_path, rng):
        net = EmbeddingNet(rng.standard_normal((3, 4)), rng.standard_normal((4, 2)), final_activation=False)
        net.save(tmp_path / "m.json")
        back = EmbeddingNet.load(tmp_path / "m.json")
        np.testing.assert_array_equal(back.w1, net.w1)
        np.testing.assert_array_equal(back.w2, net.w2)
        assert back.final_activation is False


class TestGradients:
    @pytest.mark.parametrize("method,cost", [("vcl", "squared"), ("cdvsc", "squared"),
                                             ("bmvsc", "squared"), ("bmvsc", "euclidean")])
    def test_finite_differences(self, method, cost):
        rng = np.random.default_rng(7)
        for _ in range(5):
            net, spec = random_spec(rng, method, cost=cost)
            assert max_rel_error(grad_total(net, spec), finite_difference(net, spec)) <= 1e-3

    def test_zero_at_exact_fit(self, rng):
        net = EmbeddingNet(rng.standard_normal((3, 5)), rng.standard_normal((5, 4)))
        attrs = rng.standard_normal((6, 3))
        spec = LossSpec("vcl", attrs, forward(net, attrs))
        for g in grad_total(net, spec):
            np.testing.assert_array_equal(g, 0.0)

    def test_pure_regularizer(self):
        net = EmbeddingNet(np.eye(2), np.eye(2))
        attrs = np.zeros((1, 2))
        spec = LossSpec("vcl", attrs, np.zeros((1, 2)), weight_decay=0.3)
        g1, g2 = grad_total(net, spec)
        np.testing.assert_allclose(g1, 0.6 * net.w1)
        np.testing.assert_allclose(g2, 0.6 * net.w2)

    def test_decomposition(self, rng):
        net, spec = random_spec(rng, "bmvsc")
        t = loss_total(net, spec)
        assert t.total == pytest.approx(t.mse + spec.beta * t.structure + spec.weight_decay * t.reg, abs=1e-9)
        assert t.reg == pytest.approx(np.sum(net.w1**2) + np.sum(net.w2**2))

    def test_mse_averages_over_seen_classes(self):
        net = EmbeddingNet(np.zeros((2, 2)), np.zeros((2, 2)))
        spec = LossSpec("vcl", np.ones((2, 2)), np.array([[1.0, 0.0], [0.0, 3.0]]))
        assert loss_total(net, spec).mse == pytest.approx(5.0)


class TestAdam:
    def test_zero_gradient_from_zero_moments_is_fixed_point(self, rng):
        net = EmbeddingNet(rng.standard_normal((3, 4)), rng.standard_normal((4, 2)))
        state = AdamState.zeros_like(net, learning_rate=0.1)
        new, _ = adam_step(net, (np.zeros((3, 4)), np.zeros((4, 2))), state)
        np.testing.assert_array_equal(new.w1, net.w1)
        np.testing.assert_array_equal(new.w2, net.w2)

    def test_first_step_moves_by_learning_rate(self):
        net = EmbeddingNet([[1.0]], [[1.0]])
        state = AdamState.zeros_like(net, learning_rate=0.1)
        new, state = adam_step(net, ([[1.0]], [[1.0]]), state)
        # m_hat = v_hat = 1 after bias correction
        assert new.w1[0, 0] == pytest.approx(1 - 0.1 / (1 + 1e-8), abs=1e-15)
        assert state.step == 1

    def test_deterministic_and_non_mutating(self, rng):
        net = EmbeddingNet(rng.standard_normal((3, 4)), rng.standard_normal((4, 2)))
        grads = (rng.standard_normal((3, 4)), rng.standard_normal((4, 2)))
        state = AdamState.zeros_like(net, learning_rate=0.01)
        before = net.w1.copy()
        a, sa = adam_step(net, grads, state)
        b, sb = adam_step(net, grads, state)
        np.testing.assert_array_equal(a.w1, b.w1)
        np.testing.assert_array_equal(sa.v2, sb.v2)
        np.testing.assert_array_equal(net.w1, before)
        assert state.step == 0

    def test_non_finite_gradient_rejected(self):
        net = EmbeddingNet([[1.0]], [[1.0]])
        with pytest.raises(FloatingPointError):
            adam_step(net, ([[np.nan]], [[0.0]]), AdamState.zeros_like(net))

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-10, 10), st.floats(1e-3, 1e3), st.floats(1e-4, 0.5))
    def test_first_step_bounded_by_learning_rate(self, w, g, lr):
        net = EmbeddingNet([[w]], [[1.0]])
        new, _ = adam_step(net, ([[g]], [[0.0]]), AdamState.zeros_like(net, learning_rate=lr))
        assert abs(new.w1[0, 0] - w) <= lr * (1 + 1e-9)
