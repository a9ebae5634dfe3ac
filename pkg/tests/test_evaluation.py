import numpy as np
import pytest

from vsc_zsl.dataset import AttributeTable, ClassSplit, DataError, LabeledFeatureSet, ZSLDataset
from vsc_zsl.embed import EmbeddingNet, forward
from vsc_zsl.evaluation import (
    evaluate_conventional,
    evaluate_generalized,
    harmonic_mean,
    per_class_accuracy,
    predict,
)


def toy(rng, net, per_class=4):
    """Seen 0,1 and unseen 2,3 whose instances sit on their synthetic centers."""
    attrs = AttributeTable(rng.standard_normal((4, net.m)), (0, 1, 2, 3))
    centers = forward(net, attrs.attributes)
    labels = np.repeat([0, 1], per_class)
    src = LabeledFeatureSet(centers[labels], labels)
    ulabels = np.repeat([2, 3], per_class)
    tgt = LabeledFeatureSet(centers[ulabels], ulabels)
    split = ClassSplit((0, 1), (2, 3), test_seen_instances=(0, per_class))
    return ZSLDataset(src, tgt, attrs, split)


@pytest.fixture
def net(rng):
    return EmbeddingNet(rng.standard_normal((3, 5)), rng.standard_normal((5, 4)))


class TestPerClassAccuracy:
    def test_mixed(self):
        pred = [0, 0, 0, 1, 1, 0]
        truth = [0, 0, 0, 0, 1, 1]
        assert per_class_accuracy(pred, truth, [0, 1]) == 0.625

    def test_all_correct(self):
        assert per_class_accuracy([3, 4], [3, 4], [3, 4]) == 1.0

    def test_imbalanced(self):
        truth = np.array([0] * 100 + [1])
        pred = np.array([0] * 99 + [1] + [0])
        assert per_class_accuracy(pred, truth, [0, 1]) == pytest.approx(0.495)
        assert np.mean(pred == truth) == pytest.approx(0.980, abs=1e-3)

    def test_unknown_truth_label(self):
        with pytest.raises(DataError):
            per_class_accuracy([0], [9], [0])


class TestHarmonicMean:
    def test_reported_pairs(self):
        assert harmonic_mean(71.9, 88.2) == pytest.approx(79.2, abs=0.1)
        assert harmonic_mean(66.9, 88.1) == pytest.approx(76.0, abs=0.1)

    def test_zero_unseen(self):
        assert harmonic_mean(0.0, 84.7) == 0.0
        assert harmonic_mean(0.0, 0.0) == 0.0

    @pytest.mark.parametrize("x", [0.1, 0.5, 42.0])
    def test_idempotent(self, x):
        assert harmonic_mean(x, x) == pytest.approx(x)


class TestPredict:
    def test_feature_on_center(self, rng, net):
        data = toy(rng, net)
        centers = forward(net, data.attributes.rows([2, 3]))
        assert predict(net, data.attributes, [2, 3], centers).tolist() == [2, 3]

    def test_single_candidate(self, rng, net):
        data = toy(rng, net)
        assert set(predict(net, data.attributes, [1], rng.standard_normal((9, 4))).tolist()) == {1}

    def test_matches_loop_oracle(self, rng):
        net = EmbeddingNet(rng.standard_normal((3, 6)), rng.standard_normal((6, 4)))
        attrs = AttributeTable(rng.standard_normal((5, 3)), (10, 11, 12, 13, 14))
        x = rng.standard_normal((40, 4))
        centers = forward(net, attrs.attributes)
        oracle = []
        for row in x:
            best, best_d = None, np.inf
            for cid, c in zip(attrs.class_ids, centers):
                dist = sum((row[k] - c[k]) ** 2 for k in range(4))
                if dist < best_d:
                    best, best_d = cid, dist
            oracle.append(best)
        assert predict(net, attrs, attrs.class_ids, x).tolist() == oracle

    def test_dimension_mismatch_named(self, rng, net):
        data = toy(rng, net)
        with pytest.raises(DataError, match="d=7"):
            predict(net, data.attributes, [2], np.zeros((1, 7)))

    def test_empty_candidates(self, rng, net):
        with pytest.raises(DataError):
            predict(net, toy(rng, net).attributes, [], np.zeros((1, 4)))


class TestEvaluate:
    def test_exact_centers_score_one(self, rng, net):
        data = toy(rng, net)
        assert evaluate_conventional(net, data) == 1.0
        res = evaluate_generalized(net, data)
        assert (res.acc_u, res.acc_s, res.H) == (1.0, 1.0, 1.0)

    def test_zero_net_gives_chance(self, rng, net):
        data = toy(rng, net)
        zero = EmbeddingNet(np.zeros_like(net.w1), np.zeros_like(net.w2))
        assert evaluate_conventional(zero, data) == pytest.approx(0.5)

    def test_translation_of_everything_preserves_predictions(self, rng, net):
        data = toy(rng, net)
        x = rng.standard_normal((20, 4))
        centers = forward(net, data.attributes.rows([2, 3]))
        base = np.argmin(((x[:, None] - centers[None]) ** 2).sum(-1), axis=1)
        shifted = np.argmin((((x + 3.0)[:, None] - (centers + 3.0)[None]) ** 2).sum(-1), axis=1)
        np.testing.assert_array_equal(base, shifted)
        assert predict(net, data.attributes, [2, 3], x).tolist() == np.array([2, 3])[base].tolist()

    def test_real_seen_centers_option(self, rng, net):
        data = toy(rng, net)
        assert evaluate_generalized(net, data, seen_centers="real").acc_s == 1.0

    def test_missing_attributes_rejected(self, rng, net):
        data = toy(rng, net)
        cut = data._replace(attributes=AttributeTable(data.attributes.attributes[:3], (0, 1, 2)))
        with pytest.raises(DataError):
            evaluate_generalized(net, cut)

    def test_generalized_needs_held_out_rows(self, rng, net):
        data = toy(rng, net)
        with pytest.raises(DataError, match="test_seen_rows"):
            evaluate_generalized(net, data._replace(split=ClassSplit((0, 1), (2, 3))))
