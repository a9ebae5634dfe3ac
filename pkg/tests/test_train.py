import importlib

import numpy as np
import pytest

from vsc_zsl.dataset import SynthParams, synthesize
from vsc_zsl.embed import LossSpec, loss_total
from vsc_zsl.train import TrainConfig, TrainingDiverged, select_beta, train, train_dataset

# the package re-exports train(), which shadows the submodule attribute
train_mod = importlib.import_module("vsc_zsl.train")


def quick(method, **kw):
    base = dict(method=method, learning_rate=1e-2, epochs=60, restarts=3, seed=0)
    base.update(kw)
    return TrainConfig(**base)


class TestTrain:
    def test_vcl_fits_realizable_map(self):
        data = synthesize(SynthParams(S=8, U=4, d=8, m=6, per_class=5, sigma=0.0, delta=0.0, seed=1))
        _, log = train_dataset(quick("vcl", epochs=2000), data)
        assert log.mse[-1] < 1e-3

    @pytest.mark.parametrize("method", ["bmvsc", "cdvsc"])
    def test_zero_beta_matches_vcl_every_epoch(self, small_synth, method):
        for epochs in (1, 7, 30):
            a, la = train_dataset(quick("vcl", epochs=epochs), small_synth)
            b, lb = train_dataset(quick(method, beta=0.0, epochs=epochs), small_synth)
            np.testing.assert_array_equal(a.w1, b.w1)
            np.testing.assert_array_equal(a.w2, b.w2)
            assert la.mse == lb.mse

    def test_log_decomposition(self, small_synth):
        _, log = train_dataset(quick("bmvsc", beta=0.3, weight_decay=1e-3), small_synth)
        for e in range(log.epochs):
            assert log.total[e] == pytest.approx(log.mse[e] + 0.3 * log.structure[e] + 1e-3 * log.reg[e], abs=1e-9)

    def test_logged_terms_match_initial_weights(self, small_synth):
        from vsc_zsl.embed import EmbeddingNet
        from vsc_zsl.seeding import component_rng
        from vsc_zsl.dataset import compute_real_centers

        cfg = quick("vcl", epochs=1)
        _, log = train_dataset(cfg, small_synth)
        net = EmbeddingNet.initialize(6, 8, rng=component_rng(0, "init"))
        src = train_mod._drop_held_out(small_synth.source, small_synth.split)
        spec = LossSpec("vcl", small_synth.attributes.rows(small_synth.split.seen),
                        compute_real_centers(src, small_synth.split.seen).centers, weight_decay=cfg.weight_decay)
        assert log.total[0] == loss_total(net, spec).total

    def test_deterministic(self, small_synth):
        a, la = train_dataset(quick("cdvsc", beta=0.5), small_synth)
        b, lb = train_dataset(quick("cdvsc", beta=0.5), small_synth)
        np.testing.assert_array_equal(a.w2, b.w2)
        assert la.rows() == lb.rows()

    def test_assignments_are_permutations(self, small_synth):
        _, log = train_dataset(quick("bmvsc", beta=1.0), small_synth)
        assert len(log.assignments) == log.epochs
        for p in log.assignments:
            assert sorted(p.tolist()) == list(range(4))

    def test_held_out_rows_excluded(self, small_synth):
        held = small_synth.split.test_seen_instances
        corrupted = small_synth.source.features.copy()
        corrupted[list(held)] = 1e6
        data = small_synth._replace(source=small_synth.source.__class__(corrupted, small_synth.source.labels))
        a, _ = train_dataset(quick("vcl"), small_synth)
        b, _ = train_dataset(quick("vcl"), data)
        np.testing.assert_array_equal(a.w1, b.w1)

    def test_warmup_holds_structure_off(self, small_synth):
        a, _ = train_dataset(quick("vcl", epochs=20), small_synth)
        b, _ = train_dataset(quick("bmvsc", beta=5.0, epochs=20, warmup_epochs=20), small_synth)
        np.testing.assert_array_equal(a.w1, b.w1)

    def test_csv_log(self, tmp_path, small_synth):
        _, log = train_dataset(quick("bmvsc", epochs=3), small_synth)
        log.to_csv(tmp_path / "log.csv")
        lines = (tmp_path / "log.csv").read_text().splitlines()
        assert lines[0] == "epoch,mse,structure,reg,total,right_matches,center_dist"
        assert len(lines) == 4

    def test_divergence_reported(self, small_synth, monkeypatch):
        def boom(net, spec):
            raise FloatingPointError("non-finite loss")

        monkeypatch.setattr(train_mod, "loss_and_grad", boom)
        with pytest.raises(TrainingDiverged) as info:
            train_dataset(quick("vcl"), small_synth)
        assert info.value.epoch == 1

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            TrainConfig(method="nope")
        with pytest.raises(ValueError):
            TrainConfig(beta=-1.0)


class TestSelectBeta:
    def test_single_value_grid(self, small_synth):
        cfg = quick("bmvsc", epochs=20)
        d = small_synth
        assert select_beta([0.5], cfg, d.source, d.attributes, d.split, folds=2).beta == 0.5

    def test_superset_grid_never_worse(self, small_synth):
        cfg = quick("bmvsc", epochs=40)
        d = small_synth
        first = select_beta([0.0], cfg, d.source, d.attributes, d.split, folds=2)
        second = select_beta([0.0, 1.0], cfg, d.source, d.attributes, d.split, folds=2)
        assert second.scores[second.beta] >= first.scores[first.beta]
        assert second.scores[0.0] == first.scores[0.0]

    def test_too_few_classes(self, small_synth):
        d = small_synth
        with pytest.raises(Exception, match="too few"):
            select_beta([1.0], quick("vcl"), d.source, d.attributes, d.split, folds=5)

    def test_pseudo_unseen_features_are_unlabeled(self, small_synth, monkeypatch):
        seen_targets = []
        real_train = train

        def spy(config, source, target, attrs, split):
            seen_targets.append(target)
            return real_train(config, source, target, attrs, split)

        monkeypatch.setattr(train_mod, "train", spy)
        d = small_synth
        select_beta([1.0], quick("bmvsc", epochs=5), d.source, d.attributes, d.split, folds=2)
        assert seen_targets and all(t.labels is None for t in seen_targets)
