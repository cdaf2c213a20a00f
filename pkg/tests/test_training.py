import dataclasses

import numpy as np
import pytest

from gnnreadout.errors import ConfigError, ContractError
from gnnreadout.graphs import make_split
from gnnreadout.metrics import f1_binary
from gnnreadout.readouts import READOUT_KINDS, ReadoutSpec
from gnnreadout.synth import toy_cliques_vs_paths
from gnnreadout.tensor import Parameter, make_rng
from gnnreadout.training import (
    AdamW,
    EarlyStopping,
    ModelSettings,
    PlateauScheduler,
    RunResult,
    RunSummary,
    TrainSettings,
    build_model,
    run_repeated,
    train_one,
)


def reference_adam(theta0, grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    """Textbook Adam without weight decay, written independently."""
    theta = np.array(theta0, dtype=np.float64)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    for t, g in enumerate(grads, start=1):
        g = np.asarray(g, dtype=np.float64)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta = theta - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    return theta


class TestAdamW:
    def test_first_step_closed_form(self):
        # With m_hat = g and v_hat = g^2, step is -lr * g / (|g| + eps).
        p = Parameter(np.array([0.0]), name="w")
        p.grad = np.array([2.0])
        opt = AdamW([("w", p)], lr=1e-3, weight_decay=0.0)
        opt.step()
        expected = -1e-3 * 2.0 / (2.0 + 1e-8)
        np.testing.assert_allclose(p.data, [expected], rtol=1e-12)

    def test_decay_is_decoupled(self):
        # zero gradient: only the multiplicative decay applies
        p = Parameter(np.array([10.0]), name="w")
        p.grad = np.array([0.0])
        opt = AdamW([("w", p)], lr=0.1, weight_decay=0.01)
        opt.step()
        np.testing.assert_allclose(p.data, [10.0 * (1 - 0.1 * 0.01)], rtol=1e-12)

    def test_matches_reference_adam_when_decay_zero(self):
        rng = make_rng(0)
        theta0 = rng.standard_normal(5)
        grads = [rng.standard_normal(5) for _ in range(20)]
        p = Parameter(theta0.copy(), name="w")
        opt = AdamW([("w", p)], lr=1e-3, weight_decay=0.0)
        for g in grads:
            p.grad = g.copy()
            opt.step()
        np.testing.assert_allclose(p.data, reference_adam(theta0, grads),
                                   rtol=1e-12, atol=1e-12)

    def test_missing_grad_raises(self):
        p = Parameter(np.zeros(2), name="w")
        opt = AdamW([("w", p)])
        with pytest.raises(ContractError, match="w"):
            opt.step()


class TestPlateauScheduler:
    def test_halves_after_patience_exceeded(self):
        sched = PlateauScheduler(lr=1e-3, patience=10)
        sched.step(1.0)  # sets best
        lr = 1e-3
        for _ in range(11):  # stale must exceed patience
            lr = sched.step(1.0)
        assert lr == pytest.approx(5e-4)

    def test_improvement_resets_counter(self):
        sched = PlateauScheduler(lr=1e-3, patience=2)
        sched.step(1.0)
        sched.step(1.0)
        sched.step(1.0)
        assert sched.step(0.5) == pytest.approx(1e-3)  # reset before trigger
        assert sched.stale == 0

    def test_floor_clamp(self):
        sched = PlateauScheduler(lr=2e-6, patience=0)
        sched.step(1.0)
        assert sched.step(1.0) == pytest.approx(1e-6)
        assert sched.step(1.0) == pytest.approx(1e-6)  # clamped, not below

    def test_threshold_requires_real_improvement(self):
        sched = PlateauScheduler(lr=1e-3, patience=0)
        sched.step(1.0)
        # a 1e-5 improvement is below the 1e-4 threshold: counts as stale
        assert sched.step(1.0 - 1e-5) == pytest.approx(5e-4)


class TestEarlyStopping:
    def test_never_stops_before_min_epochs(self):
        class Dummy:
            def state_dict(self):
                return {}

        stop = EarlyStopping(patience=1, min_epochs=10)
        d = Dummy()
        for epoch in range(9):
            assert not stop.update(epoch, 1.0, d)
        assert stop.update(9, 1.0, d)  # epoch 10 reached, stale >= patience

    def test_snapshot_tracks_best(self):
        class Recorder:
            def __init__(self):
                self.value = 0

            def state_dict(self):
                return {"value": self.value}

        stop = EarlyStopping(patience=100, min_epochs=1)
        r = Recorder()
        losses = [1.0, 0.5, 0.8, 0.3, 0.9]
        for epoch, loss in enumerate(losses):
            r.value = epoch
            stop.update(epoch, loss, r)
        assert stop.best == 0.3
        assert stop.best_epoch == 3
        assert stop.snapshot == {"value": 3}


class TestRunSummary:
    def _result(self, value, failed=False):
        return RunResult(0, "f1", value, 0.0, 0, 1, 0.0, 10, failed=failed)

    def test_mean_and_sample_std(self):
        s = RunSummary.from_results([self._result(80.0), self._result(90.0)])
        assert s.mean == pytest.approx(85.0)
        assert s.std == pytest.approx(np.std([80, 90], ddof=1))  # 7.0710678...
        assert s.std == pytest.approx(7.0710678, abs=1e-6)

    def test_single_run_std_zero(self):
        s = RunSummary.from_results([self._result(0.7)])
        assert s.std == 0.0

    def test_failed_runs_marked_partial(self):
        s = RunSummary.from_results(
            [self._result(0.8), self._result(float("nan"), failed=True)])
        assert s.partial
        assert s.n == 1
        assert s.mean == pytest.approx(0.8)


def _toy_settings(readout="sum", conv="gin", d_v=16, d_g=16):
    spec = ReadoutSpec(readout, d_v, d_g)
    return ModelSettings(conv=conv, num_layers=2, readout=spec)


class TestEndToEnd:
    def test_toy_task_is_linearly_separable(self):
        """Oracle: degree histograms of the toy task are separable, so a
        GNN that can count degrees has headroom to reach F1 = 1."""
        from sklearn.linear_model import LogisticRegression

        ds = toy_cliques_vs_paths()
        feats = []
        for g in ds.graphs:
            counts = np.bincount(np.bincount(g.edges[:, 0], minlength=g.num_nodes),
                                 minlength=12)[:12]
            feats.append(counts / g.num_nodes)
        clf = LogisticRegression(C=1e6, max_iter=2000).fit(
            feats, [g.target for g in ds.graphs])
        assert clf.score(feats, [g.target for g in ds.graphs]) == 1.0

    def test_learns_toy_task_perfectly(self):
        ds = toy_cliques_vs_paths()
        split = make_split(len(ds.graphs), (0.8, 0.1, 0.1), make_rng(0))
        result = train_one(ds, split, _toy_settings(),
                           TrainSettings(batch_size=8, max_epochs=50), seed=0)
        assert not result.failed
        assert result.metric_name == "f1"
        assert result.metric_value == 1.0

    def test_same_seed_bit_identical(self):
        ds = toy_cliques_vs_paths()
        split = make_split(len(ds.graphs), (0.8, 0.1, 0.1), make_rng(0))
        settings = _toy_settings()
        ts = TrainSettings(batch_size=8, max_epochs=15)
        a = train_one(ds, split, settings, ts, seed=3)
        b = train_one(ds, split, settings, ts, seed=3)
        exclude = {"wall_time_s"}
        for f in dataclasses.fields(RunResult):
            if f.name not in exclude:
                assert getattr(a, f.name) == getattr(b, f.name), f.name

    def test_different_seed_differs(self):
        ds = toy_cliques_vs_paths()
        split = make_split(len(ds.graphs), (0.8, 0.1, 0.1), make_rng(0))
        ts = TrainSettings(batch_size=8, max_epochs=5)
        a = train_one(ds, split, _toy_settings(), ts, seed=0)
        b = train_one(ds, split, _toy_settings(), ts, seed=1)
        assert a.best_val_loss != b.best_val_loss

    @pytest.mark.parametrize("kind", READOUT_KINDS)
    def test_first_epochs_loss_decreases(self, kind, tmp_path):
        """Training loss must fall over the first 5 epochs for every
        readout kind on the toy task."""
        ds = toy_cliques_vs_paths()
        split = make_split(len(ds.graphs), (0.8, 0.1, 0.1), make_rng(0))
        log = tmp_path / "run.log"
        train_one(ds, split, _toy_settings(readout=kind),
                  TrainSettings(batch_size=8, max_epochs=10), seed=0, log_path=log)
        losses = [float(line.split()[1]) for line in log.read_text().splitlines()[:5]]
        assert len(losses) == 5
        assert losses[4] < losses[0], f"{kind}: {losses}"

    @pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
    @pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
    def test_run_repeated_partial_on_divergence(self):
        ds = toy_cliques_vs_paths()
        results, summary = run_repeated(
            ds, _toy_settings(), TrainSettings(batch_size=8, max_epochs=12, lr=1e30),
            n_repeats=2)
        assert all(r.failed for r in results)
        assert summary.partial
        assert summary.n == 0

    def test_run_repeated_distinct_splits(self, tmp_path):
        ds = toy_cliques_vs_paths()
        results, summary = run_repeated(
            ds, _toy_settings(), TrainSettings(batch_size=8, max_epochs=12),
            n_repeats=3, log_dir=tmp_path)
        assert [r.seed for r in results] == [0, 1, 2]
        assert summary.n == 3
        assert sorted(p.name for p in tmp_path.iterdir()) == [
            "run_0.log", "run_1.log", "run_2.log"]

    def test_zero_repeats_rejected(self):
        ds = toy_cliques_vs_paths()
        with pytest.raises(ConfigError):
            run_repeated(ds, _toy_settings(), TrainSettings(), n_repeats=0)

    def test_threads_match_serial(self):
        ds = toy_cliques_vs_paths()
        ts = TrainSettings(batch_size=8, max_epochs=8)
        serial, _ = run_repeated(ds, _toy_settings(), ts, n_repeats=2, threads=1)
        parallel, _ = run_repeated(ds, _toy_settings(), ts, n_repeats=2, threads=2)
        for a, b in zip(serial, parallel):
            assert a.best_val_loss == b.best_val_loss
            assert a.metric_value == b.metric_value


class TestBuildModel:
    def test_regression_single_output(self):
        from gnnreadout.synth import synthetic_regression

        ds = synthetic_regression()
        model = build_model(ds, _toy_settings(), make_rng(0))
        assert model.out_dim == 1

    def test_virtual_node_extends_max_nodes(self):
        ds = toy_cliques_vs_paths()
        model = build_model(ds, _toy_settings(readout="virtual_node"), make_rng(0))
        assert model.needs_virtual_node
