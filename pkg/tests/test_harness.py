import csv
import math

import numpy as np
import pytest

from plonline import Dataset, SynthesisSpec, theorem1_bound, theorem3_bound
from plonline.harness import (
    ExperimentConfig,
    MistakeCell,
    RegretCell,
    default_mistake_cells,
    emit_curves,
    mean_curves,
    mistake_campaign,
    noisy_campaign,
    regret_campaign,
    run_experiment,
)


def toy(n=60, K=4, d=3, seed=0):
    rng = np.random.default_rng(seed)
    y = np.concatenate([np.arange(1, K + 1), rng.integers(1, K + 1, size=n - K)])
    X = rng.normal(size=(n, d)) + np.eye(K)[y - 1][:, :d] * 2
    return Dataset("toy", X, y, tuple(range(K)))


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError, match="runs"):
            ExperimentConfig(toy(), runs=0)
        with pytest.raises(ValueError, match="set size"):
            ExperimentConfig(toy(), set_sizes=(4,))
        with pytest.raises(ValueError):
            ExperimentConfig(toy(), learners=("nope",))
        with pytest.raises(ValueError, match="rounds"):
            ExperimentConfig(toy(), rounds=0)

    def test_fingerprint_depends_on_config(self):
        a = ExperimentConfig(toy(), runs=3)
        b = ExperimentConfig(toy(), runs=4)
        assert a.fingerprint("avg-perceptron", 2) != b.fingerprint("avg-perceptron", 2)
        assert a.fingerprint("avg-perceptron", 2) == ExperimentConfig(toy(), runs=3) \
            .fingerprint("avg-perceptron", 2)


class TestRunExperiment:
    def test_single_trial_curve(self):
        ds = toy()
        curves = run_experiment(ExperimentConfig(ds, learners=("avg-perceptron",),
                                                 set_sizes=(1,), runs=1, rounds=1))
        c = curves[("avg-perceptron", 1)]
        assert c.true_error.tolist() == [1.0 - (ds.y[0] == 1)]

    def test_curve_shape_and_range(self):
        curves = run_experiment(ExperimentConfig(toy(), set_sizes=(1, 2), runs=5))
        assert len(curves) == 6 * 2
        for c in curves.values():
            assert len(c.true_error) == 60 and c.runs == 5
            assert np.all((0 <= c.true_error) & (c.true_error <= 1))
            assert np.all(c.ambiguous_error <= c.true_error + 1e-15)

    def test_exact_matches_avg_on_singletons(self):
        cfg = ExperimentConfig(toy(), learners=("avg-perceptron", "exact-perceptron",
                                                "avg-pegasos", "exact-pegasos"),
                               set_sizes=(1,), runs=4)
        curves = run_experiment(cfg)
        assert np.array_equal(curves[("avg-perceptron", 1)].true_error,
                              curves[("exact-perceptron", 1)].true_error)
        assert np.array_equal(curves[("avg-pegasos", 1)].true_error,
                              curves[("exact-pegasos", 1)].true_error)

    def test_cycles_past_one_pass(self):
        curves = run_experiment(ExperimentConfig(toy(), learners=("avg-perceptron",),
                                                 runs=2, rounds=150))
        assert len(curves[("avg-perceptron", 2)].true_error) == 150

    def test_threads_do_not_change_results(self):
        base = dict(source=toy(), runs=6, set_sizes=(2,), shuffle=True)
        a = run_experiment(ExperimentConfig(**base, threads=1))
        b = run_experiment(ExperimentConfig(**base, threads=3))
        for key in a:
            assert np.array_equal(a[key].true_error, b[key].true_error)

    def test_synthetic_source(self):
        spec = SynthesisSpec("separable", 4, 3, 100, gamma=0.1)
        curves = run_experiment(ExperimentConfig(spec, learners=("avg-perceptron",),
                                                 set_sizes=(2,), runs=2))
        assert len(curves[("avg-perceptron", 2)].true_error) == 100


class TestAveraging:
    def test_idempotent(self):
        c = np.linspace(0, 1, 7)
        assert np.array_equal(mean_curves([c, c]), c)

    def test_partition(self):
        rng = np.random.default_rng(0)
        curves = [rng.random(50) for _ in range(100)]
        whole = mean_curves(curves)
        halves = (mean_curves(curves[:50]) + mean_curves(curves[50:])) / 2
        assert np.max(np.abs(whole - halves)) <= 1e-12

    def test_empty(self):
        with pytest.raises(ValueError):
            mean_curves([])


class TestEmit:
    def test_files(self, tmp_path):
        cfg = ExperimentConfig(toy(), learners=("avg-perceptron", "max-pegasos"),
                               set_sizes=(1, 2), runs=2, rounds=3)
        paths = emit_curves(run_experiment(cfg), tmp_path, cfg)
        curve = (tmp_path / "avg-perceptron_s2.csv").read_text().splitlines()
        assert curve[0] == "trial,avg_true_error,avg_ambiguous_error" and len(curve) == 4
        with open(tmp_path / "manifest.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4
        assert list(rows[0])[:7] == ["file", "learner", "set_size", "runs", "T", "seed", "dataset"]
        assert {r["file"] for r in rows} <= {p.name for p in paths}

    def test_byte_identical_rerun(self, tmp_path):
        cfg = ExperimentConfig(toy(), set_sizes=(2,), runs=3, shuffle=True)
        emit_curves(run_experiment(cfg), tmp_path / "a", cfg)
        emit_curves(run_experiment(cfg), tmp_path / "b", cfg)
        for f in (tmp_path / "a").iterdir():
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        cfg = ExperimentConfig(toy(), learners=("avg-perceptron",), runs=1, rounds=2)
        with pytest.raises(OSError, match="file"):
            emit_curves(run_experiment(cfg), blocker / "sub", cfg)


class TestCampaigns:
    def test_mistakes_within_bound(self):
        rows = mistake_campaign([MistakeCell(3, 5, 2, 0.5, rounds=500)], seeds=range(3))
        assert all(r.passed for r in rows)
        for r in rows:
            assert r.bound == theorem1_bound(r.gamma_bound, r.constants["R"],
                                             r.constants["c"]).bound_value
            assert r.mistakes <= r.updates

    def test_negative_control_fails(self):
        rows = mistake_campaign([MistakeCell(3, 5, 1, 0.5, rounds=500)], seeds=range(2),
                                break_update=True)
        assert not any(r.passed for r in rows)

    def test_generation_failure_reported_per_cell(self, monkeypatch):
        import plonline.data as data
        monkeypatch.setattr(data, "ATTEMPT_CHECKPOINT", 10_000)
        rows = mistake_campaign([MistakeCell(3, 5, 1, 50.0, rounds=10),
                                 MistakeCell(3, 5, 1, 0.5, rounds=10)], seeds=[0])
        assert not rows[0].passed and "acceptance" in rows[0].error
        assert rows[1].passed

    def test_grid_set_sizes(self):
        cells = default_mistake_cells(classes=(3, 5), dims=(5,), gammas=(0.1,))
        assert sorted({(c.num_classes, c.set_size) for c in cells}) == [
            (3, 1), (3, 2), (5, 1), (5, 2), (5, 4)]

    def test_noisy_rows_per_gamma(self):
        rows = noisy_campaign([MistakeCell(3, 5, 2, 0.1, rounds=300, noise=0.1)],
                              seeds=range(2), gammas=(0.1, 0.5, 1.0))
        assert len(rows) == 6 and all(r.passed for r in rows)

    def test_regret_row(self):
        (row,) = regret_campaign([RegretCell(3, 5, 2, 1.0, 200, kind="noisy", noise=0.1)],
                                 seeds=[0], epochs=100)
        assert row.bound == pytest.approx(theorem3_bound(1.0, math.sqrt(15), 2, 200).bound_value)
        assert row.max_norm_excess <= 1e-12
        assert row.passed == (row.regret <= row.bound)
