import json

import numpy as np
import pytest

from fresgld.config import ExperimentConfig
from fresgld.experiment import (OUTPUT_DIR_ENV, STREAMS, compare, resolve_output_dir, run_experiment,
                                run_seed, seed_streams, tempered_quantile)
from fresgld.targets import GaussianMixture


def cfg(**kw):
    raw = dict(name="tiny", target="mixture", sampler="f_resgld", n_steps=300, n_retained=200,
               noise={"energy_sd": [1.0, 3.0], "gradient_sd": [2.0, 5.0]}, seeds=[0, 1, 2],
               swap={"a": 1 / 0.03})
    raw.update(kw)
    return ExperimentConfig.from_dict(raw)


def tree(path):
    return {p.relative_to(path): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


class TestStreams:
    def test_named_and_independent(self):
        s = seed_streams(3)
        assert tuple(s) == STREAMS
        draws = [g.random() for g in s.values()]
        assert len(set(draws)) == len(draws)
        assert seed_streams(3)["swap"].random() == draws[STREAMS.index("swap")]


class TestRunExperiment:
    def test_outputs_written(self, tmp_path):
        res = run_experiment(cfg(emit_gnuplot=True), tmp_path)
        assert res.failed == []
        for s in (0, 1, 2):
            d = tmp_path / f"seed_{s:04d}"
            assert {p.name for p in d.iterdir()} == {"metrics.json", "trace.csv", "samples.csv", "kde.csv"}
            m = json.loads((d / "metrics.json").read_text())
            assert m["swap_attempts"] == 300 and 0 <= m["swap_acceptance_rate"] <= 1
            assert np.loadtxt(d / "samples.csv", skiprows=1).shape == (200,)
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["w2_to_truth"]["n"] == 3
        assert (tmp_path / "plot.gp").read_text().count("kde.csv") == 3
        assert ExperimentConfig.load(tmp_path / "config.json") == res.config

    def test_byte_identical_reruns(self, tmp_path):
        run_experiment(cfg(), tmp_path / "a")
        run_experiment(cfg(), tmp_path / "b")
        assert tree(tmp_path / "a") == tree(tmp_path / "b")

    def test_threads_match_serial(self):
        a = run_experiment(cfg(), write=False)
        b = run_experiment(cfg(workers=3), write=False)
        assert a.metric("w2_to_truth") == b.metric("w2_to_truth")

    def test_step_too_large_recorded(self, tmp_path):
        bad = cfg(noise={"energy_sd": [0.0, 0.0], "gradient_sd": [9.0, 9.0]})
        res = run_experiment(bad, tmp_path)
        assert res.failed == [0, 1, 2]
        m = json.loads((tmp_path / "seed_0001" / "metrics.json").read_text())
        assert "step size" in m["error"] or "eta" in m["error"]
        assert json.loads((tmp_path / "summary.json").read_text())["n_failed"] == 3

    def test_quadratic_and_pde(self):
        q = run_seed(cfg(target="quadratic", target_params={"m": 1.0, "dim": 2}, eta=0.01,
                         n_steps=2000, n_retained=1000), 0)
        assert q.ok and q.metrics["w2_to_truth"] < 0.5
        p = run_seed(cfg(target="pde", temperatures=[0.08, 0.5], eta=1e-4, boundary="reflect_unit_square",
                         noise={"energy_sd": [0.8, 0.8], "gradient_sd": [2.0, 2.0]}), 0)
        assert p.ok and 0 <= p.metrics["annulus_coverage"] <= 1
        assert np.all((p.samples >= 0) & (p.samples <= 1))

    def test_evaluation_counts(self):
        f = run_seed(cfg(n_steps=100, n_retained=50), 0)
        m = run_seed(cfg(sampler="m_resgld", n_steps=100, n_retained=50), 0)
        assert f.metrics["n_energy_evals"] == 200 and m.metrics["n_energy_evals"] == 400


class TestTruth:
    def test_tempered_quantile_at_unit_temperature(self):
        from fresgld.diagnostics import mixture_quantile

        u = np.linspace(0.01, 0.99, 50)
        m = GaussianMixture()
        np.testing.assert_allclose(tempered_quantile(m, 1.0)(u), mixture_quantile(m)(u), atol=1e-3)


class TestOutputDir:
    def test_precedence(self, monkeypatch, tmp_path):
        c = cfg()
        monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
        assert str(resolve_output_dir(c)) == c.output_dir
        monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "env"))
        assert resolve_output_dir(c) == tmp_path / "env"
        assert resolve_output_dir(c, tmp_path / "arg") == tmp_path / "arg"


class TestCompare:
    def test_identical_variants(self, tmp_path):
        cmp = compare([cfg(name="a"), cfg(name="b")], tmp_path)
        assert all(d == 0.0 for d in cmp.paired_differences["b"].values())
        assert set(cmp.ranking) == {"a", "b"}
        rec = json.loads((tmp_path / "comparison.json").read_text())
        assert rec["metric"] == "w2_to_truth" and len(rec["paired_differences"]["b"]) == 3

    def test_ranked_by_w2(self):
        cmp = compare([cfg(name="a", sampler="sgld"), cfg(name="b")], write=False)
        means = {r.config.name: r.aggregate["w2_to_truth"]["mean"] for r in cmp.results}
        assert cmp.ranking == sorted(means, key=means.get)

    def test_mismatch_rejected(self):
        with pytest.raises(ValueError):
            compare([cfg(name="a"), cfg(name="b", seeds=[5])], write=False)
        with pytest.raises(ValueError):
            compare([cfg(name="a"), cfg(name="a")], write=False)
        with pytest.raises(ValueError):
            compare([cfg(name="a")], write=False)
        with pytest.raises(ValueError):
            compare([cfg(name="a"), cfg(name="b", target="quadratic")], write=False)


class TestEnsemble:
    def test_shapes_and_determinism(self):
        from fresgld.experiment import run_ensemble

        c = cfg(n_steps=400, n_retained=100, thinning="even")
        a, b = run_ensemble(c, n_members=5), run_ensemble(c, n_members=5)
        assert a.samples.shape == (100, 5, 1) and a.w2_to_truth.shape == (5,)
        np.testing.assert_array_equal(a.samples, b.samples)
        assert np.all((a.swap_acceptance_rate >= 0) & (a.swap_acceptance_rate <= 1))
        assert a.n_energy_evals == 2 * 400  # one batched call per chain and step
        assert run_ensemble(c).samples.shape[1] == len(c.seeds)

    def test_estimators_in_ensemble(self):
        from fresgld.experiment import run_ensemble

        for kind in ("running_constant", "kernel_ridge"):
            c = cfg(noise={"kind": "mixture_state_dependent"}, n_steps=300, n_retained=50,
                    variance_estimator={"kind": kind, "ridge": 1.0})
            assert np.isfinite(run_ensemble(c, n_members=4).w2_to_truth).all()
