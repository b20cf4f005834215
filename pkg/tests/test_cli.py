import json
import subprocess
import sys

import numpy as np
import pytest

from fresgld.cli import load_samples, main
from fresgld.config import preset


def write_config(path, **kw):
    raw = dict(name="cli", target="mixture", sampler="f_resgld", n_steps=200, n_retained=100,
               noise={"energy_sd": [1.0, 3.0], "gradient_sd": [2.0, 5.0]}, seeds=[0, 1],
               output_dir=str(path.parent / "cfg_out"))
    raw.update(kw)
    path.write_text(json.dumps(raw))
    return path


class TestRun:
    def test_ok(self, tmp_path, capsys):
        c = write_config(tmp_path / "c.json")
        assert main(["run", str(c), "--output-dir", str(tmp_path / "out"), "--emit-gnuplot"]) == 0
        assert (tmp_path / "out" / "summary.json").exists() and (tmp_path / "out" / "plot.gp").exists()
        assert "2/2 seeds ok" in capsys.readouterr().out

    def test_env_override(self, tmp_path, monkeypatch):
        c = write_config(tmp_path / "c.json")
        monkeypatch.setenv("FRESGLD_OUTPUT_DIR", str(tmp_path / "env"))
        assert main(["run", str(c)]) == 0
        assert (tmp_path / "env" / "seed_0000" / "metrics.json").exists()
        assert not (tmp_path / "cfg_out").exists()

    def test_config_error(self, tmp_path, capsys):
        c = write_config(tmp_path / "c.json", temperatures=[10.0, 1.0])
        assert main(["run", str(c)]) == 1
        assert "temperatures" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["run", str(tmp_path / "none.json")]) == 1

    def test_sampler_error(self, tmp_path, capsys):
        c = write_config(tmp_path / "c.json", noise={"energy_sd": [0, 0], "gradient_sd": [9.0, 9.0]})
        assert main(["run", str(c), "--output-dir", str(tmp_path / "out")]) == 2
        assert "failed seeds" in capsys.readouterr().err

    def test_usage_error(self):
        with pytest.raises(SystemExit) as info:
            main(["frobnicate"])
        assert info.value.code == 1


class TestCompare:
    def test_two_variants(self, tmp_path, capsys):
        a = write_config(tmp_path / "a.json", name="f")
        b = write_config(tmp_path / "b.json", name="re", sampler="resgld")
        assert main(["compare", str(a), str(b), "--output-dir", str(tmp_path / "cmp")]) == 0
        out = capsys.readouterr().out
        assert out.startswith("1. ") and "re - f" in out
        assert (tmp_path / "cmp" / "comparison.json").exists()

    def test_mismatch_is_config_error(self, tmp_path):
        a = write_config(tmp_path / "a.json", name="f")
        b = write_config(tmp_path / "b.json", name="g", seeds=[4])
        assert main(["compare", str(a), str(b), "--output-dir", str(tmp_path / "cmp")]) == 1


class TestPreset:
    def test_prints_valid_json(self, capsys):
        assert main(["preset", "paper-mixture-fixed"]) == 0
        assert json.loads(capsys.readouterr().out) == preset("paper-mixture-fixed").to_dict()

    def test_writes_file(self, tmp_path):
        assert main(["preset", "paper-pde-f", "-o", str(tmp_path / "p.json")]) == 0
        assert json.loads((tmp_path / "p.json").read_text())["sampler"] == "f_resgld"

    def test_unknown(self):
        with pytest.raises(SystemExit) as info:
            main(["preset", "paper-nothing"])
        assert info.value.code == 1


class TestDiag:
    def test_w2_between_sample_files(self, tmp_path, capsys):
        for name, shift in (("a", 0.0), ("b", 1.5)):
            np.savetxt(tmp_path / f"{name}.csv", np.arange(10.0) + shift, header="theta_0", comments="")
        assert main(["diag", "w2", str(tmp_path / "a.csv"), str(tmp_path / "b.csv")]) == 0
        rec = json.loads(capsys.readouterr().out)
        assert rec == {"w2": 1.5, "n_a": 10, "n_b": 10}

    def test_trace_uses_low_chain(self, tmp_path):
        write_config(tmp_path / "c.json")
        main(["run", str(tmp_path / "c.json"), "--output-dir", str(tmp_path / "out")])
        trace = tmp_path / "out" / "seed_0000" / "trace.csv"
        assert load_samples(trace).size == 200

    def test_missing_column(self, tmp_path):
        np.savetxt(tmp_path / "a.csv", np.arange(3.0), header="theta_0", comments="")
        assert main(["diag", "w2", str(tmp_path / "a.csv"), str(tmp_path / "a.csv"), "--column", "x"]) == 1


class TestEntryPoint:
    def test_module_invocation(self):
        r = subprocess.run([sys.executable, "-m", "fresgld.cli", "preset", "paper-pde-s"],
                           capture_output=True, text=True)
        assert r.returncode == 0 and json.loads(r.stdout)["name"] == "paper-pde-s"
