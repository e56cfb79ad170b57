import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from attracta.cli import main
from attracta.pipeline import example_config

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def write_config(tmp_path):
    def write(raw, name="cfg.json"):
        path = tmp_path / name
        path.write_text(json.dumps(raw), encoding="utf-8")
        return str(path)

    return write


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


class TestSimulate:
    def test_example1_converges(self, write_config, tmp_path):
        out = tmp_path / "traj.csv"
        assert main(["simulate", "--config", write_config(example_config("example1")), "--t-end", "60",
                     "--out", str(out)]) == 0
        rows = read_csv(out)
        assert rows[0] == ["t", "x1", "x2"]
        last = [float(v) for v in rows[-1]]
        assert last[0] == 60.0
        assert abs(last[1] - 1) < 1e-3 and abs(last[2] - 1) < 1e-3
        assert out.read_bytes().count(b"\r\n") == len(rows)

    def test_resample(self, write_config, capsys):
        assert main(["simulate", "--config", write_config(example_config("example1")), "--t-end", "2",
                     "--resample", "0.5"]) == 0
        rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
        assert [r[0] for r in rows[1:]] == ["0", "0.5", "1", "1.5", "2"]

    def test_malformed_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{", encoding="utf-8")
        assert main(["simulate", "--config", str(bad)]) == 3
        err = capsys.readouterr().err
        assert err.count("\n") == 1 and "malformed JSON" in err

    def test_empty_interval(self, write_config, capsys):
        assert main(["simulate", "--config", write_config(example_config("example1")), "--t-end", "-1"]) == 3
        assert "empty integration interval" in capsys.readouterr().err

    def test_integration_failure(self, write_config, capsys):
        raw = {"dimension": 1, "nonlinearity": {"expr": ["-1"]}, "domain": [[0, None]],
               "history": {"kind": "constant", "values": [1.0]}}
        assert main(["simulate", "--config", write_config(raw), "--t-end", "5"]) == 2
        assert "integration failed" in capsys.readouterr().err


class TestCertify:
    def test_example4(self, write_config, tmp_path):
        out = tmp_path / "cert.json"
        assert main(["certify", "--config", write_config(example_config("example4")), "--out", str(out)]) == 0
        cert = json.loads(out.read_text(encoding="utf-8"))
        assert cert["verdict"] == "Certified"
        assert cert["corollary5"]["lhs"] == pytest.approx(0.1, abs=1e-12)
        assert cert["corollary5"]["rhs"] == pytest.approx(0.148295, abs=1e-5)

    def test_remark(self, write_config, capsys):
        assert main(["certify", "--config", write_config(example_config("remark_L"))]) == 0
        cert = json.loads(capsys.readouterr().out)
        assert cert["alpha"] == pytest.approx(0.95, abs=1e-12)
        assert cert["xi"] == pytest.approx([20.0, 4.5], rel=1e-12)

    def test_mackey_glass_unsupported(self, capsys):
        assert main(["certify", "--config", str(CONFIG_DIR / "mackey_glass.json")]) == 4
        assert "open problem" in capsys.readouterr().err

    def test_not_certified(self, capsys):
        assert main(["certify", "--config", str(CONFIG_DIR / "uncertified_linear.json")]) == 1
        assert json.loads(capsys.readouterr().out)["verdict"] == "NotCertified"

    def test_method_mismatch(self, write_config, capsys):
        assert main(["certify", "--config", write_config(example_config("example1")), "--method", "nicholson"]) == 4
        assert capsys.readouterr().err.startswith("attracta:")

    def test_forced_mmatrix_on_nicholson(self, write_config, capsys):
        assert main(["certify", "--config", write_config(example_config("example4")), "--method", "mmatrix"]) == 0
        assert json.loads(capsys.readouterr().out)["method"] == "MMatrix"

    def test_planar(self, write_config, capsys):
        assert main(["certify", "--config", write_config(example_config("example2"))]) == 0
        assert json.loads(capsys.readouterr().out)["method"] == "Planar"

    def test_invalid_config(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("[]", encoding="utf-8")
        assert main(["certify", "--config", str(bad)]) == 3


class TestDeterminism:
    def test_certify_bytes(self, write_config, tmp_path):
        cfg = write_config(example_config("example3"))
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for out in (a, b):
            assert main(["certify", "--config", cfg, "--out", str(out), "--seed", "7"]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_simulate_bytes(self, tmp_path):
        cfg = str(CONFIG_DIR / "hopfield_tanh.json")
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            assert main(["simulate", "--config", cfg, "--t-end", "30", "--out", str(out)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_seed_changes_sampling(self, write_config, capsys):
        cfg = write_config(example_config("example3"))
        main(["certify", "--config", cfg, "--seed", "1"])
        one = json.loads(capsys.readouterr().out)
        main(["certify", "--config", cfg, "--seed", "0x5EED"])
        two = json.loads(capsys.readouterr().out)
        assert one["sampling"]["seed"] == 1 and two["sampling"]["seed"] == 0x5EED


class TestSweep:
    header = ["index", "family", "value", "converged", "final_error", "horizon", "time_to_tol", "steps", "error"]

    def test_single_row_matches_simulate(self, write_config, tmp_path):
        cfg = write_config(example_config("example1"))
        out = tmp_path / "sweep.csv"
        assert main(["sweep", "--config", cfg, "--grid", "1", "--t-end", "60", "--out", str(out)]) == 0
        rows = read_csv(out)
        assert rows[0] == self.header and len(rows) == 2
        traj = tmp_path / "traj.csv"
        main(["simulate", "--config", cfg, "--t-end", "60", "--out", str(traj)])
        last = [float(v) for v in read_csv(traj)[-1][1:]]
        assert (rows[1][3] == "true") == (max(abs(v - 1) for v in last) <= 1e-3)

    def test_uncertified_rows_recorded(self, tmp_path):
        out = tmp_path / "sweep.csv"
        assert main(["sweep", "--config", str(CONFIG_DIR / "uncertified_linear.json"), "--grid", "1",
                     "--t-end", "50", "--out", str(out)]) == 0
        rows = read_csv(out)
        assert len(rows) == 2 and rows[1][3] in ("true", "false")

    def test_rows_ordered_with_jobs(self, write_config, tmp_path):
        cfg = write_config(example_config("example1"))
        out = tmp_path / "sweep.csv"
        assert main(["sweep", "--config", cfg, "--family", "uniform", "--grid", "0.5:2:3", "--t-end", "40",
                     "--jobs", "2", "--out", str(out)]) == 0
        rows = read_csv(out)[1:]
        assert [r[0] for r in rows] == ["0", "1", "2"]
        assert [float(r[2]) for r in rows] == [0.5, 1.25, 2.0]

    @pytest.mark.parametrize("grid", ["", "1:2", "a,b", "0:1:0"])
    def test_bad_grid(self, write_config, grid):
        assert main(["sweep", "--config", write_config(example_config("example1")), "--grid", grid]) == 3

    def test_bad_family_value(self, write_config):
        assert main(["sweep", "--config", write_config(example_config("example1")), "--family", "proportional",
                     "--grid", "1.5"]) == 3

    @pytest.mark.slow
    def test_example4_constant_lags(self, write_config, tmp_path):
        out = tmp_path / "sweep.csv"
        # the slowest mode decays by 0.927 per lag, so tau = 25 needs longer than the default 40 * tau
        assert main(["sweep", "--config", write_config(example_config("example4")), "--grid", "0.5,1,2,5,10,25",
                     "--t-end", "4000", "--out", str(out)]) == 0
        rows = read_csv(out)[1:]
        assert len(rows) == 6 and all(r[3] == "true" for r in rows)


class TestReproduce:
    def test_example4(self, tmp_path, capsys):
        out = tmp_path / "report.json"
        assert main(["reproduce", "example4", "--out", str(out)]) == 0
        text = capsys.readouterr().out
        assert "3/3 delay configurations converged" in text
        report = json.loads(out.read_text(encoding="utf-8"))
        assert report["passed"] and "wall_time" not in report
        checks = {c["name"]: c for c in report["checks"]}
        assert checks["two-patch comparison condition"]["passed"]
        assert checks["two-patch comparison condition"]["observed"].startswith("fail")

    def test_example1_timing(self, tmp_path):
        out = tmp_path / "report.json"
        assert main(["reproduce", "example1", "--out", str(out), "--timing"]) == 0
        assert json.loads(out.read_text(encoding="utf-8"))["wall_time"] > 0

    def test_remark_checks(self, tmp_path, capsys):
        out = tmp_path / "report.json"
        code = main(["reproduce", "remark_L", "--out", str(out)])
        report = json.loads(out.read_text(encoding="utf-8"))
        checks = {c["name"]: c["passed"] for c in report["checks"]}
        assert checks["I-L is an M-matrix, inverse [[4,16],[1/2,4]]"]
        assert checks["column-sum comparison test"]
        assert checks["alpha"]
        # the proportional-lag row decays only algebraically and misses the horizon
        failed = [name for name, ok in checks.items() if not ok]
        assert failed == ["converges under proportional h(t)=0.7t"]
        assert code == 1
        assert "proportional" in capsys.readouterr().err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "attracta", "--version"], capture_output=True, text=True,
                         check=False)
    assert res.returncode == 0 and res.stdout.startswith("attracta ")


def test_log_level_env(write_config, monkeypatch, capsys):
    monkeypatch.setenv("ATTRACTA_LOG", "info")
    assert main(["simulate", "--config", write_config(example_config("example1")), "--t-end", "1"]) == 0
