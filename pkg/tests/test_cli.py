import csv
import io
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from dp_observer.cli import format_json, main
from dp_observer.mechanism import PrivacyParams, kappa

DATA = Path(__file__).resolve().parent.parent / "data"
SYSTEM = str(DATA / "example_plant.json")
GAIN = str(DATA / "example_gain.json")


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def matrix(rows):
    return {"rows": len(rows), "cols": len(rows[0]), "data": rows}


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def stable_system(tmp_path):
    return write_json(tmp_path / "stable.json", {
        "name": "stable", "A": matrix([[0.2, 0.1], [0.1, 0.3]]), "C": matrix([[1.0, 1.0]])})


class TestFormatJson:
    def test_float_digits(self):
        assert format_json(0.1) == "0.10000000000000001"
        assert json.loads(format_json({"x": 1 / 3})) == {"x": 1 / 3}

    def test_non_finite_and_numpy(self):
        assert json.loads(format_json([math.inf, np.float64(2.5), np.int64(3), np.True_])) == \
            [None, 2.5, 3, True]


class TestAnalyze:
    def test_example_gain_is_feasible(self, capsys):
        code, out, _ = run(capsys, "analyze", "--system", SYSTEM, "--gain", GAIN,
                           "--K", "1", "--alpha", "0")
        assert code == 0
        rep = json.loads(out)
        assert rep["feasibility"]["N"] == pytest.approx(0.694444, abs=1e-6)
        assert rep["sensitivity"]["l2_bound_squared"] == pytest.approx(720 / 671, rel=1e-12)

    def test_zero_gain_unstable(self, capsys, tmp_path):
        zero = write_json(tmp_path / "zero.json", matrix([[0.0], [0.0]]))
        code, out, _ = run(capsys, "analyze", "--system", SYSTEM, "--gain", zero,
                           "--K", "1", "--alpha", "0")
        assert code == 2
        assert json.loads(out)["feasibility"]["contraction"] is False

    def test_alpha_one_is_domain_error(self, capsys):
        code, _, err = run(capsys, "analyze", "--system", SYSTEM, "--gain", GAIN,
                           "--K", "1", "--alpha", "1")
        assert code == 1 and "alpha" in err

    def test_malformed_json(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code, _, err = run(capsys, "analyze", "--system", str(bad), "--gain", GAIN,
                           "--K", "1", "--alpha", "0")
        assert code == 1 and "malformed" in err

    def test_gain_shape_mismatch(self, capsys, tmp_path):
        wide = write_json(tmp_path / "wide.json", matrix([[0.1, 0.2]]))
        code, _, err = run(capsys, "analyze", "--system", SYSTEM, "--gain", wide,
                           "--K", "1", "--alpha", "0")
        assert code == 1 and "gain" in err

    def test_missing_flag(self, capsys):
        assert run(capsys, "analyze", "--system", SYSTEM)[0] == 1


class TestDesign:
    def test_example(self, capsys):
        code, out, _ = run(capsys, "design", "--system", SYSTEM, "--K", "0.5", "--alpha", "0.2")
        assert code == 0
        res = json.loads(out)
        assert res["eta_max"] == pytest.approx(1.67705, abs=1e-4)
        assert res["status"] == "optimal-grid"
        assert res["bound_squared"] == pytest.approx(0.25 / 0.96 * res["F_value"], rel=1e-12)

    def test_byte_identical_reruns(self, capsys):
        argv = ("design", "--system", SYSTEM, "--K", "0.5", "--alpha", "0.2", "--grid", "16",
                "--seed", "4")
        assert run(capsys, *argv)[1] == run(capsys, *argv)[1]

    def test_stable_system(self, capsys, stable_system):
        code, out, _ = run(capsys, "design", "--system", stable_system, "--K", "1", "--alpha", "0.5")
        res = json.loads(out)
        assert code == 0
        assert res["bound_squared"] == 0.0
        assert res["L_opt"]["data"] == [[0.0], [0.0]]

    def test_fixed_performance(self, capsys):
        code, out, _ = run(capsys, "design", "--system", SYSTEM, "--K", "0.5", "--alpha", "0.2",
                           "--fix-performance", "0.455125")
        res = json.loads(out)
        assert code == 0
        assert res["mode"] == "fixed-performance"
        assert res["eta"] == pytest.approx(1.0665, abs=1e-3)

    def test_infeasible(self, capsys, tmp_path):
        sysfile = write_json(tmp_path / "unobs.json", {
            "A": matrix([[0.5, 0.0], [0.0, 1.5]]), "C": matrix([[1.0, 0.0]])})
        code, out, _ = run(capsys, "design", "--system", sysfile, "--K", "1", "--alpha", "0.2",
                           "--grid", "8")
        assert code == 2
        assert json.loads(out)["status"] == "infeasible"

    def test_negative_plant_rejected(self, capsys, tmp_path):
        sysfile = write_json(tmp_path / "neg.json", {
            "A": matrix([[1.5, -0.1], [0.0, 0.5]]), "C": matrix([[1.0, 0.0]])})
        assert run(capsys, "design", "--system", sysfile, "--K", "1", "--alpha", "0.2")[0] == 1


class TestCalibrate:
    def test_keys_and_values(self, capsys):
        code, out, _ = run(capsys, "calibrate", "--epsilon", "1", "--delta", "0.05",
                           "--delta-G", "2")
        res = json.loads(out)
        assert code == 0
        assert set(res) == {"kappa", "sigma", "epsilon", "delta", "delta_G"}
        assert res["sigma"] == pytest.approx(2 * res["kappa"], rel=1e-15)

    def test_bad_delta(self, capsys):
        assert run(capsys, "calibrate", "--epsilon", "1", "--delta", "0.7", "--delta-G", "1")[0] == 1


class TestSimulate:
    def test_columns_and_rows(self, capsys, tmp_path):
        out = tmp_path / "traj.csv"
        code, _, _ = run(capsys, "simulate", "--system", SYSTEM, "--gain", GAIN, "--x0", "1,1",
                         "--steps", "25", "--sigma", "0.1", "--seed", "3", "--out", str(out))
        assert code == 0
        rows = list(csv.reader(io.StringIO(out.read_text())))
        assert rows[0] == ["step", "x_1", "x_2", "z_1", "z_2", "zhat_1", "zhat_2"]
        assert len(rows) == 26
        z = np.array([[float(v) for v in r[3:5]] for r in rows[1:]])
        zhat = np.array([[float(v) for v in r[5:7]] for r in rows[1:]])
        assert 0 < np.abs(zhat - z).max() < 1.0

    def test_noise_free_without_privacy_flags(self, capsys):
        code, out, _ = run(capsys, "simulate", "--system", SYSTEM, "--gain", GAIN,
                           "--x0", "[1, 2]", "--z0", "1,2", "--steps", "5")
        rows = list(csv.reader(io.StringIO(out)))
        assert code == 0
        for r in rows[1:]:
            assert r[1:3] == r[3:5] == r[5:7]

    def test_bad_vector(self, capsys):
        assert run(capsys, "simulate", "--system", SYSTEM, "--gain", GAIN, "--x0", "a,b",
                   "--steps", "5")[0] == 1


class TestEmpirical:
    def test_report(self, capsys):
        code, out, _ = run(capsys, "empirical", "--system", SYSTEM, "--gain", GAIN,
                           "--K", "1", "--alpha", "0.5")
        res = json.loads(out)
        assert code == 0
        assert res["exact"] is True
        assert 0.995 <= res["ratio"] <= 1 + 1e-6

    def test_unstable_gain(self, capsys, tmp_path):
        zero = write_json(tmp_path / "zero.json", matrix([[0.0], [0.0]]))
        assert run(capsys, "empirical", "--system", SYSTEM, "--gain", zero,
                   "--K", "1", "--alpha", "0.5")[0] == 2


class TestPipeline:
    def test_end_to_end(self, capsys, tmp_path):
        csv_path, summary_path = tmp_path / "run.csv", tmp_path / "summary.json"
        code, out, _ = run(capsys, "pipeline", "--system", SYSTEM, "--K", "0.5", "--alpha", "0.2",
                           "--epsilon", "1", "--delta", "0.05", "--x0", "1,1", "--steps", "200",
                           "--out", str(csv_path), "--summary", str(summary_path))
        assert code == 0
        summary = json.loads(summary_path.read_text())
        assert summary == json.loads(out)
        rows = list(csv.reader(io.StringIO(csv_path.read_text())))
        assert len(rows) - 1 == 200 == summary["csv_rows"]
        k = kappa(PrivacyParams(1.0, 0.05))
        assert summary["sigma"] == pytest.approx(
            k * math.sqrt(summary["design"]["bound_squared"]), rel=1e-12)
        assert summary["final_estimation_error"] < 1e-6

    def test_stage_prefix(self, capsys):
        code, _, err = run(capsys, "pipeline", "--system", SYSTEM, "--K", "0.5", "--alpha", "0.2",
                           "--epsilon", "1", "--delta", "0.05", "--x0", "1,1,1", "--steps", "5",
                           "--grid", "8")
        assert code == 1
        assert "simulate:" in err


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "dp_observer", "calibrate", "--epsilon", "0.5", "--delta", "0.5",
         "--delta-G", "3"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["sigma"] == 3.0
