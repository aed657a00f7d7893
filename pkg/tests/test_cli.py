import json
import math
import subprocess
import sys

import pytest
from click.testing import CliRunner

from bgwscale.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


def _invoke(runner, args):
    return runner.invoke(main, args, catch_exceptions=False)


class TestScaleCommand:
    def test_phi_payload(self, runner, model_dir):
        r = _invoke(runner, ["scale", "--model", str(model_dir / "m1.json"),
                             "--q", "0.5", "--x", "1"])
        assert r.exit_code == 0
        doc = json.loads(r.stdout)
        assert doc["phi_q"] == pytest.approx(3 - 6 * math.log(1.5), rel=1e-10)

    def test_psi(self, runner, model_dir):
        r = _invoke(runner, ["scale", "--model", str(model_dir / "m4.json"),
                             "--fn", "psi", "--q", "1", "--x", "1"])
        assert r.exit_code == 0
        assert json.loads(r.stdout)["psi_q"] == pytest.approx(1.28 / 12, rel=1e-9)

    def test_csv_range(self, runner, model_dir):
        r = _invoke(runner, ["scale", "--model", str(model_dir / "m1.json"),
                             "--q", "1", "--x", "0..3", "--out", "csv"])
        lines = r.stdout.strip().splitlines()
        assert lines[0] == "x,phi_q"
        assert len(lines) == 5
        assert float(lines[1].split(",")[1]) == pytest.approx(1.0, abs=1e-12)

    def test_round_trip_floats(self, runner, model_dir):
        r = _invoke(runner, ["scale", "--model", str(model_dir / "m1.json"),
                             "--q", "0.5", "--x", "2"])
        text_value = json.loads(r.stdout)["phi_q"]
        # shortest-repr floats round-trip exactly
        assert json.loads(json.dumps({"v": text_value}))["v"] == text_value


class TestPassageCommands:
    def test_lt_known_value(self, runner, model_dir):
        r = _invoke(runner, ["passage", "lt", "--model", str(model_dir / "m2.json"),
                             "--q", "1", "--x", "1", "--a", "0"])
        assert r.exit_code == 0
        assert json.loads(r.stdout)["value"] == pytest.approx(0.5, abs=1e-9)

    def test_regime_refusal_exit2(self, runner, model_dir):
        r = _invoke(runner, ["passage", "lt", "--model", str(model_dir / "m2.json"),
                             "--q", "0.5", "--x", "1", "--a", "0"])
        assert r.exit_code == 2
        assert "phi_q" in r.stderr

    def test_usage_exit64(self, runner, model_dir):
        r = _invoke(runner, ["passage", "lt", "--model", str(model_dir / "m2.json"),
                             "--q", "1"])
        assert r.exit_code == 64

    def test_prob_and_explosion(self, runner, model_dir):
        r = _invoke(runner, ["passage", "prob", "--model", str(model_dir / "m4.json"),
                             "--x", "1", "--a", "0"])
        assert json.loads(r.stdout)["value"] == pytest.approx(0.36, rel=1e-9)
        r = _invoke(runner, ["passage", "explosion", "--model", str(model_dir / "m4.json"),
                             "--x", "1", "--a", "0"])
        assert json.loads(r.stdout)["value"] == pytest.approx(0.64, rel=1e-9)
        r = _invoke(runner, ["passage", "explosion", "--model", str(model_dir / "m4.json"),
                             "--x", "1", "--a", "0", "--mean"])
        assert json.loads(r.stdout)["value"] == pytest.approx(1.92, rel=1e-9)

    def test_atmin(self, runner, model_dir):
        r = _invoke(runner, ["passage", "atmin", "--model", str(model_dir / "m3.json"),
                             "--q", "1", "--x", "3", "--alpha", "0.5"])
        doc = json.loads(r.stdout)
        assert doc["pmf"]["2"] == pytest.approx(0.25, abs=1e-9)
        assert set(doc) == {"pmf", "lt_G", "lt_residual"}

    def test_tilt(self, runner, model_dir):
        r = _invoke(runner, ["passage", "tilt", "--model", str(model_dir / "m2.json"),
                             "--qbar", "0"])
        doc = json.loads(r.stdout)
        assert doc["offspring"]["pmf"]["0"] == pytest.approx(2 / 3, abs=1e-10)
        assert doc["mu"] == pytest.approx(2.0, abs=1e-10)

    def test_condition(self, runner, model_dir):
        r = _invoke(runner, ["passage", "condition", "--model", str(model_dir / "m1.json"),
                             "--q", "0.5", "--x-max", "3"])
        doc = json.loads(r.stdout)
        assert doc["leave_rates"]["1"] == pytest.approx(1.5)
        assert doc["kill_rate"] == pytest.approx(1.322263, abs=1e-5)

    def test_mean(self, runner, model_dir):
        r = _invoke(runner, ["passage", "mean", "--model", str(model_dir / "m1.json"),
                             "--x", "1", "--a", "0"])
        assert json.loads(r.stdout)["value"] == pytest.approx(4 * math.log(1.5), rel=1e-9)

    def test_avalanche(self, runner, model_dir):
        r = _invoke(runner, ["passage", "avalanche", "--model", str(model_dir / "m1.json"),
                             "--q", "0", "--qbar", "1", "--x", "2", "--a", "0"])
        assert json.loads(r.stdout)["value"] == pytest.approx(
            (4 - math.sqrt(13)) ** 2, rel=1e-10)


class TestModelCommands:
    def test_check_good(self, runner, model_dir):
        r = _invoke(runner, ["model", "check", "--model", str(model_dir / "m1.json")])
        assert r.exit_code == 0
        assert json.loads(r.stdout)["valid"] is True

    def test_check_bad(self, runner, model_dir):
        r = _invoke(runner, ["model", "check", "--model", str(model_dir / "bad.json")])
        assert r.exit_code == 2
        doc = json.loads(r.stdout)
        assert doc["valid"] is False
        assert any("nonincreasing" in v for v in doc["violations"])

    def test_classify(self, runner, model_dir):
        r = _invoke(runner, ["model", "classify", "--model", str(model_dir / "m4.json")])
        doc = json.loads(r.stdout)
        assert doc["criticality"] == "supercritical"
        assert doc["explosive"] is True
        assert doc["varphi"] == pytest.approx(0.36, abs=1e-12)

    def test_missing_file(self, runner):
        r = _invoke(runner, ["model", "classify", "--model", "/nonexistent.json"])
        assert r.exit_code == 64


class TestControlCommands:
    def test_value(self, runner, model_dir):
        r = _invoke(runner, ["control", "value", "--model", str(model_dir / "m1.json"),
                             "--q", "0.5", "--x", "1"])
        assert json.loads(r.stdout)["value"] == pytest.approx(1.310586, abs=1e-6)

    def test_bellman(self, runner, model_dir):
        r = _invoke(runner, ["control", "bellman", "--model", str(model_dir / "m1.json"),
                             "--q", "0.5", "--x-max", "8", "--f-max", "8"])
        assert r.exit_code == 0
        assert json.loads(r.stdout)["ok"] is True

    def test_rejects_immigration_model(self, runner, model_dir):
        r = _invoke(runner, ["control", "value", "--model", str(model_dir / "m3.json"),
                             "--q", "0.5", "--x", "1"])
        assert r.exit_code == 2

    def test_simulate(self, runner, model_dir):
        r = _invoke(runner, ["control", "simulate", "--model", str(model_dir / "m1.json"),
                             "--q", "0.5", "--x", "1", "--paths", "4000", "--seed", "3"])
        doc = json.loads(r.stdout)
        assert abs(doc["mean"] - 1.310586) <= 4 * doc["se"]


class TestSimulateCommand:
    def test_lt(self, runner, model_dir):
        r = _invoke(runner, ["simulate", "--model", str(model_dir / "m2.json"),
                             "--kind", "lt", "--q", "1", "--x", "1", "--a", "0",
                             "--paths", "5000", "--seed", "5", "--threshold", "400",
                             "--max-jumps", "100000"])
        doc = json.loads(r.stdout)
        assert abs(doc["mean"] - 0.5) <= 4 * doc["se"]


class TestVerifyCommand:
    def test_analytic_m1(self, runner, model_dir):
        r = _invoke(runner, ["verify", "--model", str(model_dir / "m1.json"),
                             "--suite", "analytic"])
        assert r.exit_code == 0
        assert "FAIL" not in r.stdout
        summary = json.loads(r.stdout.strip().splitlines()[-1])
        assert summary["failed"] == 0

    def test_analytic_m4_includes_dichotomy(self, runner, model_dir):
        r = _invoke(runner, ["verify", "--model", str(model_dir / "m4.json"),
                             "--suite", "analytic"])
        assert r.exit_code == 0
        assert "dichotomy" in r.stdout

    def test_control_suite(self, runner, model_dir):
        r = _invoke(runner, ["verify", "--model", str(model_dir / "m1.json"),
                             "--suite", "control", "--paths", "5000", "--seed", "7"])
        assert r.exit_code == 0, r.stdout


class TestDeterminism:
    def test_byte_identical_stdout(self, model_dir):
        cmd = [sys.executable, "-m", "bgwscale.cli", "simulate",
               "--model", str(model_dir / "m3.json"), "--kind", "lt", "--q", "1",
               "--x", "2", "--a", "0", "--paths", "3000", "--seed", "11",
               "--max-jumps", "100000"]
        outs = [subprocess.run(cmd, capture_output=True, check=True).stdout
                for _ in range(2)]
        assert outs[0] == outs[1]
