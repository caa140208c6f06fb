import csv
import io
import json
import subprocess
import sys

import pytest

from bestprox.cli import ConfigError, ExperimentConfig, load_config, main, parse_start
from bestprox.iterate import TRACE_SCHEMA


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


SMALL = ("--depth", "6", "--horizon", "10", "--samples", "50")


class TestReproduce:
    def test_small_config_passes(self, capsys):
        code, out, _ = run(capsys, "reproduce-paper", *SMALL)
        assert code == 0
        report = json.loads(out)
        assert report["dist"] == 1.0 and report["passed"]
        # below the convergence-claim horizon the orbit checks are reported only
        orbit = {c["check"]: c for c in report["checks"]}["u-orbit-final-residual"]
        assert orbit["enforced"] is False

    def test_depth_four(self, capsys):
        code, _, _ = run(capsys, "reproduce-paper", "--depth", "4", "--horizon", "10", "--samples", "30")
        assert code == 0

    def test_byte_identical(self, capsys):
        _, first, _ = run(capsys, "reproduce-paper", *SMALL)
        _, second, _ = run(capsys, "reproduce-paper", *SMALL)
        assert first == second

    def test_csv_format(self, capsys):
        code, out, _ = run(capsys, "reproduce-paper", *SMALL, "--format", "csv")
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0 and rows[0]["check"] == "dist-analytic"

    def test_zero_tolerance_rejected(self, capsys, caplog):
        code, _, _ = run(capsys, "reproduce-paper", "--tol", "0")
        assert code == 2 and "tol" in caplog.text


class TestCheck:
    def test_day_rectangle(self, capsys):
        code, out, _ = run(capsys, "check", "day", "rectangle", "--depth", "8", "--samples", "200")
        data = json.loads(out)
        assert code == 0 and data["verdict"] == "holds-on-samples"
        assert data["max_violation"] <= 1e-12

    def test_supnorm_sharpness_fails(self, capsys):
        code, out, _ = run(capsys, "check", "supnorm-demo", "sharpness")
        data = json.loads(out)
        assert code == 1 and data["verdict"] == "violated"
        assert len(data["witness"]["nearest"]) == 2

    def test_unknown_property(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["check", "day", "unknown-prop"])
        assert info.value.code == 2

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "bestprox", "check", "supnorm-demo", "sharpness"],
                              capture_output=True, text=True)
        assert proc.returncode == 1 and '"violated"' in proc.stdout

    def test_euclidean_hilbert(self, capsys):
        code, out, _ = run(capsys, "check", "euclidean", "hilbert-orthogonality", "--samples", "100")
        assert code == 0 and json.loads(out)["verdict"] == "holds-on-samples"

    def test_writes_out_file(self, capsys, tmp_path):
        target = tmp_path / "r.json"
        code, out, _ = run(capsys, "check", "day", "uc", "--depth", "6", "--out", str(target))
        assert code == 0 and out == ""
        assert json.loads(target.read_text())["property"] == "uc"


class TestTrace:
    def test_zero(self, capsys):
        code, out, _ = run(capsys, "trace", "zero", "--depth", "8", "--horizon", "12", "--format", "csv")
        lines = out.splitlines()
        assert code == 0 and lines[0] == TRACE_SCHEMA
        rows = list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))
        assert len(rows) == 12 and all(float(r["residual"]) == 0.0 for r in rows)

    def test_a2_converges(self, capsys):
        code, out, _ = run(capsys, "trace", "a2", "--horizon", "200", "--format", "json")
        rows = json.loads(out)["rows"]
        assert code == 0 and rows[-1]["residual"] <= 1e-6

    def test_outside_hull(self, capsys, caplog):
        code, _, _ = run(capsys, "trace", "0.5,0.5,0.5")
        assert code == 2 and "sum to 1.5" in caplog.text

    def test_parse_start(self):
        assert parse_start("a3", 6).leading().tolist() == [0, 0, 1, 0, 0, 0]
        assert parse_start("0.25,0.5", 6).leading().tolist() == [0, 0.25, 0.5, 0, 0, 0]
        with pytest.raises(ConfigError):
            parse_start("a1", 6)
        with pytest.raises(ConfigError):
            parse_start("nonsense", 6)


class TestCoefficients:
    def test_table(self, capsys):
        code, out, _ = run(capsys, "coefficients", "--n-max", "5", "--format", "csv")
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0 and rows[0]["n"] == "1"
        assert float(rows[0]["b_n"]) == 0.5 and rows[0]["c_n"] == ""
        assert float(rows[1]["P_n"]) == pytest.approx(0.60653, abs=1e-5)

    def test_bad_n_max(self, capsys):
        assert run(capsys, "coefficients", "--n-max", "1")[0] == 2


class TestConfig:
    def test_file_and_override(self, tmp_path, capsys):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("# experiment\ndepth = 6\nhorizon = 10\nsamples = 40\nformat = csv\n")
        assert load_config(cfg)["depth"] == 6
        code, out, _ = run(capsys, "reproduce-paper", "--config", str(cfg), "--format", "json")
        report = json.loads(out)
        assert code == 0
        assert report["config"]["depth"] == 6 and report["config"]["samples"] == 40

    def test_bad_key(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("colour = blue\n")
        assert run(capsys, "reproduce-paper", "--config", str(cfg))[0] == 2

    @pytest.mark.parametrize("kwargs", [
        {"depth": 3}, {"horizon": 5, "window": 6}, {"window": 0}, {"samples": 0}, {"tol": 0.0},
        {"format": "xml"},
    ])
    def test_invariants(self, kwargs):
        with pytest.raises(ConfigError):
            ExperimentConfig(**kwargs).validate()
