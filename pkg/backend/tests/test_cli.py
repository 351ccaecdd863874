#!/usr/bin/env python3
"""
Command-line tests: exit codes, summaries and result tables.
"""

import csv
import json

import pytest

from cli.commands import build_parser, load_run_config, run, settings_for_run

TRIVIAL_SWEEP = """
geometry:
  r2: 1.0
  r3: 2.0
  trivial: true
source:
  kind: point_dipole
  radius: 1.2
ladder: [1.0e-2, 1.0e-3, 1.0e-4, 1.0e-5]
"""

SOLVE = """
source:
  kind: surface_current
  radius: 1.5
  modes:
    - {n: 1, m: 0, pol: TE}
    - {n: 2, m: 1, pol: TM, re: 0.0, im: 1.0}
delta: 1.0e-3
points:
  - [0.0, 0.0, 0.3]
  - [0.5, 0.5, 0.9]
  - [0.0, 3.0, 0.0]
"""


def write_config(tmp_path, text):
    path = tmp_path / "run.yml"
    path.write_text(text, encoding="utf-8")
    return str(path)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


def read_summary(directory):
    with open(directory / "summary.json", encoding="utf-8") as f:
        return json.load(f)


class TestParser:
    """Argument handling and overrides."""

    def test_flags_override_the_run_file(self, tmp_path):
        args = build_parser().parse_args([
            "sweep", "--config", write_config(tmp_path, TRIVIAL_SWEEP),
            "--workers", "3", "--seed", "9", "--out", str(tmp_path / "o"), "--plot",
        ])
        config = load_run_config(args)
        assert config.workers == 3
        assert config.seed == 9
        assert config.output.directory == str(tmp_path / "o")
        assert config.output.plot
        assert config.geometry.trivial

    def test_run_file_knobs_reach_the_settings(self, settings, tmp_path):
        text = TRIVIAL_SWEEP + "truncation:\n  n_floor: 20\nregions:\n  exterior_outer: 5.0\n"
        args = build_parser().parse_args(["sweep", "--config", write_config(tmp_path, text)])
        adjusted = settings_for_run(settings, load_run_config(args))
        assert adjusted.section("solver").truncation.n_floor == 20
        assert adjusted.section("resonance").exterior_outer_factor == pytest.approx(2.5)

    def test_command_is_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])


class TestCommands:
    """End-to-end command runs into a temporary directory."""

    def test_build(self, settings, tmp_path):
        out = tmp_path / "build"
        assert run(["build", "--out", str(out)], settings) == 0
        rows = read_csv(out / "build.csv")
        assert rows[0][0] == "layer"
        assert [row[0] for row in rows[1:]] == ["core", "core_annulus", "shell", "band", "exterior"]
        summary = read_summary(out)
        assert summary["status"] == "ok"
        assert summary["result"]["rho"] == pytest.approx(4.0)

    def test_verify(self, settings, tmp_path):
        out = tmp_path / "verify"
        assert run(["verify", "--out", str(out)], settings) == 0
        rows = read_csv(out / "verify.csv")
        assert all(row[3] == "true" for row in rows[1:])
        assert read_summary(out)["result"]["checks"]["wronskian_n300"]["passed"]

    def test_solve(self, settings, tmp_path):
        out = tmp_path / "solve"
        code = run(["solve", "--config", write_config(tmp_path, SOLVE), "--out", str(out), "--plot"], settings)
        assert code == 0
        rows = read_csv(out / "solve.csv")
        assert len(rows) == 4
        assert len(rows[0]) == 15
        assert (out / "profile.svg").exists()
        result = read_summary(out)["result"]
        assert result["n_max"] == 2
        assert result["power_shell"] > 0

    def test_trivial_sweep_rows_are_identical(self, settings, tmp_path):
        out = tmp_path / "sweep"
        code = run(["sweep", "--config", write_config(tmp_path, TRIVIAL_SWEEP), "--out", str(out)], settings)
        assert code == 0
        rows = read_csv(out / "sweep.csv")
        assert len(rows) == 5
        assert len({tuple(row[1:]) for row in rows[1:]}) == 1
        assert rows[1][1] == "0"
        summary = read_summary(out)
        assert summary["result"]["criticality"]["classification"] == "Bounded"

    def test_invalid_config_exits_with_2(self, settings, tmp_path):
        out = tmp_path / "bad"
        text = "geometry:\n  r2: 3.0\n  r3: 2.0\n"
        assert run(["build", "--config", write_config(tmp_path, text), "--out", str(out)], settings) == 2
        summary = read_summary(out)
        assert summary["status"] == "error"
        assert summary["error"]["error_code"] == "config_invalid"

    def test_missing_config_exits_with_2(self, settings, tmp_path):
        out = tmp_path / "missing"
        assert run(["build", "--config", str(tmp_path / "nope.yml"), "--out", str(out)], settings) == 2
        assert read_summary(out)["error"]["type"] == "ConfigurationError"

    def test_critical_needs_the_construction(self, settings, tmp_path):
        out = tmp_path / "critical"
        code = run(["critical", "--config", write_config(tmp_path, TRIVIAL_SWEEP), "--out", str(out)], settings)
        assert code == 2
        assert read_summary(out)["error"]["error_code"] == "trivial_medium"
        assert read_summary(out)["error"]["type"] == "ValidationError"
