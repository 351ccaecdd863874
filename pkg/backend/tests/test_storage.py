#!/usr/bin/env python3
"""
Result artefact tests: CSV, JSON and SVG output.
"""

import json
import math

import pytest

from core.exceptions import StorageError
from utils.result_writer import ResultWriter, format_number
from utils.svg_plot import line_plot


class TestNumberFormatting:
    """Deterministic cell text."""

    def test_round_trip_precision(self):
        value = 0.1 + 0.2
        assert float(format_number(value)) == value

    @pytest.mark.parametrize("value,text", [
        (None, ""), (True, "true"), (3, "3"), (math.inf, "inf"), (-math.inf, "-inf"), (math.nan, "nan"),
    ])
    def test_special_values(self, value, text):
        assert format_number(value) == text


class TestResultWriter:
    """Atomic writes into one output directory."""

    def test_csv(self, tmp_path):
        writer = ResultWriter(tmp_path / "out")
        path = writer.write_csv("sweep.csv", ("delta", "power"), [(0.01, 1.5), (0.001, None)])
        assert path.read_text(encoding="utf-8") == "delta,power\n0.01,1.5\n0.001,\n"
        assert not (tmp_path / "out" / "sweep.csv.tmp").exists()

    def test_json_handles_non_finite_and_complex(self, tmp_path):
        writer = ResultWriter(tmp_path)
        path = writer.write_json("summary.json", {"radius": math.inf, "z": 1 + 2j, "nested": {"x": [1.0]}})
        data = json.loads(path.read_text(encoding="utf-8"))
        assert data == {"radius": "inf", "z": [1.0, 2.0], "nested": {"x": [1.0]}}

    def test_written_files_are_tracked(self, tmp_path):
        writer = ResultWriter(tmp_path)
        writer.write_svg("plot.svg", "<svg/>")
        writer.write_json("summary.json", {})
        assert [p.name for p in writer.written()] == ["plot.svg", "summary.json"]

    def test_from_settings(self, tmp_path, settings):
        writer = ResultWriter.from_settings(tmp_path, settings)
        assert writer.float_format == ".17g"

    def test_unwritable_directory(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("not a directory", encoding="utf-8")
        with pytest.raises(StorageError) as exc_info:
            ResultWriter(blocker / "out").write_json("summary.json", {})
        assert exc_info.value.error_code == "write_failed"


class TestSvgPlot:
    """Plain-text line plots."""

    def test_one_polyline_per_series(self):
        svg = line_plot(
            [("a", [0.0, 1.0, 2.0], [1.0, 0.5, 0.25]), ("b", [0.0, 2.0], [0.0, 1.0])],
            "Power", "x", "y",
        )
        assert svg.startswith("<svg")
        assert svg.count("<polyline") == 2

    def test_non_finite_points_are_skipped(self):
        svg = line_plot([("a", [0.0, 1.0, 2.0], [1.0, -math.inf, 0.5])], "t", "x", "y")
        coords = svg.split('points="', 1)[1].split('"', 1)[0]
        assert len(coords.split()) == 2
