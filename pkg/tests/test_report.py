"""Figure rendering: file outputs, empty-input handling, byte stability."""

from __future__ import annotations

import math

import pytest

from codenoise.errors import EmptyInput
from codenoise.evaluation import CodeEval, EvalReport
from codenoise.experiments import TableRow
from codenoise.report import ap_scatter, bucket_bars, method_bars, render_figures


def small_report(method: str = "vanilla") -> EvalReport:
    per_code = (
        CodeEval("J80", 0.9, 0.8, 4, 3),
        CodeEval("M54.5", 1.0, 0.4, 5, 2),
        CodeEval("R05", 0.7, 0.7, 2, 2),
    )
    return EvalReport(method=method, seed=0, per_code=per_code)


def small_table() -> list[TableRow]:
    return [
        TableRow("vanilla", 3, 0.87, 0.63, 0.25),
        TableRow("proposed", 3, 0.80, 0.75, None),
        TableRow("mlp_br", 0, math.nan, math.nan, None),
    ]


class TestSingleFigures:
    def test_ap_scatter_writes_png(self, tmp_path):
        out = ap_scatter(small_report(), tmp_path / "scatter.png")
        assert out.is_file()
        assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_ap_scatter_rejects_empty_report(self, tmp_path):
        empty = EvalReport(method="vanilla", seed=0, per_code=())
        with pytest.raises(EmptyInput):
            ap_scatter(empty, tmp_path / "scatter.png")

    def test_bucket_bars_writes_png(self, tmp_path):
        out = bucket_bars(small_report(), tmp_path / "buckets.png")
        assert out.is_file()

    def test_method_bars_writes_png(self, tmp_path):
        out = method_bars(small_table(), tmp_path / "methods.png")
        assert out.is_file()

    def test_method_bars_skips_nan_rows_but_needs_one(self, tmp_path):
        only_nan = [TableRow("vanilla", 0, math.nan, math.nan, None)]
        with pytest.raises(EmptyInput):
            method_bars(only_nan, tmp_path / "methods.png")

    def test_same_input_same_bytes(self, tmp_path):
        a = ap_scatter(small_report(), tmp_path / "a.png")
        b = ap_scatter(small_report(), tmp_path / "b.png")
        assert a.read_bytes() == b.read_bytes()


class TestRenderFigures:
    def test_writes_per_method_and_comparison(self, tmp_path):
        reports = {
            "vanilla": small_report("vanilla"),
            "proposed": small_report("proposed"),
        }
        written = render_figures(reports, small_table(), tmp_path)
        names = sorted(p.name for p in written)
        assert names == [
            "ap_scatter_proposed.png",
            "ap_scatter_vanilla.png",
            "buckets_proposed.png",
            "buckets_vanilla.png",
            "method_comparison.png",
        ]
        for path in written:
            assert path.parent == tmp_path / "figures"
            assert path.is_file()

    def test_empty_reports_are_skipped(self, tmp_path):
        reports = {
            "vanilla": small_report("vanilla"),
            "proposed": EvalReport(method="proposed", seed=0, per_code=()),
        }
        written = render_figures(reports, small_table(), tmp_path)
        names = sorted(p.name for p in written)
        assert "ap_scatter_proposed.png" not in names
        assert "ap_scatter_vanilla.png" in names
