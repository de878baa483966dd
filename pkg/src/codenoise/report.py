"""Figure rendering for experiment results.

Renders per-code AP scatter plots, the delta-bucket histogram, and a
method comparison bar chart to PNG files next to an experiment's
delimited output. The Agg backend is forced before pyplot loads so the
module works without a display.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .errors import EmptyInput  # noqa: E402
from .evaluation import BUCKET_LABELS, EvalReport, score_change_buckets  # noqa: E402
from .experiments import TableRow  # noqa: E402

_DPI = 150


def ap_scatter(report: EvalReport, path: str | Path) -> Path:
    """Per-code AP against both label versions, one point pair per code.

    Codes are placed on the x axis in report order; original-label AP is
    drawn as hollow circles, validated-label AP as filled ones, so a gap
    between the two marks for the same code shows the noise-driven drop.
    """
    if not report.per_code:
        raise EmptyInput(f"report {report.method!r} has no per-code rows")
    codes = report.codes()
    xs = range(len(codes))
    ap_orig = [c.ap_original for c in report.per_code]
    ap_val = [c.ap_validated for c in report.per_code]

    fig, ax = plt.subplots(figsize=(max(6.0, 0.35 * len(codes)), 4.5))
    ax.scatter(xs, ap_orig, facecolors="none", edgecolors="tab:blue", label="AP (original labels)")
    ax.scatter(xs, ap_val, color="tab:orange", marker="o", label="AP (validated labels)")
    ax.vlines(xs, ap_val, ap_orig, color="0.75", linewidth=0.8, zorder=0)
    ax.set_xticks(list(xs))
    ax.set_xticklabels(codes, rotation=90, fontsize=7)
    ax.set_ylim(-0.05, 1.05)
    ax.set_ylabel("average precision")
    ax.set_title(f"per-code AP, method={report.method}")
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=_DPI)
    plt.close(fig)
    return out


def bucket_bars(report: EvalReport, path: str | Path) -> Path:
    """Histogram of per-code AP deltas over the four fixed buckets."""
    if not report.per_code:
        raise EmptyInput(f"report {report.method!r} has no per-code rows")
    counts = score_change_buckets(c.delta for c in report.per_code)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.bar(range(len(BUCKET_LABELS)), [counts[b] for b in BUCKET_LABELS], color="tab:blue")
    ax.set_xticks(range(len(BUCKET_LABELS)))
    ax.set_xticklabels(BUCKET_LABELS, rotation=20, fontsize=8)
    ax.set_ylabel("codes")
    ax.set_title(f"AP delta buckets, method={report.method}")
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=_DPI)
    plt.close(fig)
    return out


def method_bars(rows: Sequence[TableRow], path: str | Path) -> Path:
    """Grouped MAP bars per method, original next to validated."""
    drawable = [r for r in rows if not math.isnan(r.map_validated)]
    if not drawable:
        raise EmptyInput("no methods with computable MAP")
    width = 0.38
    xs = range(len(drawable))
    fig, ax = plt.subplots(figsize=(max(6.0, 1.1 * len(drawable)), 4.0))
    ax.bar(
        [x - width / 2 for x in xs],
        [r.map_original for r in drawable],
        width,
        label="MAP (original labels)",
        color="tab:blue",
    )
    ax.bar(
        [x + width / 2 for x in xs],
        [r.map_validated for r in drawable],
        width,
        label="MAP (validated labels)",
        color="tab:orange",
    )
    ax.set_xticks(list(xs))
    ax.set_xticklabels([r.method for r in drawable], rotation=20, fontsize=8)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("mean average precision")
    ax.set_title("method comparison")
    ax.legend(fontsize=8)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=_DPI)
    plt.close(fig)
    return out


def render_figures(
    reports: Mapping[str, EvalReport], table: Sequence[TableRow], out_dir: str | Path
) -> list[Path]:
    """Render every figure for a finished run into out_dir/figures."""
    fig_dir = Path(out_dir) / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for method in sorted(reports):
        report = reports[method]
        if not report.per_code:
            continue
        written.append(ap_scatter(report, fig_dir / f"ap_scatter_{method}.png"))
        written.append(bucket_bars(report, fig_dir / f"buckets_{method}.png"))
    try:
        written.append(method_bars(table, fig_dir / "method_comparison.png"))
    except EmptyInput:
        pass
    return written
