"""Report serialization and figures.

CSV files use a fixed, documented column order so downstream tooling can
rely on position as well as header. The figure renderers draw the standard
result views (improvement per cell, overhead/QoE trade-off, rebuffer
ratios) next to the delimited output; the CSVs stay the canonical record.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402 — backend must be pinned first

DETAIL_COLUMNS = (
    "video_id", "segmentation", "augmentation", "abr", "bucket", "trace_id", "split",
    "eval_model", "qoe_total", "quality_sum", "rebuffer_s", "switching_sum",
    "rebuffer_ratio", "fluctuation_raw", "mean_vmaf", "startup_delay_s", "wall_time_s",
    "improvement_pct",
)

ROLLUP_COLUMNS = (
    "video_id", "segmentation", "augmentation", "abr", "bucket", "eval_model",
    "n_traces", "n_segments", "n_augmentations", "byte_overhead_pct", "qoe_mean",
    "improvement_mean_pct", "improvement_p5_pct", "improvement_p95_pct",
    "rebuffer_ratio_mean", "fluctuation_raw_mean", "fluctuation_normalized",
    "mean_vmaf_mean",
)

BUCKET_COLORS = {"SLOW": "#d62728", "MEDIUM": "#ff7f0e", "FAST": "#2ca02c"}


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[dict]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return path


def read_csv(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def _cell_label(row: dict) -> str:
    return f"{row['video_id']}/{row['segmentation']}+{row['augmentation']}/{row['abr']}"


def render_report_figures(rollup_rows: list[dict], outdir: str | Path) -> list[Path]:
    """Render the standard figures for one rollup report. Returns the files
    written; empty when there is nothing to plot."""
    outdir = Path(outdir)
    rows = [r for r in rollup_rows if r.get("improvement_mean_pct") not in ("", None)]
    written: list[Path] = []
    if not rows:
        return written

    # 1) QoE improvement per cell, p5..p95 whiskers
    fig, ax = plt.subplots(figsize=(max(6.0, 0.45 * len(rows) + 2.0), 4.2))
    xs = range(len(rows))
    means = [float(r["improvement_mean_pct"]) for r in rows]
    lo = [float(r["improvement_p5_pct"]) for r in rows]
    hi = [float(r["improvement_p95_pct"]) for r in rows]
    colors = [BUCKET_COLORS.get(r["bucket"], "#1f77b4") for r in rows]
    ax.bar(xs, means, color=colors)
    ax.errorbar(xs, means,
                yerr=[[m - l for m, l in zip(means, lo)], [h - m for m, h in zip(means, hi)]],
                fmt="none", ecolor="black", capsize=3, linewidth=1)
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xticks(list(xs))
    ax.set_xticklabels([f"{_cell_label(r)}\n{r['bucket']}" for r in rows],
                       rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("QoE improvement vs constant baseline [% of max QoE]")
    fig.tight_layout()
    path = outdir / "fig_improvement.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    # 2) byte overhead vs improvement trade-off
    fig, ax = plt.subplots(figsize=(5.2, 4.2))
    for r in rows:
        ax.scatter(float(r["byte_overhead_pct"]), float(r["improvement_mean_pct"]),
                   color=BUCKET_COLORS.get(r["bucket"], "#1f77b4"), s=28)
        ax.annotate(f"{r['segmentation']}+{r['augmentation']}",
                    (float(r["byte_overhead_pct"]), float(r["improvement_mean_pct"])),
                    fontsize=6, xytext=(3, 3), textcoords="offset points")
    ax.set_xlabel("byte overhead [%]")
    ax.set_ylabel("QoE improvement [% of max QoE]")
    ax.axhline(0.0, color="black", linewidth=0.8)
    fig.tight_layout()
    path = outdir / "fig_tradeoff.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    # 3) rebuffer ratio per cell
    fig, ax = plt.subplots(figsize=(max(6.0, 0.45 * len(rollup_rows) + 2.0), 4.2))
    xs = range(len(rollup_rows))
    ax.bar(xs, [float(r["rebuffer_ratio_mean"]) for r in rollup_rows],
           color=[BUCKET_COLORS.get(r["bucket"], "#1f77b4") for r in rollup_rows])
    ax.set_xticks(list(xs))
    ax.set_xticklabels([f"{_cell_label(r)}\n{r['bucket']}" for r in rollup_rows],
                       rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("rebuffer ratio [s/min]")
    fig.tight_layout()
    path = outdir / "fig_rebuffer.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written


def render_compare_figure(delta_rows: list[dict], outdir: str | Path) -> list[Path]:
    outdir = Path(outdir)
    rows = [r for r in delta_rows if r.get("delta_improvement_mean_pct") not in ("", None)]
    if not rows:
        return []
    fig, ax = plt.subplots(figsize=(max(6.0, 0.45 * len(rows) + 2.0), 4.2))
    xs = range(len(rows))
    vals = [float(r["delta_improvement_mean_pct"]) for r in rows]
    ax.bar(xs, vals, color=["#2ca02c" if v >= 0 else "#d62728" for v in vals])
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xticks(list(xs))
    ax.set_xticklabels([f"{_cell_label(r)}\n{r['bucket']}" for r in rows],
                       rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("delta QoE improvement [% points, B - A]")
    fig.tight_layout()
    path = outdir / "fig_compare.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return [path]
