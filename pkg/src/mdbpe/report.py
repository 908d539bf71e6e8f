"""Report rendering for compression measurements: delimited output plus
matplotlib figures written next to it."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .codec import CompressionReport

LENGTHS_CSV = "lengths.csv"
SUMMARY_CSV = "summary.csv"
HISTOGRAM_PNG = "length_histogram.png"


def write_lengths_csv(report: CompressionReport, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["grid_index", "compressed_length"])
        for i, length in enumerate(report.lengths):
            writer.writerow([i, int(length)])


def write_summary_csv(report: CompressionReport, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        writer.writerow(["grids", int(report.lengths.size)])
        writer.writerow(["total_cells", report.total_cells])
        writer.writerow(["total_tokens", report.total_tokens])
        writer.writerow(["compression_percent", f"{report.percent:.4f}"])
        writer.writerow(["mean_length", f"{report.mean_length:.4f}"])
        writer.writerow(["max_length", report.max_length])


def render_length_histogram(report: CompressionReport, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    edges = report.hist_edges
    widths = edges[1:] - edges[:-1]
    ax.bar(edges[:-1], report.hist_counts, width=widths, align="edge",
           color="#4878cf", edgecolor="white")
    ax.set_xlabel("compressed sequence length (tokens)")
    ax.set_ylabel("grids")
    ax.set_title(
        f"compression {report.percent:.2f}% "
        f"({report.total_tokens}/{report.total_cells} tokens/cells)"
    )
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(report: CompressionReport, out_dir: Path) -> list[Path]:
    """Write the delimited tables and the histogram figure; returns paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [
        out_dir / LENGTHS_CSV,
        out_dir / SUMMARY_CSV,
        out_dir / HISTOGRAM_PNG,
    ]
    write_lengths_csv(report, paths[0])
    write_summary_csv(report, paths[1])
    render_length_histogram(report, paths[2])
    return paths
