"""Long-format plot data and matplotlib figures for experiment results."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

HIST_COLUMNS = ["series", "bin_left", "bin_right", "count"]
COUNT_COLUMNS = ["series", "n", "frequency"]


def histogram_rows(series: str, data, bins: int = 40) -> list[dict]:
    data = np.asarray(data, dtype=float)
    if data.size == 0:
        return []
    lo, hi = float(data.min()), float(data.max())
    # spreads at the rounding level (e.g. a clock batch) collapse into one bin
    if hi - lo <= 1e-9 * max(1.0, abs(hi)):
        return [{"series": series, "bin_left": lo, "bin_right": hi, "count": int(data.size)}]
    counts, edges = np.histogram(data, bins=bins, range=(lo, hi))
    return [{"series": series, "bin_left": float(a), "bin_right": float(b), "count": int(c)}
            for a, b, c in zip(edges[:-1], edges[1:], counts)]


def ecdf_table(series: dict) -> tuple[list[str], list[list[float]]]:
    """Empirical CDFs of every series evaluated on the merged sorted support."""
    names = list(series)
    arrays = [np.sort(np.asarray(series[k], dtype=float)) for k in names]
    nonempty = [a for a in arrays if a.size]
    if not nonempty:
        return ["x"] + names, []
    xs = np.unique(np.concatenate(nonempty))
    cols = [xs]
    for a in arrays:
        cols.append(np.searchsorted(a, xs, side="right") / a.size if a.size
                    else np.full(xs.size, np.nan))
    return ["x"] + names, np.column_stack(cols).tolist()


def _write(path: Path, header, rows, dict_rows=True):
    with open(path, "w", newline="") as fh:
        if dict_rows:
            w = csv.DictWriter(fh, fieldnames=header)
            w.writeheader()
            w.writerows(rows)
        else:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)


def emit_plotdata(result, out_dir) -> list[Path]:
    """Write histograms.csv, ecdf.csv and counts.csv (header-only when empty)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    hist = []
    for name, data in result.gap_series.items():
        hist.extend(histogram_rows(name, data))
    _write(out / "histograms.csv", HIST_COLUMNS, hist)
    header, rows = ecdf_table(result.gap_series)
    _write(out / "ecdf.csv", header, rows, dict_rows=False)
    counts = []
    for name, data in result.count_series.items():
        vals, freq = np.unique(np.asarray(data, dtype=int), return_counts=True)
        counts.extend({"series": name, "n": int(v), "frequency": int(f)} for v, f in zip(vals, freq))
    _write(out / "counts.csv", COUNT_COLUMNS, counts)
    return [out / "histograms.csv", out / "ecdf.csv", out / "counts.csv"]


AXIS_LABELS = {
    "second_order": "second-order spacing X(n)",
    "phase_uniformity": "left phase mod 2 pi",
}


def render_figures(result, out_dir) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    series = {k: np.asarray(v, dtype=float) for k, v in result.gap_series.items() if len(v)}
    if series:
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
        for name, data in series.items():
            ax1.hist(data, bins=40, density=True, histtype="step", label=name)
            xs = np.sort(data)
            ax2.step(xs, np.arange(1, xs.size + 1) / xs.size, where="post", label=name)
        xlabel = AXIS_LABELS.get(result.report.get("experiment"), "central gap")
        ax1.set_xlabel(xlabel)
        ax1.set_ylabel("density")
        ax2.set_xlabel(xlabel)
        ax2.set_ylabel("empirical CDF")
        ax1.legend(fontsize=8)
        fig.suptitle(result.report.get("experiment", ""))
        fig.tight_layout()
        path = out / "distributions.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    if result.count_series:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for name, data in result.count_series.items():
            vals, freq = np.unique(np.asarray(data, dtype=int), return_counts=True)
            ax.plot(vals, freq / freq.sum(), "o-", label=name, ms=3)
        ax.set_xlabel("N")
        ax.set_ylabel("frequency")
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = out / "counts.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
