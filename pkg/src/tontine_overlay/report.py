"""Report emission: delimited tables and companion matplotlib figures.

Every table starts with '# key=value' comment lines carrying the config
fingerprint and the seed, so a rerun with the same configuration is
byte-identical.  Figures are rendered next to their tables when requested.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

FLOAT_FMT = "%.8g"


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return FLOAT_FMT % float(x)


def write_table(path: str | Path, header: list, rows: list,
                fingerprint: str = "", seed=None, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# config_fingerprint={fingerprint}"]
    if seed is not None:
        lines.append(f"# seed={seed}")
    for k, v in (extra or {}).items():
        lines.append(f"# {k}={v}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    path.write_text("\n".join(lines) + "\n")
    return path


FRONTIER_HEADER = ["kappa", "EW_per_year", "ES", "median_WT", "Wstar", "value"]


def write_frontier(path, points, fingerprint="", seed=None, extra=None) -> Path:
    rows = [[p.kappa, p.ew_per_year, p.es, p.median_wt, p.wstar, p.value]
            for p in points]
    return write_table(path, FRONTIER_HEADER, rows, fingerprint, seed, extra)


def write_percentiles(outdir, stats, fingerprint="", seed=None) -> list:
    """One file per recorded quantity: date,p5,p50,p95."""
    outdir = Path(outdir)
    written = []
    for name, arr in stats.percentiles.items():
        rows = [[i, arr[i, 0], arr[i, 1], arr[i, 2]] for i in range(arr.shape[0])]
        written.append(write_table(
            outdir / f"percentiles_{name}.csv", ["date", "p5", "p50", "p95"],
            rows, fingerprint, seed,
            extra={"percentile_rule": "nearest-rank",
                   "subsample": stats.percentile_subsample}))
    return written


def write_heatmaps(outdir, maps: dict, fingerprint="", seed=None) -> list:
    outdir = Path(outdir)
    written = []
    for name in ("stock_fraction", "withdrawal_norm"):
        rows = []
        for i, date in enumerate(maps["dates"]):
            for j, w in enumerate(maps["wealth"]):
                rows.append([int(date), w, maps[name][i, j]])
        written.append(write_table(outdir / f"heatmap_{name}.csv",
                                   ["date", "wealth", "value"], rows,
                                   fingerprint, seed))
    return written


# ---------------------------------------------------------------------------
# figures


def render_frontier(path, labelled_frontiers, title="EW-ES efficient frontier") -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    for label, points in labelled_frontiers:
        pts = sorted((p for p in points if p.status == "ok"), key=lambda p: p.es)
        ax.plot([p.es for p in pts], [p.ew_per_year for p in pts],
                marker="o", ms=3.5, label=label)
    ax.set_xlabel("expected shortfall at 5% (thousands)")
    ax.set_ylabel("expected withdrawals per year (thousands)")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def render_percentiles(outdir, stats, prefix="percentiles") -> list:
    outdir = Path(outdir)
    labels = {"wealth": "wealth (thousands)",
              "withdrawal": "withdrawal per year (thousands)",
              "stock_fraction": "fraction in stocks"}
    written = []
    for name, arr in stats.percentiles.items():
        fig, ax = plt.subplots(figsize=(5.0, 3.8))
        t = np.arange(arr.shape[0])
        ax.fill_between(t, arr[:, 0], arr[:, 2], alpha=0.25, label="p5-p95")
        ax.plot(t, arr[:, 1], lw=1.8, label="median")
        ax.set_xlabel("rebalancing date (years)")
        ax.set_ylabel(labels.get(name, name))
        ax.grid(alpha=0.3)
        ax.legend()
        fig.tight_layout()
        p = outdir / f"{prefix}_{name}.png"
        fig.savefig(p, dpi=150)
        plt.close(fig)
        written.append(p)
    return written


def render_heatmaps(outdir, maps: dict, prefix="heatmap") -> list:
    outdir = Path(outdir)
    written = []
    titles = {"stock_fraction": "fraction in stocks",
              "withdrawal_norm": "normalized withdrawal"}
    for name in ("stock_fraction", "withdrawal_norm"):
        fig, ax = plt.subplots(figsize=(5.4, 4.2))
        mesh = ax.pcolormesh(maps["dates"], maps["wealth"], maps[name].T,
                             cmap="RdYlBu_r", vmin=0.0, vmax=1.0,
                             shading="nearest")
        ax.set_yscale("log")
        ax.set_xlabel("rebalancing date (years)")
        ax.set_ylabel("wealth (thousands)")
        ax.set_title(titles[name])
        fig.colorbar(mesh, ax=ax)
        fig.tight_layout()
        p = outdir / f"{prefix}_{name}.png"
        fig.savefig(p, dpi=150)
        plt.close(fig)
        written.append(p)
    return written
