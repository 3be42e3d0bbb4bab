"""Figures for sweep reports: throughput, speedup and energy against CSD count."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.4),
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
}

# PNG metadata would otherwise embed the matplotlib version string.
_SAVE_KW = {"dpi": 120, "metadata": {"Software": None}}


def _by_network(rows):
    out = {}
    for r in rows:
        out.setdefault(r["network"], []).append(r)
    for v in out.values():
        v.sort(key=lambda r: int(r["n_csds"]))
    return out


def _line_plot(rows, column, ylabel, path, scale=1.0):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for net, rs in sorted(_by_network(rows).items()):
            ax.plot(
                [int(r["n_csds"]) for r in rs],
                [float(r[column]) * scale for r in rs],
                marker="o",
                ms=3,
                label=net,
            )
        ax.set_xlabel("number of CSDs")
        ax.set_ylabel(ylabel)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, **_SAVE_KW)
        plt.close(fig)
    return Path(path)


def render_figures(rows, outdir) -> list[Path]:
    """Write throughput, speedup and energy plots for sweep CSV rows; returns the paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = [
        _line_plot(rows, "img_per_sec", "images / second", outdir / "throughput.png"),
        _line_plot(rows, "speedup", "speedup over host", outdir / "speedup.png"),
        _line_plot(rows, "j_per_img", "energy per image (J)", outdir / "energy_per_image.png"),
    ]
    if any("csd_img_per_sec" in r and r["csd_img_per_sec"] not in ("", None) for r in rows):
        with_csd = [r for r in rows if int(r["n_csds"]) > 0]
        paths.append(_line_plot(with_csd, "csd_img_per_sec", "per-CSD images / second", outdir / "per_node_speed.png"))
    return paths
