"""Matplotlib rendering of sweep trend summaries to PNG files.

Used by the CLI report path; the evaluation library itself only emits data
files. All figures are written headlessly (Agg backend).
"""

from __future__ import annotations

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

AXIS_LABELS = {
    "rmse_vs_snr_db": "SNR (dB)",
    "rmse_vs_t60_s": "T60 (s)",
    "rmse_vs_lateral_bucket_deg": "lateral angle bucket (deg)",
}

_STYLE = {
    "figure.figsize": (6.0, 4.0),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "legend.fontsize": 8,
}


def render_trend_figures(summary, out_dir, prefix="rmse"):
    """One PNG per trend axis: RMSE curves for every variant present.

    Returns the list of written paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    with plt.rc_context(_STYLE):
        for axis, trend in summary.get("trends", {}).items():
            fig, ax = plt.subplots()
            for variant in sorted(trend):
                cells = trend[variant]
                xs = sorted(cells, key=float)
                ys = [cells[x]["rmse_deg"] for x in xs]
                xs_f = [float(x) for x in xs]
                ax.plot(xs_f, [y if y is not None else float("nan")
                               for y in ys],
                        marker="o", linewidth=1.2, label=variant)
            ax.set_xlabel(AXIS_LABELS.get(axis, axis))
            ax.set_ylabel("lateral RMSE (deg)")
            ax.set_title(axis.replace("_", " "))
            ax.legend(loc="best")
            fig.tight_layout()
            path = os.path.join(out_dir, f"{prefix}_{axis}.png")
            fig.savefig(path, dpi=140)
            plt.close(fig)
            paths.append(path)
    return paths


def render_histogram(result, out_path, truth=None):
    """Histogram of per-bin lateral estimates for one localization run."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        hist = result.histogram
        if hist is not None and hist.laterals.size:
            ax.hist(hist.laterals, bins=45, range=(0.0, 180.0),
                    color="#4878a8", edgecolor="white")
            ax.axvline(result.lateral, color="k", linestyle="--",
                       label=f"estimate {result.lateral:.1f} deg")
        if truth is not None:
            ax.axvline(truth, color="r", linestyle=":",
                       label=f"truth {truth:.1f} deg")
        ax.set_xlabel("lateral angle (deg)")
        ax.set_ylabel("bins")
        ax.legend(loc="best")
        fig.tight_layout()
        fig.savefig(out_path, dpi=140)
        plt.close(fig)
    return out_path
