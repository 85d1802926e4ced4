"""Matplotlib figures rendered next to report files.

Everything here draws to files through the Agg backend; no display is
required or used.
"""

from __future__ import annotations

import os
import tempfile

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .metrics import METRIC_NAMES, SWEEP_KINDS, SWEEP_METRICS, MetricReport, SweepRow

_KIND_COLORS = {"erode": "tab:blue", "dilate": "tab:orange"}

_METRIC_LABELS = {
    "mse": "MSE",
    "psnr_db": "PSNR (dB)",
    "ssim": "SSIM",
    "edge_loss": "edge loss",
}


def _save(fig, path: str) -> None:
    # write-then-rename so a crash never leaves a truncated figure behind
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".png")
    os.close(fd)
    try:
        fig.savefig(tmp, format="png", dpi=120)
        os.replace(tmp, path)
    finally:
        plt.close(fig)
        if os.path.exists(tmp):
            os.unlink(tmp)


def robustness_figure(rows: list[SweepRow], path: str) -> None:
    """One panel per metric: median vs radius with a quartile band per kind."""
    fig, axes = plt.subplots(1, len(SWEEP_METRICS), figsize=(4.2 * len(SWEEP_METRICS), 3.4))
    for ax, metric in zip(axes, SWEEP_METRICS):
        for kind in SWEEP_KINDS:
            picked = sorted((r for r in rows if r.kind == kind and r.metric == metric),
                            key=lambda r: r.radius)
            if not picked:
                continue
            radii = [r.radius for r in picked]
            color = _KIND_COLORS.get(kind)
            ax.plot(radii, [r.median for r in picked], marker="o", label=kind, color=color)
            ax.fill_between(radii, [r.q1 for r in picked], [r.q3 for r in picked],
                            alpha=0.2, color=color)
        ax.set_xlabel("degradation radius (px)")
        ax.set_ylabel(_METRIC_LABELS.get(metric, metric))
        ax.grid(True, alpha=0.3)
        ax.legend()
    fig.suptitle("render robustness to disparity degradation")
    fig.tight_layout()
    _save(fig, path)


def report_figure(report: MetricReport, path: str) -> None:
    """Histogram panel per metric present in the report rows."""
    present = [m for m in METRIC_NAMES
               if any(r.get(m) is not None for r in report.rows)]
    if not present:
        raise ValueError("report holds no metric values to plot")
    fig, axes = plt.subplots(1, len(present), figsize=(4.2 * len(present), 3.4),
                             squeeze=False)
    for ax, metric in zip(axes[0], present):
        vals = [r[metric] for r in report.rows if r.get(metric) is not None]
        bins = min(20, max(5, len(vals)))
        ax.hist(vals, bins=bins, color="tab:blue", alpha=0.8)
        ax.set_xlabel(_METRIC_LABELS.get(metric, metric))
        ax.set_ylabel("count")
        ax.grid(True, alpha=0.3)
    fig.suptitle(f"metric distribution over {len(report.rows)} image pairs")
    fig.tight_layout()
    _save(fig, path)
