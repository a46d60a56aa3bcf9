"""Figure rendering for study outputs.

Every study writes delimited data first; these helpers render the matching
figures to image files next to it.  Matplotlib is imported here and nowhere
else, with the Agg backend forced so rendering works headless.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Iterable, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .bench import ScalingReport
from .metrics import SummaryRow
from .runner import RunResult

FILTER_COLORS = {"kalman": "tab:red", "jpdaf": "tab:blue", "gmphd": "tab:green"}
AXIS_LABELS = {
    "clutter": "clutter rate (false positives / frame)",
    "gauss": "measurement noise fraction",
    "miss": "detection probability",
    "none": "",
}


def _color(filter_kind: str) -> str:
    return FILTER_COLORS.get(filter_kind, "tab:gray")


def render_run_figure(result: RunResult, path: str) -> None:
    """Pixel coordinates against time: truth, detections, and estimates."""
    fig, axes = plt.subplots(2, 1, figsize=(9, 7), sharex=True)
    times = [f.time for f in result.frames]
    n = result.scenario.n_targets

    for ax, component, label in ((axes[0], 0, "u [px]"), (axes[1], 1, "v [px]")):
        for f in result.frames:
            if len(f.detections):
                ax.plot(
                    [f.time] * len(f.detections),
                    f.detections[:, component],
                    "x",
                    color="0.75",
                    markersize=3,
                    zorder=1,
                )
        for d in range(n):
            truth = [
                f.true_pixels[d][component] if f.visible[d] else np.nan for f in result.frames
            ]
            ax.plot(times, truth, "-", color="black", linewidth=0.8, zorder=2)
            # estimate tuple layout is (gid, label, u, v): u at 2, v at 3
            est = [
                next((e[2 + component] for e in f.estimates if e[0] == d), np.nan)
                for f in result.frames
            ]
            ax.plot(times, est, ".", markersize=3, zorder=3, label=f"drone {d}")
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
    axes[0].set_title(f"{result.filter_kind} on {n} targets (seed {result.scenario.seed})")
    axes[0].legend(loc="upper right", fontsize=8)
    axes[1].set_xlabel("time [s]")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_noise_figure(rows: Sequence[SummaryRow], path: str) -> None:
    """RMSE versus noise level, one panel per axis, one line per filter."""
    axes_present = [a for a in ("clutter", "gauss", "miss") if any(r.noise_axis == a for r in rows)]
    if not axes_present:
        axes_present = sorted({r.noise_axis for r in rows})
    fig, panels = plt.subplots(1, len(axes_present), figsize=(4.5 * len(axes_present), 4))
    if len(axes_present) == 1:
        panels = [panels]
    for panel, axis in zip(panels, axes_present):
        series: dict[str, list[tuple[float, float]]] = defaultdict(list)
        for r in rows:
            if r.noise_axis == axis and r.noise_level is not None:
                series[r.filter_kind].append((r.noise_level, r.rmse))
        for filt in sorted(series):
            pts = sorted(series[filt])
            panel.plot(
                [p[0] for p in pts],
                [p[1] for p in pts],
                "o-",
                color=_color(filt),
                label=filt,
            )
        panel.set_xlabel(AXIS_LABELS.get(axis, axis))
        panel.set_ylabel("mean RMSE [px]")
        panel.set_yscale("log")
        panel.grid(True, alpha=0.3)
        panel.legend(fontsize=8)
    fig.suptitle("Tracking error under isolated noise axes")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_scaling_figure(reports: Iterable[ScalingReport], path: str) -> None:
    """Log-log update time versus target count, one line per filter."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for report in reports:
        ns = [n for n, p in report.points.items() if p.mean_s is not None]
        if not ns:
            continue
        means = [report.points[n].mean_s for n in ns]
        slope = report.slope
        label = report.filter_kind if slope is None else f"{report.filter_kind} (slope {slope:.2f})"
        ax.plot(ns, means, "o-", color=_color(report.filter_kind), label=label)
        censored = [n for n, p in report.points.items() if p.censored]
        for n in censored:
            ax.axvline(n, color=_color(report.filter_kind), linestyle=":", alpha=0.4)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("number of targets")
    ax.set_ylabel("mean update time [s]")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_consensus_figure(agreement: Mapping[float, float], path: str) -> None:
    """Consensus agreement rate versus injected noise fraction."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    levels = sorted(agreement)
    ax.plot(levels, [agreement[l] for l in levels], "o-", color="tab:purple")
    ax.set_xlabel("measurement noise fraction")
    ax.set_ylabel("agreement with ground truth")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
