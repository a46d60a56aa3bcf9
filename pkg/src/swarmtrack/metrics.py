"""Accuracy metrics and delimited output.

RMSE is matched strictly by global identity: the error of drone d is
measured against the estimate that *claims* to be drone d, never against
whichever estimate happens to be nearest.  A tracker that swaps two targets
therefore pays the full position error for as long as the swap lasts, and
identity mistakes dominate exactly where they should.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .runner import RunResult


@dataclass
class RunMetrics:
    """Headline numbers for one tracking run."""

    per_target_rmse: list[float]
    mean_rmse: float
    id_switch_count: int
    lost_track_frames: int
    consensus_agreement: float
    per_iteration_time: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        for r in self.per_target_rmse:
            if not (math.isnan(r) or r >= 0.0):
                raise ValueError(f"rmse must be non-negative, got {r}")
        if not 0.0 <= self.consensus_agreement <= 1.0:
            raise ValueError("consensus_agreement must lie in [0, 1]")

    @property
    def mean_iter_time_s(self) -> float:
        return float(np.mean(self.per_iteration_time)) if self.per_iteration_time else float("nan")


# An estimate frame is (time, [(global_id, u, v), ...]); truth frames carry
# (time, true_pixels, visible) in any object exposing those attributes.
EstimateFrame = tuple[float, Sequence[tuple[int | None, float, float]]]


def compute_rmse(
    estimate_frames: Iterable[EstimateFrame],
    truth_frames: Iterable,
    n_targets: int,
) -> tuple[list[float], float, int]:
    """ID-matched position RMSE; also counts lost (in-view, unclaimed) frames.

    Frames are matched on timestamps, so either input may arrive in any
    order.  The error set covers every in-view target frame: when an ID
    publishes nothing for a frame, the error is measured against its last
    report coasted at the velocity implied by its final two reports.  Going
    silent therefore costs whatever the coast misses by instead of quietly
    shrinking the frame set.  Silent frames are also tallied as lost; a
    target with no reports at all only counts as lost.
    """
    by_time: dict[float, dict[int, np.ndarray]] = {}
    for t, estimates in estimate_frames:
        slot: dict[int, np.ndarray] = {}
        for gid, u, v in estimates:
            if gid is not None and gid not in slot:
                slot[gid] = np.array([u, v])
        by_time[round(float(t), 9)] = slot

    sq_err = [0.0] * n_targets
    count = [0] * n_targets
    lost = 0
    # target -> ((t, pos) of last report, (t, pos) of the one before)
    history: dict[int, tuple[tuple[float, np.ndarray], tuple[float, np.ndarray] | None]] = {}
    for frame in sorted(truth_frames, key=lambda f: float(f.time)):
        t_now = float(frame.time)
        slot = by_time.get(round(t_now, 9), {})
        for d in range(n_targets):
            if not frame.visible[d]:
                continue
            est = slot.get(d)
            if est is None:
                lost += 1
                held = history.get(d)
                if held is None:
                    continue
                (t_last, pos_last), prev = held
                velocity = np.zeros(2)
                if prev is not None and t_last > prev[0]:
                    velocity = (pos_last - prev[1]) / (t_last - prev[0])
                est = pos_last + velocity * (t_now - t_last)
            else:
                history[d] = ((t_now, est), history[d][0] if d in history else None)
            sq_err[d] += float(np.sum((est - frame.true_pixels[d]) ** 2))
            count[d] += 1
    per_target = [
        math.sqrt(sq_err[d] / count[d]) if count[d] else float("nan") for d in range(n_targets)
    ]
    valid = [r for r in per_target if not math.isnan(r)]
    mean = float(np.mean(valid)) if valid else float("nan")
    return per_target, mean, lost


# A nearest-truth change only counts as an identity switch once the track is
# closer to the new target than to the old one by this margin, in pixels.
# During a close pass every target is near every track and "nearest" flips on
# sub-pixel differences; a real swap commits as soon as the targets separate.
SWITCH_HYSTERESIS_PX = 10.0


def count_id_switches(result: RunResult) -> int:
    """Count the times a track trades one true target for another.

    Tracks are followed by their local label; gaps (frames where the label
    is absent or no truth is in front) do not reset the comparison.  A trade
    is committed only when the track sits ``SWITCH_HYSTERESIS_PX`` closer to
    its new target than to its previous one, so transient ambiguity while
    targets pass each other does not register.
    """
    committed: dict[int, int] = {}
    switches = 0
    for frame in result.frames:
        live = [d for d in range(len(frame.true_pixels)) if frame.visible[d]]
        if not live:
            continue
        truth = frame.true_pixels
        for _gid, label, u, v in frame.estimates:
            pos = np.array([u, v])
            dists = {d: float(np.linalg.norm(pos - truth[d])) for d in live}
            d_near = min(dists, key=dists.get)
            prev = committed.get(label)
            if prev is None:
                committed[label] = d_near
            elif d_near != prev:
                d_prev = dists.get(prev)
                if d_prev is None or d_prev - dists[d_near] > SWITCH_HYSTERESIS_PX:
                    switches += 1
                    committed[label] = d_near
    return switches


def consensus_agreement(result: RunResult) -> float:
    """Fraction of consensus decisions that named the truth-nearest drone."""
    total = 0
    agree = 0
    for event in result.assignment_events:
        for label, nearest in event.truth_nearest.items():
            if nearest is None:
                continue
            total += 1
            if event.assignment.mapping.get(label) == nearest:
                agree += 1
    return agree / total if total else 1.0


def compute_run_metrics(result: RunResult) -> RunMetrics:
    """All metrics for one finished run."""
    estimate_frames = [
        (f.time, [(gid, u, v) for gid, _label, u, v in f.estimates]) for f in result.frames
    ]
    per_target, mean, lost = compute_rmse(
        estimate_frames, result.frames, result.scenario.n_targets
    )
    return RunMetrics(
        per_target_rmse=per_target,
        mean_rmse=mean,
        id_switch_count=count_id_switches(result),
        lost_track_frames=lost,
        consensus_agreement=consensus_agreement(result),
        per_iteration_time=list(result.update_times),
    )


def _fmt(value: float | int | None) -> str:
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    v = float(value)
    if math.isnan(v):
        return ""
    return repr(v)


RUN_CSV_COLUMNS = ["frame", "time_s", "target_id", "true_u", "true_v", "est_u", "est_v", "filter", "seed"]


def write_run_csv(result: RunResult, path: str) -> None:
    """Per-frame, per-target trace with the fixed column order."""
    broadcast_ids = [e.drone_id for e in result.scenario.broadcast.entries]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RUN_CSV_COLUMNS)
        for frame in result.frames:
            by_gid: dict[int, tuple[float, float]] = {}
            for gid, _label, u, v in frame.estimates:
                if gid is not None and gid not in by_gid:
                    by_gid[gid] = (u, v)
            for d, drone_id in enumerate(broadcast_ids):
                if d < len(frame.true_pixels) and np.isfinite(frame.true_pixels[d]).all():
                    true_u, true_v = frame.true_pixels[d]
                else:
                    true_u = true_v = None
                est = by_gid.get(drone_id)
                writer.writerow(
                    [
                        frame.index,
                        _fmt(frame.time),
                        drone_id,
                        _fmt(true_u),
                        _fmt(true_v),
                        _fmt(est[0]) if est else "",
                        _fmt(est[1]) if est else "",
                        result.filter_kind,
                        result.scenario.seed,
                    ]
                )


SUMMARY_CSV_COLUMNS = [
    "filter",
    "n_targets",
    "noise_axis",
    "noise_level",
    "rmse",
    "id_switches",
    "mean_iter_time_s",
]


@dataclass(frozen=True)
class SummaryRow:
    """One aggregated study result (one filter at one study cell)."""

    filter_kind: str
    n_targets: int
    noise_axis: str
    noise_level: float | None
    rmse: float
    id_switches: float
    mean_iter_time_s: float


def write_summary_csv(rows: Iterable[SummaryRow], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_CSV_COLUMNS)
        for r in rows:
            writer.writerow(
                [
                    r.filter_kind,
                    r.n_targets,
                    r.noise_axis,
                    _fmt(r.noise_level),
                    _fmt(r.rmse),
                    _fmt(r.id_switches),
                    _fmt(r.mean_iter_time_s),
                ]
            )
