"""Scaling benchmark: per-update cost of each filter versus target count.

Only the update call (association plus correction) sits inside the timed
region; simulation, prediction and bookkeeping are excluded.  Each point
gets a wall-clock budget; once it is spent the point stops early and, if not
a single update completed, is marked censored.  A null tracker that does no
work provides the harness-overhead baseline.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .runner import default_tracker_config, initial_tracks_from_truth
from .sim import GroundTruthFrame, ImuSample, NoiseConfig, ScenarioConfig, builtin_formation_scenario, generate
from .tracking import MeasurementSet, TrackEstimate, Tracker, TrackerConfig, make_tracker

DEFAULT_TIMEOUT_S = 60.0


class NullTracker(Tracker):
    """Does nothing; measures the timing harness itself."""

    def __init__(self, config: TrackerConfig, initial_tracks=()) -> None:
        super().__init__(config)

    def predict_step(self, omega, dt) -> None:
        self._note_predict(dt)

    def update_step(self, measurements: MeasurementSet) -> list[TrackEstimate]:
        self._note_update(measurements.frame_time)
        return []

    def estimates(self) -> list[TrackEstimate]:
        return []


@dataclass
class BenchPoint:
    """Timing sample for one (filter, n_targets) cell."""

    n_targets: int
    times: list[float] = field(default_factory=list)
    censored: bool = False

    @property
    def mean_s(self) -> float | None:
        return float(np.mean(self.times)) if self.times else None

    @property
    def median_s(self) -> float | None:
        return float(np.median(self.times)) if self.times else None


@dataclass
class ScalingReport:
    """All points for one filter plus the fitted log-log slope."""

    filter_kind: str
    points: dict[int, BenchPoint] = field(default_factory=dict)

    def __post_init__(self) -> None:
        ns = list(self.points)
        if ns != sorted(ns):
            raise ValueError("n_targets keys must be increasing")

    @property
    def slope(self) -> float | None:
        ns = [n for n, p in self.points.items() if p.mean_s is not None]
        if len(ns) < 2:
            return None
        x = np.log([float(n) for n in ns])
        y = np.log([self.points[n].mean_s for n in ns])
        return float(np.polyfit(x, y, 1)[0])

    def segment_slopes(self) -> list[float]:
        """Log-log slope of each consecutive uncensored segment."""
        ns = [n for n, p in self.points.items() if p.mean_s is not None]
        out = []
        for a, b in zip(ns, ns[1:]):
            ta, tb = self.points[a].mean_s, self.points[b].mean_s
            out.append(math.log(tb / ta) / math.log(b / a))
        return out


def _default_bench_scenario(n_targets: int, seed: int, frames: int) -> ScenarioConfig:
    # Just enough duration for the requested number of detection frames;
    # one clutter point per frame keeps association honestly non-trivial.
    duration = frames / 7.0 + 0.02
    return builtin_formation_scenario(
        n_targets=n_targets,
        duration=duration,
        seed=seed,
        noise=NoiseConfig(clutter_count=1.0, meas_noise_frac=0.25, detect_prob=0.97),
    )


def _bench_tracker_config(scenario: ScenarioConfig) -> TrackerConfig:
    # The gate is opened wide so association cost reflects the full
    # track-measurement product, the worst case the studies talk about.
    return default_tracker_config(scenario, gate_threshold=float("inf"))


def run_benchmark(
    filter_kind: str,
    n_targets_list: Sequence[int],
    scenario_template: Callable[[int, int], ScenarioConfig] | None = None,
    repetitions: int = 3,
    seed: int = 0,
    timeout_s: float = DEFAULT_TIMEOUT_S,
    frames_per_run: int = 4,
) -> ScalingReport:
    """Time update calls across target counts for one filter.

    ``scenario_template`` maps (n_targets, seed) to a scenario; the default
    crossing scenario is used otherwise.  Each point runs ``repetitions``
    fresh trackers over ``frames_per_run`` detection frames, stopping early
    once ``timeout_s`` of measured update time accumulates.
    """
    if repetitions < 3:
        raise ValueError("repetitions must be at least 3 for stable medians")
    ns = list(n_targets_list)
    if ns != sorted(ns) or len(set(ns)) != len(ns):
        raise ValueError("n_targets_list must be strictly increasing")

    report = ScalingReport(filter_kind)
    for n in ns:
        point = BenchPoint(n)
        budget = timeout_s
        for rep in range(repetitions):
            if budget <= 0.0:
                break
            scenario = (
                scenario_template(n, seed + rep)
                if scenario_template is not None
                else _default_bench_scenario(n, seed + rep, frames_per_run)
            )
            config = _bench_tracker_config(scenario)
            initial = initial_tracks_from_truth(scenario)
            if filter_kind == "null":
                tracker: Tracker = NullTracker(config, initial)
            else:
                tracker = make_tracker(filter_kind, config, initial)
            prev_t = 0.0
            for event in generate(scenario):
                if isinstance(event, ImuSample):
                    tracker.predict_step(event.omega, event.time - prev_t)
                    prev_t = event.time
                    continue
                frame: GroundTruthFrame = event
                start = time.perf_counter()
                tracker.update_step(frame.measurements)
                elapsed = time.perf_counter() - start
                point.times.append(elapsed)
                budget -= elapsed
                if budget <= 0.0:
                    break
        point.censored = not point.times
        report.points[n] = point
    return report
