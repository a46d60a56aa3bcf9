"""Drives one tracker through one simulated scenario.

The runner owns everything around the filter: initialization from the
scenario's starting truth, feeding IMU samples and detection frames in
order, consensus identity assignment (once at startup, again whenever a
tracker invents a fresh local label), bookkeeping for metrics, and wall
clock timing of the update calls only.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .consensus import GlobalAssignment, assign_ids
from .geometry import BehindCamera, project
from .motion import ModelParams, StateGaussian, control_matrix
from .sim import GroundTruthFrame, ImuSample, ScenarioConfig, generate, true_pixel_states
from .tracking import TrackEstimate, TrackerConfig, make_tracker

DEFAULT_INITIAL_COVARIANCE = np.diag([100.0, 25.0, 100.0, 25.0])
DEFAULT_INITIAL_COVARIANCE.setflags(write=False)

# Filters never assume literally zero clutter: a lone unexplained detection
# would otherwise make every joint association event impossible.
MIN_CLUTTER_RATE = 0.05

# A drone id stays reserved for this many detection frames after the label
# carrying it last reported, so a one-frame dropout cannot hand the id to a
# coincidental new track.  The horizon matches the labeler's own memory: an
# id frees up exactly when its old label can no longer rebind.
ID_RESERVE_FRAMES = 15
# A freed id is inherited only by a fresh label within this pixel distance
# of the id's last reported position coasted forward at its last velocity.
ID_RECOVERY_RADIUS = 45.0


class TrackingRuntimeError(RuntimeError):
    """A tracker failed mid-run; carries the detection frame index."""

    def __init__(self, frame_index: int, frame_time: float, cause: BaseException) -> None:
        super().__init__(f"tracking failed at frame {frame_index} (t={frame_time:.3f}s): {cause}")
        self.frame_index = frame_index
        self.frame_time = frame_time
        self.cause = cause


@dataclass
class FrameRecord:
    """Everything recorded at one detection frame."""

    index: int
    time: float
    true_pixels: np.ndarray
    visible: np.ndarray
    occluded: np.ndarray
    detections: np.ndarray
    # (global drone id or None, local label, u, v) per reported track
    estimates: list[tuple[int | None, int, float, float]]


@dataclass
class AssignmentEvent:
    """One consensus pass: when, what it decided, and what was correct."""

    time: float
    assignment: GlobalAssignment
    # local label -> truth-nearest drone index at event time (None if no truth)
    truth_nearest: dict[int, int | None]
    initial: bool


@dataclass
class RunResult:
    scenario: ScenarioConfig
    filter_kind: str
    frames: list[FrameRecord] = field(default_factory=list)
    update_times: list[float] = field(default_factory=list)
    assignment_events: list[AssignmentEvent] = field(default_factory=list)
    # local label -> broadcast drone id, as consensus left it at run end
    label_to_drone: dict[int, int | None] = field(default_factory=dict)


def default_tracker_config(scenario: ScenarioConfig, **overrides) -> TrackerConfig:
    """Tracker parameters implied by a scenario.

    The measurement covariance is always the scenario's reference noise,
    even when the injected fraction is zero: filters need a non-degenerate R
    and every filter gets the same one.
    """
    params = dict(
        model=ModelParams(dt=1.0 / scenario.imu_rate, intrinsics=scenario.intrinsics),
        measurement_noise=scenario.reference_measurement_noise,
        detection_prob=scenario.noise.detect_prob if scenario.noise.detect_prob > 0 else 1e-3,
        clutter_rate=max(scenario.noise.clutter_count, MIN_CLUTTER_RATE),
    )
    params.update(overrides)
    return TrackerConfig(**params)


def initial_tracks_from_truth(
    scenario: ScenarioConfig, initial_covariance: np.ndarray | None = None
) -> list[StateGaussian]:
    """One Gaussian per drone in front of the camera at t=0, seeded on truth.

    The state's velocity components represent image motion net of the
    observer's rotation (the motion model re-adds that part through its
    coupling term), so the rotation-induced share of the observed pixel
    velocity is subtracted here.
    """
    cov = DEFAULT_INITIAL_COVARIANCE if initial_covariance is None else initial_covariance
    states, in_front = true_pixel_states(scenario, 0.0)
    omega = scenario.observer.angular_velocity
    unit_params = ModelParams(dt=1.0, intrinsics=scenario.intrinsics)
    tracks = []
    for i in range(scenario.n_targets):
        if not in_front[i]:
            continue
        s = states[i].copy()
        rot_vel = control_matrix(s, unit_params) @ omega  # dt=1: displacement = velocity
        s[1] -= rot_vel[0]
        s[3] -= rot_vel[2]
        tracks.append(StateGaussian(s, cov.copy()))
    return tracks


def _truth_nearest(
    estimates: list[TrackEstimate], truth: np.ndarray, in_front: np.ndarray
) -> dict[int, int | None]:
    live = [i for i in range(len(truth)) if in_front[i]]
    out: dict[int, int | None] = {}
    for est in estimates:
        if not live:
            out[est.local_track_index] = None
            continue
        d = [float(np.linalg.norm(est.position - truth[i])) for i in live]
        out[est.local_track_index] = live[int(np.argmin(d))]
    return out


def run_tracking(
    scenario: ScenarioConfig,
    filter_kind: str,
    tracker_config: TrackerConfig | None = None,
    initial_covariance: np.ndarray | None = None,
    **tracker_kwargs,
) -> RunResult:
    """Simulate the scenario and track it with the named filter."""
    config = tracker_config or default_tracker_config(scenario)
    initial = initial_tracks_from_truth(scenario, initial_covariance)
    tracker = make_tracker(filter_kind, config, initial, **tracker_kwargs)

    result = RunResult(scenario=scenario, filter_kind=filter_kind)
    label_map: dict[int, int | None] = {}
    # drone id -> (frame index, time, position, velocity) at last report
    last_report: dict[int, tuple[int, float, np.ndarray, np.ndarray]] = {}

    # Initial consensus pass on the freshly seeded tracks.
    pose0 = scenario.observer.pose_at(0.0)
    estimates = tracker.estimates()
    assignment = assign_ids(estimates, scenario.broadcast, pose0, scenario.intrinsics)
    label_map.update(assignment.mapping)
    for est in estimates:
        gid = label_map.get(est.local_track_index)
        if gid is not None:
            last_report[gid] = (-1, 0.0, est.position.copy(), est.state.velocity.copy())
    truth0, in_front0 = true_pixel_states(scenario, 0.0)
    result.assignment_events.append(
        AssignmentEvent(
            0.0,
            assignment,
            _truth_nearest(estimates, truth0[:, [0, 2]], in_front0),
            initial=True,
        )
    )

    prev_time = 0.0
    frame_index = 0
    for event in generate(scenario):
        if isinstance(event, ImuSample):
            dt = event.time - prev_time
            prev_time = event.time
            try:
                tracker.predict_step(event.omega, dt)
            except Exception as exc:  # pragma: no cover - surfaced with context
                raise TrackingRuntimeError(frame_index, event.time, exc) from exc
            continue

        frame: GroundTruthFrame = event
        try:
            start = time.perf_counter()
            estimates = tracker.update_step(frame.measurements)
            elapsed = time.perf_counter() - start
        except Exception as exc:
            raise TrackingRuntimeError(frame_index, frame.time, exc) from exc
        result.update_times.append(elapsed)

        # Identity maintenance.  Labels without an id (never seen, or denied
        # earlier) retry every frame, but only ids with no recent claimant
        # are up for grabs: a fresh label while every drone is still tracked
        # is a clutter-born track, and forcing an id onto it would hand a
        # real drone's identity to a phantom.  Surplus tracks stay
        # unassigned.  A freed id goes only to a label that appears near
        # where the id was last seen, which is how a drone that was lost
        # long enough for its label to expire gets its name back.
        needy = [e for e in estimates if label_map.get(e.local_track_index) is None]
        if needy:
            claimed_now = {
                label_map[e.local_track_index]
                for e in estimates
                if label_map.get(e.local_track_index) is not None
            }
            reserved = claimed_now | {
                gid
                for gid, (fi, _, _, _) in last_report.items()
                if frame_index - fi <= ID_RESERVE_FRAMES
            }
            pose = scenario.observer.pose_at(frame.time)
            anchors: dict[int, np.ndarray] = {}
            for entry in scenario.broadcast.entries:
                gid = entry.drone_id
                if gid in reserved:
                    continue
                if gid in last_report:
                    _, t_last, pos, vel = last_report[gid]
                    anchors[gid] = pos + vel * (frame.time - t_last)
                else:
                    try:
                        anchors[gid] = project(entry.position, pose, scenario.intrinsics).as_array()
                    except BehindCamera:
                        continue

            residuals: dict[int, dict[int, float]] = {}
            pairs: list[tuple[float, int, int]] = []
            for e in needy:
                dists = {
                    gid: float(np.linalg.norm(e.position - anchor))
                    for gid, anchor in anchors.items()
                }
                residuals[e.local_track_index] = dists
                pairs.extend((d, e.local_track_index, gid) for gid, d in dists.items())

            taken: set[int] = set()
            won: dict[int, int] = {}
            for d, lab, gid in sorted(pairs):
                if d > ID_RECOVERY_RADIUS:
                    break
                if lab in won or gid in taken:
                    continue
                won[lab] = gid
                taken.add(gid)

            # Record a decision for every label resolving right now; labels
            # already denied once keep retrying silently until they win.
            event_map: dict[int, int | None] = {}
            for e in needy:
                lab = e.local_track_index
                if lab in won:
                    gid = won[lab]
                    for other, prev in label_map.items():
                        if prev == gid:
                            label_map[other] = None  # expired claimant
                    label_map[lab] = gid
                    event_map[lab] = gid
                elif lab not in label_map:
                    label_map[lab] = None
                    event_map[lab] = None
            if event_map:
                decided = [e for e in needy if e.local_track_index in event_map]
                result.assignment_events.append(
                    AssignmentEvent(
                        frame.time,
                        GlobalAssignment(
                            event_map,
                            {lab: residuals.get(lab, {}) for lab in event_map},
                        ),
                        _truth_nearest(decided, frame.true_pixels, frame.visible),
                        initial=False,
                    )
                )

        for e in estimates:
            gid = label_map.get(e.local_track_index)
            if gid is not None:
                last_report[gid] = (
                    frame_index,
                    frame.time,
                    e.position.copy(),
                    e.state.velocity.copy(),
                )

        result.frames.append(
            FrameRecord(
                index=frame_index,
                time=frame.time,
                true_pixels=frame.true_pixels,
                visible=frame.visible,
                occluded=frame.occluded,
                detections=frame.measurements.stacked(),
                estimates=[
                    (
                        label_map.get(e.local_track_index),
                        e.local_track_index,
                        e.state.p_u,
                        e.state.p_v,
                    )
                    for e in estimates
                ],
            )
        )
        frame_index += 1

    result.label_to_drone = dict(label_map)
    return result
