"""Deterministic scenario simulator.

A scenario holds waypoint trajectories for every drone and for the observer,
camera intrinsics, sensor rates, and a noise model.  :func:`generate` turns
it into a time-ordered stream of IMU samples (at ``imu_rate``) interleaved
with ground-truth detection frames (at ``detection_rate``, snapped onto the
IMU grid, yielded after the coincident IMU sample).  All randomness comes
from one seeded generator with a fixed draw order per frame:

    1. one uniform per drone (detection Bernoulli, drawn even when hidden),
    2. two noise normals per emitted detection, in drone index order,
    3. the Poisson clutter count, then two uniforms per clutter point,
    4. one shuffle permutation over the assembled detection list.

Identical config and seed therefore reproduce the stream bit for bit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np
import yaml
from scipy.interpolate import CubicSpline
from scipy.spatial.transform import Rotation

from .consensus import BroadcastEntry, InitBroadcast
from .geometry import (
    BehindCamera,
    CameraIntrinsics,
    ObserverPose,
    PixelPoint,
    back_project,
    project,
)
from .tracking import Measurement, MeasurementSet


class ScenarioError(ValueError):
    """A scenario config is structurally or semantically invalid."""


@dataclass
class Trajectory:
    """Waypoints interpolated with a natural cubic spline (linear for two).

    Outside the waypoint time span the position holds the nearest endpoint.
    """

    times: np.ndarray
    points: np.ndarray

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.points = np.asarray(self.points, dtype=float).reshape(len(self.times), -1)
        if self.points.shape[1] != 3:
            raise ScenarioError("trajectory points must be 3-dimensional")
        if len(self.times) == 0:
            raise ScenarioError("trajectory needs at least one waypoint")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ScenarioError("waypoint times must be strictly increasing")
        self._spline = CubicSpline(self.times, self.points, bc_type="natural", axis=0) if len(self.times) > 1 else None

    def position(self, t: float) -> np.ndarray:
        if self._spline is None:
            return self.points[0].copy()
        t = min(max(t, self.times[0]), self.times[-1])
        return np.asarray(self._spline(t), dtype=float)

    def velocity(self, t: float) -> np.ndarray:
        if self._spline is None:
            return np.zeros(3)
        if t < self.times[0] or t > self.times[-1]:
            return np.zeros(3)
        return np.asarray(self._spline(t, 1), dtype=float)

    def to_dict(self) -> dict:
        return {
            "waypoints": [
                {"t": float(t), "xyz": [float(v) for v in p]}
                for t, p in zip(self.times, self.points)
            ]
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Trajectory":
        wps = d.get("waypoints")
        if not wps:
            raise ScenarioError("trajectory requires a non-empty 'waypoints' list")
        return cls(
            np.array([w["t"] for w in wps], dtype=float),
            np.array([w["xyz"] for w in wps], dtype=float),
        )


@dataclass
class ObserverConfig:
    """Observer trajectory plus a constant body-frame angular velocity."""

    trajectory: Trajectory = field(
        default_factory=lambda: Trajectory(np.array([0.0]), np.zeros((1, 3)))
    )
    rotation0: np.ndarray = field(default_factory=lambda: np.eye(3))
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        self.rotation0 = np.asarray(self.rotation0, dtype=float).reshape(3, 3)
        self.angular_velocity = np.asarray(self.angular_velocity, dtype=float).reshape(3)

    def pose_at(self, t: float) -> ObserverPose:
        # World->camera map rotating at a constant body rate:
        # R(t) = exp(-[w]x t) R(0).
        R = Rotation.from_rotvec(-self.angular_velocity * t).as_matrix() @ self.rotation0
        return ObserverPose(self.trajectory.position(t), R, self.angular_velocity)

    def to_dict(self) -> dict:
        rotvec = Rotation.from_matrix(self.rotation0).as_rotvec()
        return {
            **self.trajectory.to_dict(),
            "rotation_rotvec": [float(v) for v in rotvec],
            "angular_velocity": [float(v) for v in self.angular_velocity],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ObserverConfig":
        if "waypoints" in d:
            traj = Trajectory.from_dict(d)
        elif "position" in d:
            traj = Trajectory(np.array([0.0]), np.array([d["position"]], dtype=float))
        else:
            traj = Trajectory(np.array([0.0]), np.zeros((1, 3)))
        rotvec = np.asarray(d.get("rotation_rotvec", [0.0, 0.0, 0.0]), dtype=float)
        return cls(
            trajectory=traj,
            rotation0=Rotation.from_rotvec(rotvec).as_matrix(),
            angular_velocity=np.asarray(d.get("angular_velocity", [0.0, 0.0, 0.0]), dtype=float),
        )


@dataclass(frozen=True)
class NoiseConfig:
    """Three independent corruption axes plus deterministic occlusion.

    ``clutter_count``: Poisson mean of uniform false detections per frame.
    ``meas_noise_frac``: Gaussian pixel noise as a fraction of the reference
    measurement covariance.  ``detect_prob``: per-drone Bernoulli detection.
    ``occlusion_distance_px`` > 0 suppresses the higher-indexed drone of any
    pair closer than this distance in the image.
    """

    clutter_count: float = 0.0
    meas_noise_frac: float = 0.0
    detect_prob: float = 1.0
    occlusion_distance_px: float = 0.0

    def __post_init__(self) -> None:
        if self.clutter_count < 0.0:
            raise ScenarioError("clutter_count must be non-negative")
        if self.meas_noise_frac < 0.0:
            raise ScenarioError("meas_noise_frac must be non-negative")
        if not 0.0 <= self.detect_prob <= 1.0:
            raise ScenarioError("detect_prob must be in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "clutter_count": float(self.clutter_count),
            "meas_noise_frac": float(self.meas_noise_frac),
            "detect_prob": float(self.detect_prob),
            "occlusion_distance_px": float(self.occlusion_distance_px),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "NoiseConfig":
        return cls(
            clutter_count=float(d.get("clutter_count", 0.0)),
            meas_noise_frac=float(d.get("meas_noise_frac", 0.0)),
            detect_prob=float(d.get("detect_prob", 1.0)),
            occlusion_distance_px=float(d.get("occlusion_distance_px", 0.0)),
        )


@dataclass
class ScenarioConfig:
    """Everything needed to reproduce one simulated flight."""

    n_targets: int
    duration: float
    targets: list[Trajectory]
    observer: ObserverConfig = field(default_factory=ObserverConfig)
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    broadcast: InitBroadcast | None = None
    seed: int = 0
    imu_rate: float = 100.0
    detection_rate: float = 7.0
    measurement_noise_std: float = 2.0
    min_visible_fraction: float = 0.25

    def __post_init__(self) -> None:
        if self.n_targets < 1:
            raise ScenarioError("n_targets must be at least 1")
        if self.duration <= 0.0:
            raise ScenarioError("duration must be positive")
        if len(self.targets) != self.n_targets:
            raise ScenarioError(
                f"expected {self.n_targets} target trajectories, got {len(self.targets)}"
            )
        if self.detection_rate <= 0.0 or self.imu_rate < self.detection_rate:
            raise ScenarioError("rates must satisfy imu_rate >= detection_rate > 0")
        if self.measurement_noise_std <= 0.0:
            raise ScenarioError("measurement_noise_std must be positive")
        if self.broadcast is None:
            self.broadcast = InitBroadcast(
                BroadcastEntry(i, traj.position(0.0)) for i, traj in enumerate(self.targets)
            )

    @property
    def reference_measurement_noise(self) -> np.ndarray:
        s2 = self.measurement_noise_std**2
        return np.diag([s2, s2])

    def imu_times(self) -> np.ndarray:
        n = int(round(self.duration * self.imu_rate))
        return np.arange(1, n + 1) / self.imu_rate

    def detection_times(self) -> np.ndarray:
        """Detection frame times, snapped to the IMU sample grid."""
        n = int(math.floor(self.duration * self.detection_rate))
        raw = np.arange(1, n + 1) / self.detection_rate
        ticks = np.round(raw * self.imu_rate).astype(int)
        ticks = ticks[ticks <= int(round(self.duration * self.imu_rate))]
        return np.unique(ticks) / self.imu_rate

    def to_dict(self) -> dict:
        return {
            "n_targets": int(self.n_targets),
            "duration": float(self.duration),
            "seed": int(self.seed),
            "imu_rate": float(self.imu_rate),
            "detection_rate": float(self.detection_rate),
            "measurement_noise_std": float(self.measurement_noise_std),
            "min_visible_fraction": float(self.min_visible_fraction),
            "camera": {
                "focal_length": float(self.intrinsics.focal_length),
                "principal_point": [float(self.intrinsics.cu), float(self.intrinsics.cv)],
                "image_width": int(self.intrinsics.image_width),
                "image_height": int(self.intrinsics.image_height),
            },
            "noise": self.noise.to_dict(),
            "observer": self.observer.to_dict(),
            "targets": [t.to_dict() for t in self.targets],
            "broadcast": self.broadcast.to_list(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScenarioConfig":
        try:
            n_targets = int(d["n_targets"])
            duration = float(d["duration"])
        except KeyError as exc:
            raise ScenarioError(f"scenario requires key {exc.args[0]!r}") from None
        cam = d.get("camera", {})
        intrinsics = CameraIntrinsics(
            focal_length=float(cam.get("focal_length", 400.0)),
            principal_point=tuple(cam.get("principal_point", (320.0, 240.0))),
            image_width=int(cam.get("image_width", 640)),
            image_height=int(cam.get("image_height", 480)),
        )
        seed = int(d.get("seed", 0))
        if "targets" in d and d["targets"]:
            targets = [Trajectory.from_dict(t) for t in d["targets"]]
        else:
            targets = _crossing_trajectories(
                n_targets,
                duration,
                intrinsics,
                speed_scale=float(d.get("speed_scale", 1.0)),
                observer=ObserverConfig.from_dict(d.get("observer", {})),
                seed=seed,
                frame_rate=float(d.get("detection_rate", 7.0)),
            )
        config = cls(
            n_targets=n_targets,
            duration=duration,
            targets=targets,
            observer=ObserverConfig.from_dict(d.get("observer", {})),
            intrinsics=intrinsics,
            noise=NoiseConfig.from_dict(d.get("noise", {})),
            broadcast=InitBroadcast.from_list(d["broadcast"]) if d.get("broadcast") else None,
            seed=seed,
            imu_rate=float(d.get("imu_rate", 100.0)),
            detection_rate=float(d.get("detection_rate", 7.0)),
            measurement_noise_std=float(d.get("measurement_noise_std", 2.0)),
            min_visible_fraction=float(d.get("min_visible_fraction", 0.25)),
        )
        return config


@dataclass(frozen=True)
class ImuSample:
    """One inertial sample: the body angular rate the trackers consume."""

    time: float
    omega: np.ndarray


@dataclass(frozen=True)
class GroundTruthFrame:
    """One detection frame with its aligned ground truth.

    ``true_pixels`` holds NaN rows for drones behind the camera.
    ``provenance`` maps each detection to its source drone index, -1 for
    clutter; it exists for diagnostics and tests, trackers never see it.
    """

    time: float
    true_pixels: np.ndarray
    visible: np.ndarray
    occluded: np.ndarray
    measurements: MeasurementSet
    provenance: tuple[int, ...]


def true_pixel_states(config: ScenarioConfig, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Ground-truth 4-state (u, udot, v, vdot) per drone, plus in-front flags.

    Pixel velocities come from central differencing the projection, which is
    exact for the piecewise-cubic trajectories away from waypoint knots.
    """
    eps = 1e-4
    states = np.full((config.n_targets, 4), np.nan)
    in_front = np.zeros(config.n_targets, dtype=bool)
    pose = config.observer.pose_at(t)
    pose_lo = config.observer.pose_at(t - eps)
    pose_hi = config.observer.pose_at(t + eps)
    for i, traj in enumerate(config.targets):
        try:
            p = project(traj.position(t), pose, config.intrinsics)
            lo = project(traj.position(t - eps), pose_lo, config.intrinsics)
            hi = project(traj.position(t + eps), pose_hi, config.intrinsics)
        except BehindCamera:
            continue
        in_front[i] = True
        states[i] = [
            p.u,
            (hi.u - lo.u) / (2.0 * eps),
            p.v,
            (hi.v - lo.v) / (2.0 * eps),
        ]
    return states, in_front


def validate_scenario(config: ScenarioConfig) -> None:
    """Reject scenarios whose drones are effectively invisible.

    Every drone must project inside the image on at least one detection
    frame and on at least ``min_visible_fraction`` of them.
    """
    times = config.detection_times()
    if len(times) == 0:
        raise ScenarioError("duration too short for any detection frame")
    seen = np.zeros(config.n_targets, dtype=int)
    for t in times:
        pose = config.observer.pose_at(t)
        for i, traj in enumerate(config.targets):
            try:
                p = project(traj.position(t), pose, config.intrinsics)
            except BehindCamera:
                continue
            if config.intrinsics.contains(p):
                seen[i] += 1
    frac = seen / len(times)
    bad = [i for i in range(config.n_targets) if seen[i] == 0]
    if bad:
        raise ScenarioError(f"drones {bad} never enter the camera view")
    low = [i for i in range(config.n_targets) if frac[i] < config.min_visible_fraction]
    if low:
        raise ScenarioError(
            f"drones {low} are in view less than {config.min_visible_fraction:.0%} of frames"
        )


def generate(config: ScenarioConfig) -> Iterator[ImuSample | GroundTruthFrame]:
    """Yield the time-ordered event stream for one scenario run."""
    validate_scenario(config)
    rng = np.random.default_rng(config.seed)
    det_ticks = {int(round(t * config.imu_rate)) for t in config.detection_times()}
    omega = config.observer.angular_velocity
    noise_cov = config.noise.meas_noise_frac * config.reference_measurement_noise
    noise_chol = np.linalg.cholesky(noise_cov) if config.noise.meas_noise_frac > 0 else None

    for tick, t in enumerate(config.imu_times(), start=1):
        yield ImuSample(t, omega.copy())
        if tick not in det_ticks:
            continue

        pose = config.observer.pose_at(t)
        true_pixels = np.full((config.n_targets, 2), np.nan)
        in_front = np.zeros(config.n_targets, dtype=bool)
        visible = np.zeros(config.n_targets, dtype=bool)
        for i, traj in enumerate(config.targets):
            try:
                p = project(traj.position(t), pose, config.intrinsics)
            except BehindCamera:
                continue
            true_pixels[i] = (p.u, p.v)
            in_front[i] = True
            visible[i] = config.intrinsics.contains(p)

        occluded = np.zeros(config.n_targets, dtype=bool)
        d_occ = config.noise.occlusion_distance_px
        if d_occ > 0.0:
            for i in range(config.n_targets):
                for j in range(i):
                    if not (in_front[i] and in_front[j]):
                        continue
                    if np.linalg.norm(true_pixels[i] - true_pixels[j]) < d_occ:
                        occluded[i] = True  # higher index yields

        detect_draw = rng.uniform(size=config.n_targets)
        detections: list[Measurement] = []
        provenance: list[int] = []
        for i in range(config.n_targets):
            if not (visible[i] and not occluded[i]):
                continue
            if detect_draw[i] >= config.noise.detect_prob:
                continue
            point = true_pixels[i].copy()
            if noise_chol is not None:
                point = point + noise_chol @ rng.standard_normal(2)
            detections.append(Measurement(PixelPoint(float(point[0]), float(point[1]))))
            provenance.append(i)

        if config.noise.clutter_count > 0.0:
            n_clutter = int(rng.poisson(config.noise.clutter_count))
            for _ in range(n_clutter):
                u = rng.uniform(0.0, config.intrinsics.image_width)
                v = rng.uniform(0.0, config.intrinsics.image_height)
                detections.append(Measurement(PixelPoint(float(u), float(v))))
                provenance.append(-1)

        if detections:
            perm = rng.permutation(len(detections))
            detections = [detections[k] for k in perm]
            provenance = [provenance[k] for k in perm]

        yield GroundTruthFrame(
            time=t,
            true_pixels=true_pixels,
            visible=visible,
            occluded=occluded,
            measurements=MeasurementSet(t, detections),
            provenance=tuple(provenance),
        )


def _drone_depth(i: int, n: int) -> float:
    return 4.0 + 2.0 * i / max(n - 1, 1)


def _pixels_to_trajectory(
    waypoints: list[tuple[float, float, float]],
    depth: float,
    observer: ObserverConfig,
    intrinsics: CameraIntrinsics,
) -> Trajectory:
    """Back-project (t, u, v) waypoints to world points at a fixed camera-frame
    depth through the observer pose at each waypoint time."""
    times = np.array([w[0] for w in waypoints])
    points = []
    for t, u, v in waypoints:
        cam_point = back_project(PixelPoint(u, v), depth, intrinsics)
        pose = observer.pose_at(float(t))
        points.append(pose.rotation.T @ cam_point + pose.position)
    return Trajectory(times, np.array(points))


# Nominal half-width of a lane swap in seconds (at speed_scale 1), long
# enough that the implied acceleration stays trackable at the stock rates
# and short enough that a crossing is over in a few detection frames.
# Dwell time matters: a pass lasting a couple of frames probes association
# without giving mutual-exclusivity filters time to drift toward the pair
# centroid, which is how such filters lose identities in sustained
# formation flight.
_SWAP_HALF_NOMINAL = 0.5

# Sideways offset each partner carries through the middle of its swap, in
# pixels, ramped in and out over the leading and trailing fraction of the
# window.  The offset is what the pair's separation bottoms out at while
# their vertical paths cross, so no two drones ever exactly coincide.
_SWAP_U_OFFSET = 2.2
_SWAP_EDGE_FRACTION = 0.25


def _smoothstep(y: float) -> float:
    return y * y * (3.0 - 2.0 * y)


def _crossing_trajectories(
    n_targets: int,
    duration: float,
    intrinsics: CameraIntrinsics,
    speed_scale: float = 1.0,
    observer: ObserverConfig | None = None,
    seed: int = 0,
    frame_rate: float = 7.0,
) -> list[Trajectory]:
    """A weave of paths where every pair of drones crosses exactly once.

    The drones sweep across the image as a loose vertical column, each on
    its own horizontal lane, and swap adjacent lanes following the odd-even
    transposition network: round ``r`` swaps lanes ``(k, k+1)`` for ``k``
    of matching parity.  The network runs twice, so after ``2n`` rounds
    every pair has crossed exactly twice and the column order is restored.
    At any instant non-partners are separated by at least one lane, so
    close passes involve exactly two drones.  Each pass is a brisk
    monotonic exchange: the partners' vertical paths cross mid-window
    while a small sideways offset keeps them from coinciding.  Swap times
    are jittered from ``seed``.  Waypoints are designed in pixel space and
    back-projected at a constant per-drone depth through the observer pose
    at the waypoint time, which keeps each crossing intact under observer
    rotation.
    """
    observer = observer or ObserverConfig()
    cu, cv = intrinsics.cu, intrinsics.cv
    lane_gap = min(34.0, (intrinsics.image_height - 110.0) / max(n_targets - 1, 1))
    lane_v = [cv + (k - (n_targets - 1) / 2.0) * lane_gap for k in range(n_targets)]

    if speed_scale == 0.0:
        # Hold world positions, not pixels: a parked drone drifts across the
        # image if the observer rotates, and that is real.
        parked = []
        for i in range(n_targets):
            traj = _pixels_to_trajectory(
                [(0.0, cu, lane_v[i])], _drone_depth(i, n_targets),
                observer, intrinsics)
            point = traj.points[0]
            parked.append(Trajectory(np.array([0.0, duration]),
                                     np.array([point, point])))
        return parked

    scale = min(max(speed_scale, 0.05), 1.3)
    half_span = min(250.0 * scale, intrinsics.image_width / 2.0 - 70.0)
    rng = np.random.default_rng(seed)
    n_rounds = 2 * n_targets
    slot = 0.73 * duration / n_rounds
    # A swap must stay clear of the same drone's swap in the next round, so
    # its half-width is capped by the worst-case gap between round times.
    swap_half = min(max(_SWAP_HALF_NOMINAL / scale, 0.2), 0.42 * slot, 1.5)

    def u_line(t: float) -> float:
        return cu - half_span + 2.0 * half_span * t / duration

    round_times = [duration * 0.12 + slot * (r + 0.5 + rng.uniform(-0.03, 0.03))
                   for r in range(n_rounds)]

    def snap_to_frame(t: float) -> float:
        # Place each closest approach on a detection frame so the stress the
        # scenario exists to produce is actually observed, not stepped over.
        return round(t * frame_rate) / frame_rate

    # occupant[k] = drone currently on lane k; walk the transposition network
    occupant = list(range(n_targets))
    swaps: list[list[tuple[float, int, int, float]]] = [[] for _ in range(n_targets)]
    for r, t_r in enumerate(round_times):
        for k in range(r % 2, n_targets - 1, 2):
            t_s = snap_to_frame(t_r + rng.uniform(-0.03, 0.03) * slot)
            lo, hi = occupant[k], occupant[k + 1]
            swaps[lo].append((t_s, k, k + 1, _SWAP_U_OFFSET))
            swaps[hi].append((t_s, k + 1, k, -_SWAP_U_OFFSET))
            occupant[k], occupant[k + 1] = hi, lo

    def pixel_at(i: int, t: float) -> tuple[float, float]:
        u, v = u_line(t), None
        lane = i
        edge = _SWAP_EDGE_FRACTION
        for t_s, from_k, to_k, du in swaps[i]:
            if t < t_s - swap_half:
                break
            lane = to_k
            if t <= t_s + swap_half:
                x = (t - (t_s - swap_half)) / (2.0 * swap_half)
                if x < edge:
                    envelope = _smoothstep(x / edge)
                elif x <= 1.0 - edge:
                    envelope = 1.0
                else:
                    envelope = _smoothstep((1.0 - x) / edge)
                v = lane_v[from_k] + (lane_v[to_k] - lane_v[from_k]) * _smoothstep(x)
                u += du * envelope
        return u, (lane_v[lane] if v is None else v)

    # Sample the piecewise design densely: a spline through sparse knots
    # would overshoot the flat lane segments by a sizable fraction of the
    # lane gap and spoil the separation guarantee.  Crossing instants join
    # the knots so the interpolant reproduces each closest approach exactly.
    crossing_times = sorted({t_s for per_drone in swaps for t_s, _, _, _ in per_drone})
    sample_times = np.unique(np.concatenate([
        np.arange(0.0, duration + 1e-9, 0.15),
        np.asarray(crossing_times, dtype=float),
        [duration],
    ]))
    trajectories = []
    for i in range(n_targets):
        pts = [(float(t),) + pixel_at(i, float(t)) for t in sample_times]
        trajectories.append(_pixels_to_trajectory(
            pts, _drone_depth(i, n_targets), observer, intrinsics))
    return trajectories


def builtin_crossing_scenario(
    n_targets: int = 3,
    duration: float | None = None,
    seed: int = 0,
    speed_scale: float = 1.0,
    noise: NoiseConfig | None = None,
    intrinsics: CameraIntrinsics | None = None,
    observer_yaw_rate: float = 0.05,
) -> ScenarioConfig:
    """The stock stress scenario: crossing drones seen from a yawing observer.

    Every pair of drones passes within a few pixels of each other twice,
    at staggered times (see :func:`_crossing_trajectories`).  The
    default duration grows with the drone count so the pair schedule keeps
    speeds near 1 m/s.  ``speed_scale`` scales the layout and with it every
    drone's speed; zero parks the drones in a ring, which is a degenerate
    scenario with no crossings and is flagged with a warning.  The observer
    yaws at ``observer_yaw_rate`` rad/s about the camera's vertical axis,
    exercising the rotation-compensation term.
    """
    if speed_scale < 0.0:
        raise ScenarioError("speed_scale must be nonnegative")
    if speed_scale == 0.0:
        warnings.warn("speed_scale=0 produces a static scene with no crossings",
                      stacklevel=2)
    if duration is None:
        duration = max(8.0, 3.3 * n_targets)
    intrinsics = intrinsics or CameraIntrinsics()
    observer = ObserverConfig(angular_velocity=np.array([0.0, observer_yaw_rate, 0.0]))
    targets = _crossing_trajectories(
        n_targets, duration, intrinsics,
        speed_scale=speed_scale, observer=observer, seed=seed,
    )
    return ScenarioConfig(
        n_targets=n_targets,
        duration=duration,
        targets=targets,
        observer=observer,
        intrinsics=intrinsics,
        noise=noise or NoiseConfig(),
        seed=seed,
    )


def builtin_formation_scenario(
    n_targets: int,
    duration: float = 3.0,
    seed: int = 0,
    noise: NoiseConfig | None = None,
    intrinsics: CameraIntrinsics | None = None,
    drift_speed: float = 10.0,
) -> ScenarioConfig:
    """A loose grid of drones drifting slowly in front of a static observer.

    A full multi-target load with no close passes: drift displacement is
    capped below half the grid spacing, so identities never collide.  Meant
    for throughput measurements, where association difficulty would only add
    variance.
    """
    if n_targets < 1:
        raise ScenarioError("n_targets must be at least 1")
    intrinsics = intrinsics or CameraIntrinsics()
    rng = np.random.default_rng(seed)
    cols = int(math.ceil(math.sqrt(n_targets * 4.0 / 3.0)))
    rows = int(math.ceil(n_targets / cols))
    margin_u, margin_v = 80.0, 64.0
    span_u = intrinsics.image_width - 2.0 * margin_u
    span_v = intrinsics.image_height - 2.0 * margin_v
    spacing = min(span_u / cols, span_v / rows)
    speed = min(drift_speed, 0.35 * spacing / duration)
    observer = ObserverConfig()
    targets = []
    for i in range(n_targets):
        u0 = margin_u + span_u * ((i % cols) + 0.5) / cols
        v0 = margin_v + span_v * ((i // cols) + 0.5) / rows
        ang = rng.uniform(0.0, 2.0 * math.pi)
        step = speed * rng.uniform(0.5, 1.0) * duration
        targets.append(_pixels_to_trajectory(
            [(0.0, u0, v0),
             (duration, u0 + step * math.cos(ang), v0 + step * math.sin(ang))],
            5.0, observer, intrinsics))
    return ScenarioConfig(
        n_targets=n_targets,
        duration=duration,
        targets=targets,
        observer=observer,
        intrinsics=intrinsics,
        noise=noise or NoiseConfig(),
        seed=seed,
    )


def load_scenario(path: str) -> ScenarioConfig:
    """Load a YAML scenario file; raises ScenarioError or yaml.YAMLError.

    Run manifests nest the resolved scenario under a ``scenario`` key; those
    load too, so a manifest can be replayed directly.
    """
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, Mapping):
        raise ScenarioError(f"{path}: scenario file must contain a mapping")
    if "scenario" in data and isinstance(data["scenario"], Mapping):
        data = data["scenario"]
    return ScenarioConfig.from_dict(data)


def save_scenario(config: ScenarioConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=False)
