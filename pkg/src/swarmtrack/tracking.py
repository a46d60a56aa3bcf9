"""Common tracker contract shared by the three filter implementations.

A tracker is a single-threaded mutable state machine.  The harness drives it
with ``predict_step`` at the IMU rate and ``update_step`` at the detection
rate; ``update_step`` requires at least one prediction since the previous
update so that time never stalls or runs backwards.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .geometry import PixelPoint
from .motion import ModelParams, StateGaussian, TrackState

LOG_TWO_PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Measurement:
    """One detection on the image plane."""

    point: PixelPoint

    @property
    def array(self) -> np.ndarray:
        return self.point.as_array()


@dataclass(frozen=True)
class MeasurementSet:
    """All detections delivered for one camera frame."""

    frame_time: float
    detections: tuple[Measurement, ...]

    def __init__(self, frame_time: float, detections: Iterable[Measurement]) -> None:
        object.__setattr__(self, "frame_time", float(frame_time))
        object.__setattr__(self, "detections", tuple(detections))

    def __len__(self) -> int:
        return len(self.detections)

    def stacked(self) -> np.ndarray:
        """Detections as an (m, 2) array; (0, 2) when empty."""
        if not self.detections:
            return np.zeros((0, 2))
        return np.stack([d.array for d in self.detections])


@dataclass(frozen=True)
class TrackEstimate:
    """One reported track: a locally indexed state with optional covariance.

    ``local_track_index`` is the tracker's own stable label; the consensus
    layer maps it to a global drone identity.
    """

    local_track_index: int
    state: TrackState
    covariance: np.ndarray | None = None

    @property
    def position(self) -> np.ndarray:
        return self.state.position


@dataclass(frozen=True)
class TrackerConfig:
    """Parameters every filter understands.

    ``gate_threshold`` semantics: None selects the per-filter default
    (no gating for the plain Kalman tracker, a 99% chi-square gate for the
    joint-probabilistic tracker); ``math.inf`` forces gating off; any finite
    positive value is used as the squared-Mahalanobis cutoff.
    """

    model: ModelParams = field(default_factory=ModelParams)
    measurement_noise: np.ndarray = field(default_factory=lambda: np.diag([4.0, 4.0]))
    detection_prob: float = 0.97
    clutter_rate: float = 0.0
    survival_prob: float = 1.0
    truncation_threshold: float = 1e-5
    merge_threshold: float = 4.0
    gate_threshold: float | None = None

    def __post_init__(self) -> None:
        R = np.asarray(self.measurement_noise, dtype=float).reshape(2, 2)
        if not np.allclose(R, R.T, atol=1e-9):
            raise ValueError("measurement_noise must be symmetric")
        if np.linalg.eigvalsh(R).min() <= 0.0:
            raise ValueError("measurement_noise must be positive definite")
        R.setflags(write=False)
        object.__setattr__(self, "measurement_noise", R)
        if not 0.0 < self.detection_prob <= 1.0:
            raise ValueError(f"detection_prob must be in (0, 1], got {self.detection_prob}")
        if self.clutter_rate < 0.0:
            raise ValueError("clutter_rate must be non-negative")
        if not 0.0 < self.survival_prob <= 1.0:
            raise ValueError(f"survival_prob must be in (0, 1], got {self.survival_prob}")
        if self.gate_threshold is not None and not self.gate_threshold > 0.0:
            raise ValueError("gate_threshold must be positive or None")

    def resolved_gate(self, filter_default: float) -> float:
        """Squared-Mahalanobis gate: the configured value or the filter default."""
        return filter_default if self.gate_threshold is None else float(self.gate_threshold)

    @property
    def clutter_density(self) -> float:
        """Uniform clutter intensity per unit image area."""
        return self.clutter_rate / self.model.intrinsics.image_area


class Tracker(ABC):
    """Recursive tracker driven by IMU-rate predictions and frame-rate updates."""

    def __init__(self, config: TrackerConfig) -> None:
        self.config = config
        self._predicted_since_update = False
        self._last_update_time: float | None = None

    @abstractmethod
    def predict_step(self, omega: np.ndarray, dt: float) -> None:
        """Advance the belief by dt seconds using the measured angular rate."""

    @abstractmethod
    def update_step(self, measurements: MeasurementSet) -> list[TrackEstimate]:
        """Fold one frame of detections into the belief; returns estimates."""

    @abstractmethod
    def estimates(self) -> list[TrackEstimate]:
        """Current track estimates without changing any state."""

    def _note_predict(self, dt: float) -> None:
        if not dt > 0.0:
            raise ValueError(f"prediction dt must be positive, got {dt}")
        self._predicted_since_update = True

    def _note_update(self, frame_time: float) -> None:
        if not self._predicted_since_update:
            raise RuntimeError("update_step requires a predict_step since the last update")
        if self._last_update_time is not None and frame_time <= self._last_update_time:
            raise ValueError(
                f"frame_time {frame_time} does not advance past {self._last_update_time}"
            )
        self._predicted_since_update = False
        self._last_update_time = frame_time


def gaussian_log_density(residual: np.ndarray, cov: np.ndarray) -> float:
    """Log density of N(0, cov) at the residual; raises LinAlgError when singular."""
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise np.linalg.LinAlgError("innovation covariance is not positive definite")
    maha = float(residual @ np.linalg.solve(cov, residual))
    return -0.5 * (maha + logdet + len(residual) * LOG_TWO_PI)


def innovation_stats(
    track: StateGaussian, config: TrackerConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Predicted measurement and innovation covariance S = H P H' + R."""
    from .motion import MEASUREMENT_MATRIX as H

    z_pred = H @ track.mean
    S = H @ track.covariance @ H.T + config.measurement_noise
    return z_pred, 0.5 * (S + S.T)


def make_tracker(
    kind: str,
    config: TrackerConfig,
    initial_tracks: Sequence[StateGaussian] = (),
    **kwargs,
) -> Tracker:
    """Construct a tracker by name: 'kalman', 'jpdaf', or 'gmphd'."""
    from .kalman import KalmanTracker
    from .jpdaf import JpdafTracker
    from .gmphd import GmphdTracker

    kinds = {"kalman": KalmanTracker, "jpdaf": JpdafTracker, "gmphd": GmphdTracker}
    try:
        cls = kinds[kind]
    except KeyError:
        raise ValueError(f"unknown tracker kind {kind!r}; expected one of {sorted(kinds)}")
    return cls(config, initial_tracks, **kwargs)
