"""Shared target motion model.

State vector x = (p_u, pdot_u, p_v, pdot_v): pixel position and pixel
velocity on the image plane.  Between detections the target follows a
constant-velocity model driven by white acceleration noise, plus an additive
coupling term B(x) @ omega that accounts for the apparent image motion
induced by the observer's own rotation.  The coupling only displaces the
position rows; the velocity rows stay untouched, which keeps the filter from
confusing ego-rotation with target velocity.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import CameraIntrinsics

# Measurement picks the two position components out of the state.
MEASUREMENT_MATRIX = np.array(
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
    ]
)
MEASUREMENT_MATRIX.setflags(write=False)


@dataclass(frozen=True)
class TrackState:
    """A single target state on the image plane."""

    p_u: float
    pdot_u: float
    p_v: float
    pdot_v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.p_u, self.pdot_u, self.p_v, self.pdot_v])

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "TrackState":
        a = np.asarray(arr, dtype=float).reshape(4)
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.p_u, self.p_v])

    @property
    def velocity(self) -> np.ndarray:
        return np.array([self.pdot_u, self.pdot_v])


@dataclass(frozen=True)
class ModelParams:
    """Motion model parameters.

    ``dt`` is the nominal prediction interval; per-call overrides use
    :func:`with_dt`.  ``accel_noise`` is the scalar white-acceleration
    intensity q scaling the process noise.
    """

    dt: float = 0.01
    # Sized for drones that hold course for seconds, then dodge hard; small
    # values smooth through evasive maneuvers and shed track identity.
    accel_noise: float = 500.0
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)

    def __post_init__(self) -> None:
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.accel_noise < 0.0:
            raise ValueError(f"accel_noise must be non-negative, got {self.accel_noise}")

    def with_dt(self, dt: float) -> "ModelParams":
        return replace(self, dt=dt)


@dataclass
class StateGaussian:
    """Gaussian belief over one target state."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=float).reshape(4)
        self.covariance = np.asarray(self.covariance, dtype=float).reshape(4, 4)

    def validate(self, atol: float = 1e-6) -> None:
        """Check symmetry and (loosely) positive semidefiniteness."""
        if not np.allclose(self.covariance, self.covariance.T, atol=atol):
            raise ValueError("covariance is not symmetric")
        eigvals = np.linalg.eigvalsh(self.covariance)
        if eigvals.min() < -atol:
            raise ValueError(f"covariance has negative eigenvalue {eigvals.min():g}")

    def copy(self) -> "StateGaussian":
        return StateGaussian(self.mean.copy(), self.covariance.copy())

    @property
    def state(self) -> TrackState:
        return TrackState.from_array(self.mean)


def transition_matrix(params: ModelParams) -> np.ndarray:
    """Constant-velocity transition over params.dt."""
    dt = params.dt
    return np.array(
        [
            [1.0, dt, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, dt],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def process_noise(params: ModelParams) -> np.ndarray:
    """Diagonal process noise q * diag(dt^2/2, dt, dt^2/2, dt)."""
    dt = params.dt
    q = params.accel_noise
    return q * np.diag([dt * dt / 2.0, dt, dt * dt / 2.0, dt])


def control_matrix(state: TrackState | np.ndarray, params: ModelParams) -> np.ndarray:
    """Rotation-coupling matrix B(x) mapping angular rate to state increment.

    Rows for the velocity components are zero by construction.
    """
    x = state.as_array() if isinstance(state, TrackState) else np.asarray(state, dtype=float)
    f = params.intrinsics.focal_length
    du = x[0] - params.intrinsics.cu
    dv = x[2] - params.intrinsics.cv
    dt = params.dt
    return dt * np.array(
        [
            [du * dv / f, -(du * du / f + f), dv],
            [0.0, 0.0, 0.0],
            [f + dv * dv / f, -du * dv / f, -du],
            [0.0, 0.0, 0.0],
        ]
    )


def linearized_transition(
    state: TrackState | np.ndarray, omega: np.ndarray, params: ModelParams
) -> np.ndarray:
    """Jacobian of the full transition: A plus the gradient of B(x) @ omega."""
    x = state.as_array() if isinstance(state, TrackState) else np.asarray(state, dtype=float)
    w = np.asarray(omega, dtype=float).reshape(3)
    f = params.intrinsics.focal_length
    du = x[0] - params.intrinsics.cu
    dv = x[2] - params.intrinsics.cv
    dt = params.dt
    F = transition_matrix(params)
    F[0, 0] += dt * (dv * w[0] - 2.0 * du * w[1]) / f
    F[0, 2] += dt * (du * w[0] / f + w[2])
    F[2, 0] += dt * (-dv * w[1] / f - w[2])
    F[2, 2] += dt * (2.0 * dv * w[0] - du * w[1]) / f
    return F


def predict(belief: StateGaussian, omega: np.ndarray, params: ModelParams) -> StateGaussian:
    """One prediction step: nonlinear mean propagation, linearized covariance."""
    w = np.asarray(omega, dtype=float).reshape(3)
    A = transition_matrix(params)
    mean = A @ belief.mean + control_matrix(belief.mean, params) @ w
    F = linearized_transition(belief.mean, w, params)
    cov = F @ belief.covariance @ F.T + process_noise(params)
    cov = 0.5 * (cov + cov.T)
    return StateGaussian(mean, cov)
