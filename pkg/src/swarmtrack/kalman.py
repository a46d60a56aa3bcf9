"""Baseline tracker: independent Kalman filters with greedy ML association.

Each track keeps its own Gaussian belief.  At update time every
track/measurement pair is scored by the innovation likelihood
N(z; H mu, H P H' + R); pairs are then claimed greedily in descending
likelihood order, one measurement per track and per measurement.
Unassigned tracks coast on the prediction.  No gate is applied unless the
config requests one, so a nearby clutter point can capture a track; that
fragility is the point of this baseline.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .motion import MEASUREMENT_MATRIX as H
from .motion import StateGaussian, predict
from .tracking import (
    MeasurementSet,
    TrackEstimate,
    Tracker,
    TrackerConfig,
    innovation_stats,
)

# By default the baseline accepts any measurement, however unlikely.
DEFAULT_GATE = float("inf")


def _pairwise_loglik(
    tracks: Sequence[StateGaussian], z: np.ndarray, config: TrackerConfig
) -> np.ndarray:
    """(n, m) innovation log-likelihoods, -inf where the gate rejects."""
    gate = config.resolved_gate(DEFAULT_GATE)
    means = np.stack([t.mean for t in tracks])
    covs = np.stack([t.covariance for t in tracks])
    z_pred = means @ H.T
    S = np.einsum("ab,nbc,dc->nad", H, covs, H) + config.measurement_noise
    det = S[:, 0, 0] * S[:, 1, 1] - S[:, 0, 1] * S[:, 1, 0]
    if np.any(det <= 0.0):
        raise np.linalg.LinAlgError("innovation covariance is not positive definite")
    S_inv = (
        np.stack(
            [
                np.stack([S[:, 1, 1], -S[:, 0, 1]], axis=-1),
                np.stack([-S[:, 1, 0], S[:, 0, 0]], axis=-1),
            ],
            axis=-2,
        )
        / det[:, None, None]
    )
    r = z[None, :, :] - z_pred[:, None, :]
    maha = np.einsum("nmi,nij,nmj->nm", r, S_inv, r)
    loglik = -0.5 * (maha + np.log(det)[:, None] + 2.0 * math.log(2.0 * math.pi))
    loglik[maha > gate] = -np.inf
    return loglik


def associate_ml(
    tracks: Sequence[StateGaussian], measurements: MeasurementSet, config: TrackerConfig
) -> list[int | None]:
    """Greedy one-to-one max-likelihood assignment.

    Returns, per track, the claimed measurement index or None.  The globally
    best remaining pair is claimed each round; exact ties resolve to the
    lowest track index, then the lowest measurement index.
    """
    z = measurements.stacked()
    n, m = len(tracks), len(z)
    assignment: list[int | None] = [None] * n
    if n == 0 or m == 0:
        return assignment
    loglik = _pairwise_loglik(tracks, z, config)
    for _ in range(min(n, m)):
        flat = int(np.argmax(loglik))
        i, j = divmod(flat, m)
        if not np.isfinite(loglik[i, j]):
            break
        assignment[i] = j
        loglik[i, :] = -np.inf
        loglik[:, j] = -np.inf
    return assignment


def kf_update(track: StateGaussian, z: np.ndarray, config: TrackerConfig) -> StateGaussian:
    """Standard Kalman correction with measurement z."""
    z = np.asarray(z, dtype=float).reshape(2)
    z_pred, S = innovation_stats(track, config)
    K = np.linalg.solve(S, H @ track.covariance).T
    mean = track.mean + K @ (z - z_pred)
    cov = (np.eye(4) - K @ H) @ track.covariance
    return StateGaussian(mean, 0.5 * (cov + cov.T))


class KalmanTracker(Tracker):
    """Fixed bank of independent Kalman filters, one per initial track."""

    def __init__(
        self, config: TrackerConfig, initial_tracks: Sequence[StateGaussian] = ()
    ) -> None:
        super().__init__(config)
        self.tracks: list[StateGaussian] = [t.copy() for t in initial_tracks]
        for t in self.tracks:
            t.validate()

    def predict_step(self, omega: np.ndarray, dt: float) -> None:
        self._note_predict(dt)
        params = self.config.model.with_dt(dt)
        self.tracks = [predict(t, omega, params) for t in self.tracks]

    def update_step(self, measurements: MeasurementSet) -> list[TrackEstimate]:
        self._note_update(measurements.frame_time)
        z = measurements.stacked()
        assignment = associate_ml(self.tracks, measurements, self.config)
        self.tracks = [
            track if j is None else kf_update(track, z[j], self.config)
            for track, j in zip(self.tracks, assignment)
        ]
        return self.estimates()

    def estimates(self) -> list[TrackEstimate]:
        return [
            TrackEstimate(i, t.state, t.covariance.copy()) for i, t in enumerate(self.tracks)
        ]
