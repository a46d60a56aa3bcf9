"""Joint probabilistic data association over an exact event enumeration.

Every feasible joint event assigns each track either one distinct measurement
or a missed detection; leftover measurements are attributed to uniform
clutter.  The unnormalized event weight is

    prod_assigned p_d * L(i, j) * prod_missed (1 - p_d) * lambda^(#unclaimed)

with L the innovation likelihood density and lambda the clutter density per
unit image area.  Marginal association weights beta come from summing event
weights, then each track is corrected with its beta-weighted combined
innovation and the spread-of-innovations covariance term.

The enumeration is deliberately exact, with no clustering or murty-style
pruning, so its cost grows factorially with the number of tracks.  That cost
curve is part of what the benchmark studies measure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import chi2

from .motion import MEASUREMENT_MATRIX as H
from .motion import StateGaussian, predict
from .tracking import (
    MeasurementSet,
    TrackEstimate,
    Tracker,
    TrackerConfig,
    innovation_stats,
)

# 99% chi-square gate on the 2-dof squared Mahalanobis innovation (~9.21).
DEFAULT_GATE = float(chi2.ppf(0.99, df=2))


@dataclass(frozen=True)
class AssociationEvent:
    """One joint hypothesis: per track, a measurement index or None (missed)."""

    assignment: tuple[int | None, ...]

    def indicator(self, n_measurements: int) -> np.ndarray:
        """0/1 matrix (n_tracks, n_measurements + 1); column 0 is the miss."""
        ind = np.zeros((len(self.assignment), n_measurements + 1), dtype=int)
        for i, j in enumerate(self.assignment):
            ind[i, 0 if j is None else j + 1] = 1
        return ind


def enumerate_events(
    n_tracks: int, measurements: MeasurementSet, gates: np.ndarray | None = None
) -> list[AssociationEvent]:
    """Materialize every feasible joint association event.

    ``gates`` is an optional (n_tracks, m) boolean mask; a False entry makes
    that pairing infeasible.  Without gating the event count is
    sum_k C(n, k) * m! / (m - k)!, which explodes quickly; this list form is
    meant for small problems and tests, the tracker itself streams.
    """
    m = len(measurements)
    if gates is not None:
        gates = np.asarray(gates, dtype=bool)
        if gates.shape != (n_tracks, m):
            raise ValueError(f"gates must have shape ({n_tracks}, {m}), got {gates.shape}")
    events: list[AssociationEvent] = []
    assignment: list[int | None] = [None] * n_tracks

    def descend(i: int, used: int) -> None:
        if i == n_tracks:
            events.append(AssociationEvent(tuple(assignment)))
            return
        assignment[i] = None
        descend(i + 1, used)
        for j in range(m):
            if used >> j & 1:
                continue
            if gates is not None and not gates[i, j]:
                continue
            assignment[i] = j
            descend(i + 1, used | (1 << j))
        assignment[i] = None

    descend(0, 0)
    return events


def event_probability(
    event: AssociationEvent, likelihood: np.ndarray, config: TrackerConfig
) -> float:
    """Unnormalized weight of one joint event.

    ``likelihood[i, j]`` is the innovation density of measurement j under
    track i.  Unclaimed measurements each contribute one factor of the
    clutter density.
    """
    likelihood = np.asarray(likelihood, dtype=float)
    n_meas = likelihood.shape[1] if likelihood.ndim == 2 else 0
    p_d = config.detection_prob
    weight = 1.0
    n_assigned = 0
    for i, j in enumerate(event.assignment):
        if j is None:
            weight *= 1.0 - p_d
        else:
            weight *= p_d * likelihood[i, j]
            n_assigned += 1
    return weight * config.clutter_density ** (n_meas - n_assigned)


def _likelihoods_and_gates(
    tracks: Sequence[StateGaussian], z: np.ndarray, config: TrackerConfig
) -> tuple[np.ndarray, np.ndarray, list[np.ndarray], list[np.ndarray]]:
    """Per-pair innovation densities, gate mask, and per-track (z_pred, S)."""
    n, m = len(tracks), len(z)
    gate = config.resolved_gate(DEFAULT_GATE)
    lik = np.zeros((n, m))
    gates = np.zeros((n, m), dtype=bool)
    z_preds: list[np.ndarray] = []
    covs: list[np.ndarray] = []
    for i, track in enumerate(tracks):
        z_pred, S = innovation_stats(track, config)
        sign, logdet = np.linalg.slogdet(S)
        if sign <= 0:
            raise np.linalg.LinAlgError("innovation covariance is not positive definite")
        S_inv = np.linalg.inv(S)
        norm = np.exp(-0.5 * logdet) / (2.0 * np.pi)
        for j in range(m):
            r = z[j] - z_pred
            maha = float(r @ S_inv @ r)
            if maha <= gate:
                gates[i, j] = True
                lik[i, j] = norm * np.exp(-0.5 * maha)
        z_preds.append(z_pred)
        covs.append(S)
    return lik, gates, z_preds, covs


def _beta_from_likelihood(
    lik: np.ndarray, gates: np.ndarray, config: TrackerConfig
) -> np.ndarray:
    """Marginal association matrix by exhaustive depth-first event traversal.

    Returns (n, m + 1) with column 0 the missed-detection weight; rows sum
    to one.  Subtree weights are accumulated post-order so each event leaf is
    visited exactly once without materializing the event list.
    """
    n, m = lik.shape
    p_d = config.detection_prob
    miss_w = 1.0 - p_d
    lam = config.clutter_density
    lam_pow = [1.0]
    for _ in range(m):
        lam_pow.append(lam_pow[-1] * lam)
    pd_lik = [[p_d * lik[i, j] for j in range(m)] for i in range(n)]
    gated = [[j for j in range(m) if gates[i, j]] for i in range(n)]
    beta = [[0.0] * (m + 1) for _ in range(n)]
    popcount = [bin(k).count("1") for k in range(1 << m)]

    def descend(i: int, used: int, prefix: float) -> float:
        # Returns the total weight of all completions for tracks i..n-1.
        if i == n:
            return lam_pow[m - popcount[used]]
        row = pd_lik[i]
        acc = beta[i]
        sub = descend(i + 1, used, prefix * miss_w)
        acc[0] += prefix * miss_w * sub
        total = miss_w * sub
        for j in gated[i]:
            if used >> j & 1:
                continue
            w = row[j]
            sub = descend(i + 1, used | (1 << j), prefix * w)
            acc[j + 1] += prefix * w * sub
            total += w * sub
        return total

    total = descend(0, 0, 1.0)
    out = np.asarray(beta)
    if total <= 0.0 or not np.isfinite(total):
        # Degenerate frame (e.g. p_d = 1 with nothing gated): coast everything.
        out[:] = 0.0
        out[:, 0] = 1.0
        return out
    return out / total


def beta_matrix(
    tracks: Sequence[StateGaussian], measurements: MeasurementSet, config: TrackerConfig
) -> np.ndarray:
    """Marginal association weights for each track; see _beta_from_likelihood."""
    z = measurements.stacked()
    lik, gates, _, _ = _likelihoods_and_gates(tracks, z, config)
    return _beta_from_likelihood(lik, gates, config)


def jpdaf_update(
    tracks: Sequence[StateGaussian], measurements: MeasurementSet, config: TrackerConfig
) -> list[StateGaussian]:
    """Correct every track with its beta-weighted combined innovation."""
    z = measurements.stacked()
    if len(z) == 0:
        return [t.copy() for t in tracks]
    lik, gates, z_preds, S_list = _likelihoods_and_gates(tracks, z, config)
    beta = _beta_from_likelihood(lik, gates, config)
    eye = np.eye(4)
    out: list[StateGaussian] = []
    for i, track in enumerate(tracks):
        b0 = beta[i, 0]
        bj = beta[i, 1:]
        innovations = z - z_preds[i]
        combined = bj @ innovations
        K = np.linalg.solve(S_list[i], H @ track.covariance).T
        mean = track.mean + K @ combined
        p_updated = (eye - K @ H) @ track.covariance
        scatter = (innovations * bj[:, None]).T @ innovations - np.outer(combined, combined)
        cov = b0 * track.covariance + (1.0 - b0) * p_updated + K @ scatter @ K.T
        out.append(StateGaussian(mean, 0.5 * (cov + cov.T)))
    return out


class JpdafTracker(Tracker):
    """Fixed bank of coupled tracks corrected by joint association weights."""

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
        self.tracks = jpdaf_update(self.tracks, measurements, self.config)
        return self.estimates()

    def estimates(self) -> list[TrackEstimate]:
        return [
            TrackEstimate(i, t.state, t.covariance.copy()) for i, t in enumerate(self.tracks)
        ]
