"""Gaussian-mixture probability hypothesis density tracker.

The belief is an intensity function represented as a weighted Gaussian
mixture over the single-target state space.  Prediction propagates every
component through the shared motion model and injects birth components at
the pixel locations of recent measurements that the mixture failed to
explain.  The update keeps a missed-detection copy of each component plus
one corrected copy per measurement, normalized per measurement against the
clutter density.  Pruning, merging and a component cap keep the mixture
bounded; states are reported from each track's best-associated copy and
given stable labels by frame-to-frame matching.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import PixelPoint
from .motion import MEASUREMENT_MATRIX as H
from .motion import StateGaussian, TrackState, predict
from .tracking import MeasurementSet, TrackEstimate, Tracker, TrackerConfig

DEFAULT_MAX_COMPONENTS = 100
DEFAULT_EXTRACTION_THRESHOLD = 0.5


@dataclass
class GaussianComponent:
    """One weighted Gaussian in the intensity mixture."""

    weight: float
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=float).reshape(4)
        self.covariance = np.asarray(self.covariance, dtype=float).reshape(4, 4)

    def copy(self) -> "GaussianComponent":
        return GaussianComponent(self.weight, self.mean.copy(), self.covariance.copy())


@dataclass
class Intensity:
    """Gaussian-mixture intensity; total mass approximates the target count.

    ``extraction`` is the reporting view built during the measurement
    update: one representative per predicted component, weighted by the
    best single-measurement association.  It exists so that extraction
    counts tracks, not posterior copies; prediction discards it.
    """

    components: list[GaussianComponent] = field(default_factory=list)
    extraction: list[GaussianComponent] | None = None

    def __len__(self) -> int:
        return len(self.components)

    @property
    def total_mass(self) -> float:
        return float(sum(c.weight for c in self.components))


@dataclass(frozen=True)
class BirthModel:
    """Measurement-driven birth: where, how wide, and how eagerly to spawn.

    A measurement whose updated mixture mass falls below
    ``responsibility_threshold`` is treated as unexplained and seeds a birth
    component (zero velocity, ``covariance`` spread) at the next prediction.
    """

    weight: float = 0.1
    covariance: np.ndarray = field(
        default_factory=lambda: np.diag([400.0, 100.0, 400.0, 100.0])
    )
    responsibility_threshold: float = 0.1

    def __post_init__(self) -> None:
        cov = np.asarray(self.covariance, dtype=float).reshape(4, 4)
        cov.setflags(write=False)
        object.__setattr__(self, "covariance", cov)
        if self.weight <= 0.0:
            raise ValueError("birth weight must be positive")


def phd_predict(
    intensity: Intensity,
    omega: np.ndarray,
    config: TrackerConfig,
    birth_points: Sequence[PixelPoint] = (),
    birth: BirthModel | None = None,
) -> Intensity:
    """Survival-weighted propagation plus measurement-seeded births."""
    birth = birth or BirthModel()
    params = config.model
    p_s = config.survival_prob
    out: list[GaussianComponent] = []
    for comp in intensity.components:
        g = predict(StateGaussian(comp.mean, comp.covariance), omega, params)
        out.append(GaussianComponent(p_s * comp.weight, g.mean, g.covariance))
    for point in birth_points:
        mean = np.array([point.u, 0.0, point.v, 0.0])
        out.append(GaussianComponent(birth.weight, mean, birth.covariance.copy()))
    return Intensity(out)


def _update_with_masses(
    intensity: Intensity, measurements: MeasurementSet, config: TrackerConfig
) -> tuple[Intensity, np.ndarray]:
    """Measurement update; also returns each measurement's updated mass.

    The mass of measurement j is sum_l w_j_l after per-measurement
    normalization, i.e. how much of the posterior mixture that detection
    explains.  Values near zero flag likely new targets or clutter.
    """
    z = measurements.stacked()
    m = len(z)
    p_d = config.detection_prob
    kappa = config.clutter_density
    comps = intensity.components

    missed = [
        GaussianComponent((1.0 - p_d) * c.weight, c.mean.copy(), c.covariance.copy())
        for c in comps
    ]
    if m == 0:
        return Intensity(missed, extraction=[c.copy() for c in missed]), np.zeros(0)

    # Per-component innovation terms, shared across measurements.
    z_preds = np.zeros((len(comps), 2))
    gains = np.zeros((len(comps), 4, 2))
    upd_covs = np.zeros((len(comps), 4, 4))
    norms = np.zeros(len(comps))
    S_invs = np.zeros((len(comps), 2, 2))
    eye = np.eye(4)
    for l, c in enumerate(comps):
        z_pred = H @ c.mean
        S = H @ c.covariance @ H.T + config.measurement_noise
        S = 0.5 * (S + S.T)
        det = np.linalg.det(S)
        if det <= 0.0:
            raise np.linalg.LinAlgError("innovation covariance is not positive definite")
        S_inv = np.linalg.inv(S)
        K = c.covariance @ H.T @ S_inv
        z_preds[l] = z_pred
        gains[l] = K
        upd_covs[l] = (eye - K @ H) @ c.covariance
        norms[l] = 1.0 / (2.0 * np.pi * np.sqrt(det))
        S_invs[l] = S_inv

    out = missed
    masses = np.zeros(m)
    # One reporting candidate per predicted component: its state is the
    # weighted sum over all of that component's posterior copies, the missed
    # copy included, and its weight the max over the measurement copies.  One
    # track yields one candidate no matter how many detections fall near it;
    # rival detections pull the reported state in proportion to how much of
    # the track they explain, and the miss hypothesis drags it toward the
    # prediction by the complement of the detection probability.
    best_w = np.zeros(len(comps))
    view_num = np.array([c.weight * c.mean for c in missed]).reshape(len(comps), 4)
    view_den = np.array([c.weight for c in missed])
    for j in range(m):
        scaled = np.zeros(len(comps))
        for l, c in enumerate(comps):
            r = z[j] - z_preds[l]
            q = norms[l] * np.exp(-0.5 * float(r @ S_invs[l] @ r))
            scaled[l] = p_d * c.weight * q
        denom = kappa + scaled.sum()
        for l, c in enumerate(comps):
            w = scaled[l] / denom if denom > 0.0 else 0.0
            mean = c.mean + gains[l] @ (z[j] - z_preds[l])
            out.append(GaussianComponent(w, mean, upd_covs[l].copy()))
            best_w[l] = max(best_w[l], w)
            view_num[l] += w * mean
            view_den[l] += w
        masses[j] = scaled.sum() / denom if denom > 0.0 else 0.0
    view = [
        GaussianComponent(
            best_w[l],
            view_num[l] / view_den[l] if view_den[l] > 0.0 else comps[l].mean.copy(),
            upd_covs[l].copy(),
        )
        for l in range(len(comps))
    ]
    return Intensity(out, extraction=view), masses


def phd_update(
    intensity: Intensity, measurements: MeasurementSet, config: TrackerConfig
) -> Intensity:
    """Measurement update producing (1 + m) copies of each component."""
    updated, _ = _update_with_masses(intensity, measurements, config)
    return updated


def _merge_cluster(members: list[GaussianComponent]) -> GaussianComponent:
    """Moment-matched merge of components assumed to describe one target."""
    w = sum(c.weight for c in members)
    mean = sum(c.weight * c.mean for c in members) / w
    cov = np.zeros((4, 4))
    for c in members:
        d = mean - c.mean
        cov += c.weight * (c.covariance + np.outer(d, d))
    return GaussianComponent(w, mean, cov / w)


def prune_and_merge(
    intensity: Intensity,
    config: TrackerConfig,
    max_components: int = DEFAULT_MAX_COMPONENTS,
) -> Intensity:
    """Drop light components, merge near-coincident ones, cap the count.

    Merging is greedy from the heaviest component outward; proximity is the
    squared Mahalanobis distance measured in the heavy component's
    covariance.  Capping keeps the heaviest survivors.
    """
    alive = [c for c in intensity.components if c.weight >= config.truncation_threshold]
    merged: list[GaussianComponent] = []
    while alive:
        pivot_idx = max(range(len(alive)), key=lambda i: (alive[i].weight, -i))
        pivot = alive[pivot_idx]
        P_inv = np.linalg.inv(pivot.covariance)
        cluster: list[GaussianComponent] = []
        rest: list[GaussianComponent] = []
        for c in alive:
            d = c.mean - pivot.mean
            if float(d @ P_inv @ d) <= config.merge_threshold:
                cluster.append(c)
            else:
                rest.append(c)
        merged.append(_merge_cluster(cluster))
        alive = rest
    merged.sort(key=lambda c: -c.weight)
    return Intensity(merged[:max_components], extraction=intensity.extraction)


def extract_states(
    intensity: Intensity,
    config: TrackerConfig,
    threshold: float = DEFAULT_EXTRACTION_THRESHOLD,
) -> list[TrackEstimate]:
    """Report estimates for each group of heavy reporting candidates.

    Candidates come from the update's per-track extraction view when one
    exists, the raw components otherwise.  Candidates above the weight
    threshold that sit within one merge radius of each other are treated as
    one group and yield a single report, their weight-normalized average.
    Indices follow extraction order and carry no frame-to-frame meaning;
    see :class:`TrackLabeler`.
    """
    candidates = (
        intensity.extraction if intensity.extraction is not None else intensity.components
    )
    heavy = [c for c in candidates if c.weight > threshold]
    estimates: list[TrackEstimate] = []
    index = 0
    while heavy:
        pivot_idx = max(range(len(heavy)), key=lambda i: (heavy[i].weight, -i))
        pivot = heavy[pivot_idx]
        P_inv = np.linalg.inv(pivot.covariance)
        group: list[GaussianComponent] = []
        rest: list[GaussianComponent] = []
        for c in heavy:
            d = c.mean - pivot.mean
            if float(d @ P_inv @ d) <= config.merge_threshold:
                group.append(c)
            else:
                rest.append(c)
        fused = _merge_cluster(group)
        estimates.append(
            TrackEstimate(index, TrackState.from_array(fused.mean), fused.covariance)
        )
        index += 1
        heavy = rest
    return estimates


class TrackLabeler:
    """Stable track labels by nearest-neighbor continuation.

    Current extractions are matched to the coasted positions of previously
    labeled tracks with a min-cost assignment; matches beyond
    ``distance_cap`` pixels are rejected.  A label that goes unmatched is
    remembered for ``memory_updates`` frames so a target that briefly merges
    into a neighbor or misses detections gets its old name back instead of a
    fresh one.
    """

    def __init__(self, distance_cap: float = 18.0, memory_updates: int = 15) -> None:
        self.distance_cap = distance_cap
        self.memory_updates = memory_updates
        self._next_label = 0
        # label -> (state, updates since last seen); 0 means currently active
        self._remembered: dict[int, tuple[TrackState, int]] = {}

    def seed(self, states: Sequence[TrackState]) -> list[int]:
        """Register initial tracks, returning their labels."""
        labels = []
        for s in states:
            self._remembered[self._next_label] = (s, 0)
            labels.append(self._next_label)
            self._next_label += 1
        return labels

    # Velocity disagreement is charged at this time horizon, in seconds.
    # Position alone cannot separate two tracks mid-crossing; their
    # velocities differ by the full closing speed and settle the match.
    VELOCITY_HORIZON = 0.25
    # Extra matching distance allowed per second of coasting.  A remembered
    # label predicts with the velocity it last saw; that estimate goes stale
    # at roughly the rate targets change speed, so the acceptance radius
    # must widen with time unseen or a returning track gets locked out.
    COAST_SLACK_PX_S = 35.0

    def assign(self, current: Sequence[TrackEstimate], dt: float) -> list[TrackEstimate]:
        """Relabel extraction-ordered estimates with persistent labels."""
        labels = sorted(self._remembered)
        cur_pos = np.array([e.position for e in current]).reshape(len(current), 2)
        cur_vel = np.array(
            [(e.state.pdot_u, e.state.pdot_v) for e in current]
        ).reshape(len(current), 2)
        pred_pos = np.zeros((len(labels), 2))
        pred_vel = np.zeros((len(labels), 2))
        ages = np.zeros(len(labels))
        for r, label in enumerate(labels):
            s, age = self._remembered[label]
            coast = dt * (age + 1)
            pred_pos[r] = (s.p_u + s.pdot_u * coast, s.p_v + s.pdot_v * coast)
            pred_vel[r] = (s.pdot_u, s.pdot_v)
            ages[r] = age

        matched: dict[int, int] = {}
        if labels and len(current):
            pos_cost = np.linalg.norm(pred_pos[:, None, :] - cur_pos[None, :, :], axis=2)
            vel_cost = np.linalg.norm(pred_vel[:, None, :] - cur_vel[None, :, :], axis=2)
            allowed = self.distance_cap + self.COAST_SLACK_PX_S * dt * ages
            blocked = pos_cost > allowed[:, None]
            cost = np.where(blocked, 1e9, pos_cost + self.VELOCITY_HORIZON * vel_cost)
            rows, cols = linear_sum_assignment(cost)
            for r, c in zip(rows, cols):
                if not blocked[r, c]:
                    matched[c] = labels[r]

        out: list[TrackEstimate] = []
        seen: set[int] = set()
        for c, est in enumerate(current):
            label = matched.get(c)
            if label is None:
                label = self._next_label
                self._next_label += 1
            self._remembered[label] = (est.state, 0)
            seen.add(label)
            out.append(TrackEstimate(label, est.state, est.covariance))

        for label in list(self._remembered):
            if label in seen:
                continue
            s, age = self._remembered[label]
            if age + 1 > self.memory_updates:
                del self._remembered[label]
            else:
                self._remembered[label] = (s, age + 1)
        return out


class GmphdTracker(Tracker):
    """Full tracker: predict/update on the intensity plus labeled extraction."""

    def __init__(
        self,
        config: TrackerConfig,
        initial_tracks: Sequence[StateGaussian] = (),
        birth: BirthModel | None = None,
        max_components: int = DEFAULT_MAX_COMPONENTS,
        extraction_threshold: float = DEFAULT_EXTRACTION_THRESHOLD,
        labeler: TrackLabeler | None = None,
    ) -> None:
        super().__init__(config)
        self.birth = birth or BirthModel()
        self.max_components = max_components
        self.extraction_threshold = extraction_threshold
        self.intensity = Intensity(
            [GaussianComponent(1.0, t.mean.copy(), t.covariance.copy()) for t in initial_tracks]
        )
        self.labeler = labeler or TrackLabeler()
        seeds = [TrackState.from_array(t.mean) for t in initial_tracks]
        initial_labels = self.labeler.seed(seeds)
        self._estimates = [
            TrackEstimate(label, s, t.covariance.copy())
            for label, s, t in zip(initial_labels, seeds, initial_tracks)
        ]
        self._pending_birth: list[PixelPoint] = []
        self._dt_since_update = 0.0

    def predict_step(self, omega: np.ndarray, dt: float) -> None:
        self._note_predict(dt)
        params_config = self.config
        self.intensity = phd_predict(
            self.intensity,
            omega,
            _with_dt(params_config, dt),
            birth_points=self._pending_birth,
            birth=self.birth,
        )
        self._pending_birth = []
        self._dt_since_update += dt

    def update_step(self, measurements: MeasurementSet) -> list[TrackEstimate]:
        self._note_update(measurements.frame_time)
        updated, masses = _update_with_masses(self.intensity, measurements, self.config)
        self._pending_birth = [
            measurements.detections[j].point
            for j in range(len(masses))
            if masses[j] < self.birth.responsibility_threshold
        ]
        self.intensity = prune_and_merge(updated, self.config, self.max_components)
        raw = extract_states(self.intensity, self.config, self.extraction_threshold)
        dt = self._dt_since_update if self._dt_since_update > 0.0 else self.config.model.dt
        self._estimates = self.labeler.assign(raw, dt)
        self._dt_since_update = 0.0
        return self.estimates()

    def estimates(self) -> list[TrackEstimate]:
        return list(self._estimates)


def _with_dt(config: TrackerConfig, dt: float) -> TrackerConfig:
    from dataclasses import replace

    return replace(config, model=config.model.with_dt(dt))
