"""Perception consensus: naming local tracks after a one-time broadcast.

At startup every drone broadcasts its id and initial 3D position once.  An
observer projects those positions into its own camera and gives each local
track the id of the nearest projection in pixels.  No later communication
happens; after a tracker reset the same broadcast is reused, so the scheme
degrades once drones have moved far from their initial poses.  Conflicting
claims (two tracks choosing one id) are reported, not repaired: surfacing
the disagreement is the observable failure mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geometry import BehindCamera, CameraIntrinsics, ObserverPose, project
from .tracking import TrackEstimate


@dataclass(frozen=True)
class BroadcastEntry:
    """One drone's initial announcement: id plus world position in meters."""

    drone_id: int
    position: np.ndarray

    def __post_init__(self) -> None:
        if self.drone_id < 0:
            raise ValueError("drone_id must be non-negative")
        pos = np.asarray(self.position, dtype=float).reshape(3)
        pos.setflags(write=False)
        object.__setattr__(self, "position", pos)

    def to_dict(self) -> dict:
        x, y, z = self.position
        return {"id": int(self.drone_id), "x": float(x), "y": float(y), "z": float(z)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "BroadcastEntry":
        return cls(int(d["id"]), np.array([d["x"], d["y"], d["z"]], dtype=float))


@dataclass(frozen=True)
class InitBroadcast:
    """The full set of initial announcements, one per drone."""

    entries: tuple[BroadcastEntry, ...]

    def __init__(self, entries: Iterable[BroadcastEntry]) -> None:
        entries = tuple(entries)
        ids = [e.drone_id for e in entries]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate drone ids in broadcast: {sorted(ids)}")
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    def to_list(self) -> list[dict]:
        return [e.to_dict() for e in self.entries]

    @classmethod
    def from_list(cls, rows: Iterable[Mapping]) -> "InitBroadcast":
        return cls(BroadcastEntry.from_dict(r) for r in rows)


@dataclass(frozen=True)
class GlobalAssignment:
    """Result of one consensus pass.

    ``mapping`` takes each local track index to a drone id, or None when no
    broadcast entry was visible.  ``residuals`` keeps the pixel distance to
    every candidate projection for diagnostics.
    """

    mapping: dict[int, int | None]
    residuals: dict[int, dict[int, float]] = field(default_factory=dict)

    @property
    def duplicates(self) -> dict[int, list[int]]:
        """Drone ids claimed by more than one track, with the claimants."""
        claims: dict[int, list[int]] = {}
        for track, drone in self.mapping.items():
            if drone is not None:
                claims.setdefault(drone, []).append(track)
        return {d: sorted(t) for d, t in claims.items() if len(t) > 1}


def assign_ids(
    tracks: Sequence[TrackEstimate],
    broadcast: InitBroadcast,
    pose: ObserverPose,
    intrinsics: CameraIntrinsics,
) -> GlobalAssignment:
    """Row-wise nearest-projection id assignment.

    Broadcast entries behind the camera are excluded from every candidate
    set.  Distance ties break toward the lower drone id.  Each track chooses
    independently, so duplicates are possible by design.
    """
    projections: list[tuple[int, np.ndarray]] = []
    for entry in broadcast.entries:
        try:
            p = project(entry.position, pose, intrinsics)
        except BehindCamera:
            continue
        projections.append((entry.drone_id, p.as_array()))

    mapping: dict[int, int | None] = {}
    residuals: dict[int, dict[int, float]] = {}
    for est in tracks:
        pos = est.position
        dists = {drone: float(np.linalg.norm(pos - proj)) for drone, proj in projections}
        residuals[est.local_track_index] = dists
        if dists:
            best = min(dists.items(), key=lambda kv: (kv[1], kv[0]))
            mapping[est.local_track_index] = best[0]
        else:
            mapping[est.local_track_index] = None
    return GlobalAssignment(mapping, residuals)


def reassign_on_reset(
    tracks: Sequence[TrackEstimate],
    broadcast: InitBroadcast,
    pose: ObserverPose,
    intrinsics: CameraIntrinsics,
) -> GlobalAssignment:
    """Re-run consensus after a tracker re-initialization.

    Identical to :func:`assign_ids` on purpose: the only information
    available is still the stale one-time broadcast, which is exactly why
    identity recovery degrades as the formation drifts.
    """
    return assign_ids(tracks, broadcast, pose, intrinsics)
