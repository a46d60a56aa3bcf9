"""Pinhole camera geometry shared by every other module.

Conventions: the camera frame is right-handed with z pointing forward along
the optical axis, x right, y down.  Pixel coordinates grow right (u) and
down (v).  World points are mapped into the camera frame by an
:class:`ObserverPose` and then projected with :func:`project_camera_frame`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class BehindCamera(ValueError):
    """Raised when a point has non-positive depth along the optical axis.

    Such a point cannot produce a valid pixel hypothesis, so callers either
    let this propagate (hard geometry errors) or catch it to drop the point
    from a candidate set (consensus, visibility checks).
    """


@dataclass(frozen=True)
class PixelPoint:
    """A position on the image plane, in pixels."""

    u: float
    v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v], dtype=float)

    def distance_to(self, other: "PixelPoint") -> float:
        return float(np.hypot(self.u - other.u, self.v - other.v))


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics with a square pixel model (single focal length)."""

    focal_length: float = 400.0
    principal_point: tuple[float, float] = (320.0, 240.0)
    image_width: int = 640
    image_height: int = 480

    def __post_init__(self) -> None:
        if not self.focal_length > 0.0:
            raise ValueError(f"focal_length must be positive, got {self.focal_length}")
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("image dimensions must be positive")

    @property
    def cu(self) -> float:
        return self.principal_point[0]

    @property
    def cv(self) -> float:
        return self.principal_point[1]

    @property
    def image_area(self) -> float:
        """Image area in square pixels; the uniform clutter density support."""
        return float(self.image_width * self.image_height)

    def contains(self, point: PixelPoint) -> bool:
        """True when the pixel lies inside [0, W) x [0, H)."""
        return 0.0 <= point.u < self.image_width and 0.0 <= point.v < self.image_height


def _as_float_array(value: object, shape: tuple[int, ...], name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    return arr


@dataclass(frozen=True)
class ObserverPose:
    """Observer state needed by the trackers: pose plus body angular rate.

    ``rotation`` maps world coordinates into the camera frame.  The angular
    velocity is expressed in the camera/body frame, matching what a strapdown
    IMU reports.
    """

    position: np.ndarray
    rotation: np.ndarray
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", _as_float_array(self.position, (3,), "position"))
        object.__setattr__(self, "rotation", _as_float_array(self.rotation, (3, 3), "rotation"))
        object.__setattr__(
            self, "angular_velocity", _as_float_array(self.angular_velocity, (3,), "angular_velocity")
        )
        R = self.rotation
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-6):
            raise ValueError("rotation must be orthonormal")
        if not np.isclose(np.linalg.det(R), 1.0, atol=1e-6):
            raise ValueError("rotation must be proper (det +1)")
        for arr in (self.position, self.rotation, self.angular_velocity):
            arr.setflags(write=False)

    def world_to_camera(self, world_point: np.ndarray) -> np.ndarray:
        p = _as_float_array(world_point, (3,), "world_point")
        return self.rotation @ (p - self.position)


def project_camera_frame(point_c: np.ndarray, intrinsics: CameraIntrinsics) -> PixelPoint:
    """Project a camera-frame point to pixels; raises BehindCamera for z <= 0."""
    p = _as_float_array(point_c, (3,), "point_c")
    x, y, z = p
    if z <= 0.0:
        raise BehindCamera(f"point has non-positive depth z={z!r}")
    f = intrinsics.focal_length
    return PixelPoint(f * x / z + intrinsics.cu, f * y / z + intrinsics.cv)


def project(world_point: np.ndarray, pose: ObserverPose, intrinsics: CameraIntrinsics) -> PixelPoint:
    """Project a world point through the observer pose onto the image plane."""
    return project_camera_frame(pose.world_to_camera(world_point), intrinsics)


def try_project(
    world_point: np.ndarray, pose: ObserverPose, intrinsics: CameraIntrinsics
) -> PixelPoint | None:
    """Like :func:`project` but returns None instead of raising BehindCamera."""
    try:
        return project(world_point, pose, intrinsics)
    except BehindCamera:
        return None


def back_project(point: PixelPoint, depth: float, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Invert the projection at a known depth, returning a camera-frame point."""
    if depth <= 0.0:
        raise ValueError(f"depth must be positive, got {depth}")
    f = intrinsics.focal_length
    return np.array(
        [(point.u - intrinsics.cu) * depth / f, (point.v - intrinsics.cv) * depth / f, depth]
    )
