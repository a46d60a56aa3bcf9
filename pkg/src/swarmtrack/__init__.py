"""Image-plane multi-target tracking for drone swarms seen from a moving camera.

The package bundles three recursive trackers that share one motion model
(constant velocity in pixel coordinates plus an ego-rotation coupling term),
a perception-consensus step that names tracks after a one-time position
broadcast, a deterministic scenario simulator, and study drivers that write
delimited results plus rendered figures.
"""

from .geometry import (
    BehindCamera,
    CameraIntrinsics,
    ObserverPose,
    PixelPoint,
    back_project,
    project,
    project_camera_frame,
)
from .motion import ModelParams, StateGaussian, TrackState, predict
from .tracking import Measurement, MeasurementSet, TrackEstimate, TrackerConfig, make_tracker
from .kalman import KalmanTracker
from .jpdaf import JpdafTracker
from .gmphd import BirthModel, GaussianComponent, GmphdTracker, Intensity
from .consensus import BroadcastEntry, GlobalAssignment, InitBroadcast, assign_ids
from .sim import NoiseConfig, ScenarioConfig, builtin_crossing_scenario, builtin_formation_scenario, generate
from .runner import RunResult, run_tracking
from .metrics import RunMetrics, compute_run_metrics

__version__ = "0.1.0"

__all__ = [
    "BehindCamera",
    "BirthModel",
    "BroadcastEntry",
    "CameraIntrinsics",
    "GaussianComponent",
    "GlobalAssignment",
    "GmphdTracker",
    "InitBroadcast",
    "Intensity",
    "JpdafTracker",
    "KalmanTracker",
    "Measurement",
    "MeasurementSet",
    "ModelParams",
    "NoiseConfig",
    "ObserverPose",
    "PixelPoint",
    "RunMetrics",
    "RunResult",
    "ScenarioConfig",
    "StateGaussian",
    "TrackEstimate",
    "TrackState",
    "TrackerConfig",
    "assign_ids",
    "back_project",
    "builtin_crossing_scenario",
    "builtin_formation_scenario",
    "compute_run_metrics",
    "generate",
    "make_tracker",
    "predict",
    "project",
    "project_camera_frame",
    "run_tracking",
    "__version__",
]
