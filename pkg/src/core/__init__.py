"""Head Pose Tracker - Core Numerics

Constant-velocity Kalman filter for (pitch, yaw, roll) streams
Angle-dependent observation noise (offset-Gaussian curve)
Loop closure towards a calibrated origin pose
Estimator error characterization and synthetic benchmarks
"""

__version__ = "1.0.0"

from .adaptive_noise import (
    BUILTIN_PROFILES,
    FSA_NET,
    HOPENET,
    EstimatorProfile,
    NoiseModel,
    build_R,
    eval_noise,
    load_profile,
    resolve_profile,
    save_profile,
)
from .errors import (
    ConfigError,
    DegradedCovarianceError,
    OrderingError,
    PipelineError,
    StreamFormatError,
    StreamOrderError,
    TrackerError,
)
from .kalman import FilterSession, KalmanConfig, init_session, predict, step, update
from .loop_closure import LoopClosureConfig, NormMode, calibrate_origin
from .pose import AXES, CovarianceMatrix, EulerPose, FrameRecord, StateVector, normalize_angle

__all__ = [
    "AXES",
    "BUILTIN_PROFILES",
    "FSA_NET",
    "HOPENET",
    "ConfigError",
    "CovarianceMatrix",
    "DegradedCovarianceError",
    "EstimatorProfile",
    "EulerPose",
    "FilterSession",
    "FrameRecord",
    "KalmanConfig",
    "LoopClosureConfig",
    "NoiseModel",
    "NormMode",
    "OrderingError",
    "PipelineError",
    "StateVector",
    "StreamFormatError",
    "StreamOrderError",
    "TrackerError",
    "build_R",
    "calibrate_origin",
    "eval_noise",
    "init_session",
    "load_profile",
    "normalize_angle",
    "predict",
    "resolve_profile",
    "save_profile",
    "step",
    "update",
]
