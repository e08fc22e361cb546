"""
Pose Core - shared domain types

Angles are degrees everywhere and components are always ordered
(pitch, yaw, roll). Normalization to [-180, 180) happens at ingestion
only; filter arithmetic never wraps.

Types:
- EulerPose: one (pitch, yaw, roll) observation or truth sample
- StateVector: pose plus angular velocities (degrees/second)
- CovarianceMatrix: read-only 6x6 symmetric covariance
- FrameRecord: timestamped pose sample with optional ground truth
"""

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np


AXES: Tuple[str, str, str] = ("pitch", "yaw", "roll")
VELOCITY_KEYS: Tuple[str, str, str] = ("vp", "vy", "vr")

SYMMETRY_TOLERANCE = 1e-9
PSD_TOLERANCE = 1e-9


def _require_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


def normalize_angle(raw: float) -> float:
    """
    Wrap an angle in degrees into [-180, 180).

    Values already inside the interval are returned unchanged so that
    ingestion never perturbs in-range data.
    """
    raw = _require_finite("angle", raw)
    if -180.0 <= raw < 180.0:
        return raw
    wrapped = raw - 360.0 * math.floor((raw + 180.0) / 360.0)
    if wrapped >= 180.0:
        wrapped -= 360.0
    elif wrapped < -180.0:
        wrapped += 360.0
    return wrapped


def angle_difference(a: float, b: float) -> float:
    """Minimal signed difference a - b in degrees, in [-180, 180)."""
    return normalize_angle(float(a) - float(b))


@dataclass(frozen=True)
class EulerPose:
    """Head orientation (pitch, yaw, roll) in degrees."""

    pitch: float
    yaw: float
    roll: float

    def __post_init__(self):
        for axis in AXES:
            object.__setattr__(self, axis, _require_finite(axis, getattr(self, axis)))

    @classmethod
    def zero(cls) -> "EulerPose":
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, values: Iterable[float]) -> "EulerPose":
        pitch, yaw, roll = (float(v) for v in values)
        return cls(pitch, yaw, roll)

    def as_array(self) -> np.ndarray:
        return np.array([self.pitch, self.yaw, self.roll], dtype=float)

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.pitch, self.yaw, self.roll)

    def normalized(self) -> "EulerPose":
        """Copy with every component wrapped into [-180, 180)."""
        return EulerPose(
            normalize_angle(self.pitch),
            normalize_angle(self.yaw),
            normalize_angle(self.roll),
        )

    def component(self, axis: str) -> float:
        if axis not in AXES:
            raise ValueError(f"unknown axis {axis!r}, expected one of {AXES}")
        return getattr(self, axis)

    def replace(self, **components: float) -> "EulerPose":
        values = {axis: getattr(self, axis) for axis in AXES}
        values.update(components)
        return EulerPose(**values)


@dataclass(frozen=True)
class StateVector:
    """
    Filter state x = (p, y, r, v_p, v_y, v_r).

    Velocities are degrees/second in the same axis order as the pose.
    """

    pose: EulerPose
    velocity: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.velocity) != 3:
            raise ValueError("velocity must have exactly three components")
        velocity = tuple(
            _require_finite(key, v) for key, v in zip(VELOCITY_KEYS, self.velocity)
        )
        object.__setattr__(self, "velocity", velocity)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "StateVector":
        values = np.asarray(values, dtype=float)
        if values.shape != (6,):
            raise ValueError(f"state vector needs 6 components, got shape {values.shape}")
        return cls(
            EulerPose.from_array(values[:3]),
            (float(values[3]), float(values[4]), float(values[5])),
        )

    def as_array(self) -> np.ndarray:
        return np.array([*self.pose.as_tuple(), *self.velocity], dtype=float)


@dataclass(frozen=True)
class CovarianceMatrix:
    """
    Read-only 6x6 state covariance.

    Construction copies the input and marks it non-writeable; use
    `symmetrized` to build one from a raw product.
    """

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        if matrix.shape != (6, 6):
            raise ValueError(f"covariance must be 6x6, got shape {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("covariance contains non-finite entries")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def diagonal(cls, entries: Sequence[float]) -> "CovarianceMatrix":
        return cls(np.diag(np.asarray(entries, dtype=float)))

    @classmethod
    def symmetrized(cls, matrix: np.ndarray) -> "CovarianceMatrix":
        return cls(symmetrize(matrix))

    def asymmetry(self) -> float:
        """Largest absolute entry of P - P^T."""
        return float(np.max(np.abs(self.matrix - self.matrix.T)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix).min())

    def is_valid(self) -> bool:
        return (
            self.asymmetry() < SYMMETRY_TOLERANCE
            and self.min_eigenvalue() >= -PSD_TOLERANCE
        )


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    """0.5 (P + P^T)."""
    matrix = np.asarray(matrix, dtype=float)
    return 0.5 * (matrix + matrix.T)


@dataclass(frozen=True)
class FrameRecord:
    """One timestamped pose sample (seconds, degrees)."""

    timestamp: float
    pose: EulerPose
    ground_truth: Optional[EulerPose] = None

    def __post_init__(self):
        object.__setattr__(self, "timestamp", _require_finite("timestamp", self.timestamp))

    def with_pose(self, pose: EulerPose) -> "FrameRecord":
        return FrameRecord(self.timestamp, pose, self.ground_truth)


def poses_to_array(poses: Iterable[EulerPose]) -> np.ndarray:
    """Stack poses into an (N, 3) array."""
    rows = [pose.as_tuple() for pose in poses]
    if not rows:
        return np.empty((0, 3), dtype=float)
    return np.array(rows, dtype=float)
