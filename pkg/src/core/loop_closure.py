"""
Loop Closure

Pins the filter near a calibrated origin pose kappa. Whenever an
observation lies within theta of kappa it is pulled towards it:

    z' = kappa + xi * (z - kappa)     if ||z - kappa|| <= theta
    z' = z                            otherwise

(the same blend as xi*z + (1-xi)*kappa, written so that z = kappa maps
to kappa exactly). The map is discontinuous on the threshold sphere;
the jump there is (1 - xi) * theta and is kept as is.
"""

import math
from enum import Enum
from typing import Iterable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .pose import AXES, EulerPose


DEFAULT_XI = 0.618
DEFAULT_THETA = 2.0
DEFAULT_CALIBRATION_FRAMES = 30


class NormMode(str, Enum):
    EUCLIDEAN_3D = "euclidean_3d"
    PER_AXIS = "per_axis"


class LoopClosureConfig(BaseModel):
    """Origin kappa, fusion factor xi, threshold theta (degrees) and norm mode."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False, arbitrary_types_allowed=True)

    kappa: EulerPose = Field(default_factory=EulerPose.zero)
    xi: float = Field(DEFAULT_XI, gt=0, le=1)
    theta: float = Field(DEFAULT_THETA, ge=0)
    norm_mode: NormMode = NormMode.EUCLIDEAN_3D

    @field_validator("kappa", mode="before")
    @classmethod
    def _coerce_kappa(cls, value):
        if isinstance(value, EulerPose):
            return value
        if isinstance(value, dict):
            return EulerPose(**{axis: value[axis] for axis in AXES})
        return EulerPose.from_array(value)


def distance(config: LoopClosureConfig, z: EulerPose) -> float:
    """||z - kappa||; per-axis mode reports the largest axis offset."""
    offsets = z.as_array() - config.kappa.as_array()
    if config.norm_mode is NormMode.PER_AXIS:
        return float(np.max(np.abs(offsets)))
    return float(np.linalg.norm(offsets))


def apply(config: LoopClosureConfig, z: EulerPose) -> EulerPose:
    """Blend z towards kappa when within the threshold."""
    kappa = config.kappa.as_tuple()
    values = z.as_tuple()
    if config.norm_mode is NormMode.PER_AXIS:
        blended = tuple(
            k + config.xi * (v - k) if abs(v - k) <= config.theta else v
            for v, k in zip(values, kappa)
        )
        return EulerPose(*blended)

    offset = math.sqrt(sum((v - k) ** 2 for v, k in zip(values, kappa)))
    if offset > config.theta:
        return z
    return EulerPose(*(k + config.xi * (v - k) for v, k in zip(values, kappa)))


def calibrate_origin(
    frames: Iterable[EulerPose], n: int = DEFAULT_CALIBRATION_FRAMES
) -> EulerPose:
    """Componentwise mean of the first n observed poses."""
    if n < 1:
        raise ValueError(f"calibration needs at least one frame, got n={n}")
    calibrator = OriginCalibrator(n)
    origin = None
    for pose in frames:
        origin = calibrator.observe(pose)
        if origin is not None:
            break
    if calibrator.count == 0:
        raise ValueError("cannot calibrate an origin from an empty frame sequence")
    return origin if origin is not None else calibrator.current_mean()


class OriginCalibrator:
    """
    Streaming origin calibration.

    Accumulates raw observations until `frames` have been seen and then
    reports the mean once; later observations are ignored.
    """

    def __init__(self, frames: int = DEFAULT_CALIBRATION_FRAMES):
        if frames < 1:
            raise ValueError(f"calibration needs at least one frame, got {frames}")
        self.frames = frames
        self.count = 0
        self._sum = [0.0, 0.0, 0.0]
        self.origin: Optional[EulerPose] = None

    @property
    def done(self) -> bool:
        return self.origin is not None

    def observe(self, pose: EulerPose) -> Optional[EulerPose]:
        """Feed one observation; returns the origin on the frame that completes it."""
        if self.done:
            return None
        for i, value in enumerate(pose.as_tuple()):
            self._sum[i] += value
        self.count += 1
        if self.count >= self.frames:
            self.origin = self.current_mean()
            return self.origin
        return None

    def current_mean(self) -> EulerPose:
        if self.count == 0:
            raise ValueError("no observations yet")
        return EulerPose(*(s / self.count for s in self._sum))

