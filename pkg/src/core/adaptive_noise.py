"""
Adaptive Observation Noise

Angle-dependent observation variance for the Kalman update:

    R(x) = tau - lambda * 1/(sqrt(2 pi) sigma) * exp(-(x - mu)^2 / (2 sigma^2))

clamped to [r_min, r_max]. R is smallest at the estimator's best angle
(mu) and rises towards tau away from it, so the filter trusts
observations near the resting pose and smooths hard at extreme angles.

Fitted parameters are kept raw; the clamp is applied only when the
curve is evaluated.
"""

import math
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .pose import AXES, EulerPose


SQRT_2PI = math.sqrt(2.0 * math.pi)

DEFAULT_R_MIN = 0.5
DEFAULT_R_MAX = 500.0


class NoiseModel(BaseModel):
    """Per-axis curve parameters plus clamp bounds (degrees^2)."""

    model_config = ConfigDict(frozen=True, populate_by_name=True, allow_inf_nan=False)

    lambda_: float = Field(alias="lambda", description="Amplitude factor")
    mu: float = Field(description="Angle of minimum noise (degrees)")
    sigma: float = Field(gt=0, description="Width (degrees)")
    tau: float = Field(description="Far-field offset (degrees^2)")
    r_min: float = Field(DEFAULT_R_MIN, gt=0)
    r_max: float = Field(DEFAULT_R_MAX, gt=0)

    @model_validator(mode="after")
    def _check_bounds(self):
        if self.r_max < self.r_min:
            raise ValueError(f"r_max ({self.r_max}) must be >= r_min ({self.r_min})")
        return self

    @property
    def peak_density(self) -> float:
        """Gaussian density at mu, 1/(sqrt(2 pi) sigma)."""
        return 1.0 / (SQRT_2PI * self.sigma)

    @property
    def minimum(self) -> float:
        """Unclamped curve value at mu."""
        return self.tau - self.lambda_ * self.peak_density

    def to_dict(self) -> Dict[str, float]:
        return self.model_dump(by_alias=True)


class EstimatorProfile(BaseModel):
    """Named triple of per-axis noise models for one upstream estimator."""

    model_config = ConfigDict(frozen=True)

    name: str
    pitch: NoiseModel
    yaw: NoiseModel
    roll: NoiseModel
    metadata: Dict[str, Any] = Field(default_factory=dict)

    def axis(self, name: str) -> NoiseModel:
        if name not in AXES:
            raise ValueError(f"unknown axis {name!r}, expected one of {AXES}")
        return getattr(self, name)

    def constant(self) -> "EstimatorProfile":
        """
        Standard Kalman filter counterpart: every axis pinned to its
        clamped value at mu.
        """
        axes = {}
        for axis in AXES:
            model = self.axis(axis)
            axes[axis] = model.model_copy(
                update={"lambda_": 0.0, "tau": eval_noise(model, model.mu)}
            )
        return EstimatorProfile(
            name=f"{self.name}-constant",
            metadata={**self.metadata, "derived_from": self.name, "mode": "constant"},
            **axes,
        )


def _check_finite(x: float) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"noise evaluation point must be finite, got {x!r}")
    return x


def raw_noise(model: NoiseModel, x: float) -> float:
    """Unclamped curve value at x (degrees^2)."""
    x = _check_finite(x)
    offset = x - model.mu
    gaussian = math.exp(-(offset * offset) / (2.0 * model.sigma * model.sigma))
    return model.tau - model.lambda_ * gaussian / (SQRT_2PI * model.sigma)


def eval_noise(model: NoiseModel, x: float) -> float:
    """Observation variance at angle x, clamped to [r_min, r_max]."""
    value = raw_noise(model, x)
    return min(max(value, model.r_min), model.r_max)


def noise_curve(model: NoiseModel, xs: np.ndarray, clamp: bool = True) -> np.ndarray:
    """Vectorized evaluation over an array of angles."""
    xs = np.asarray(xs, dtype=float)
    if not np.all(np.isfinite(xs)):
        raise ValueError("noise evaluation points must be finite")
    values = model.tau - model.lambda_ * np.exp(
        -((xs - model.mu) ** 2) / (2.0 * model.sigma**2)
    ) / (SQRT_2PI * model.sigma)
    if clamp:
        values = np.clip(values, model.r_min, model.r_max)
    return values


def build_R(profile: EstimatorProfile, z: EulerPose) -> np.ndarray:
    """Diagonal 3x3 observation covariance for observation z."""
    return np.diag(
        [
            eval_noise(profile.pitch, z.pitch),
            eval_noise(profile.yaw, z.yaw),
            eval_noise(profile.roll, z.roll),
        ]
    )


# Gaussian fitting parameters measured on AFLW2000 for two estimators
FSA_NET = EstimatorProfile(
    name="fsa_net",
    yaw=NoiseModel(**{"lambda": 4.11, "mu": -0.35, "sigma": 30.87, "tau": 7.64}),
    pitch=NoiseModel(**{"lambda": 312.07, "mu": -5.19, "sigma": 132.41, "tau": 315.43}),
    roll=NoiseModel(**{"lambda": 3.29e05, "mu": -5.62e-01, "sigma": 4.44e03, "tau": 3.29e05}),
    metadata={"source": "AFLW2000 Gaussian fit"},
)

HOPENET = EstimatorProfile(
    name="hopenet",
    yaw=NoiseModel(**{"lambda": 7.017, "mu": -5.57, "sigma": 48.28, "tau": 10.74}),
    pitch=NoiseModel(**{"lambda": 229.18, "mu": -8.30, "sigma": 101.37, "tau": 232.88}),
    roll=NoiseModel(**{"lambda": 9.35e04, "mu": 4.76e-02, "sigma": 2.219e03, "tau": 9.35e04}),
    metadata={"source": "AFLW2000 Gaussian fit"},
)

BUILTIN_PROFILES: Dict[str, EstimatorProfile] = {
    FSA_NET.name: FSA_NET,
    HOPENET.name: HOPENET,
}


def unflatten(document: Mapping[str, Any]) -> Dict[str, Any]:
    """
    Expand dotted keys into nested mappings.

    {"yaw.mu": 1.0, "name": "x"} -> {"yaw": {"mu": 1.0}, "name": "x"}.
    Nested and dotted forms may be mixed.
    """
    result: Dict[str, Any] = {}
    for key, value in document.items():
        if isinstance(value, Mapping):
            value = unflatten(value)
        parts = str(key).split(".")
        node = result
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValueError(f"key {key!r} conflicts with a scalar value")
        leaf = parts[-1]
        if isinstance(value, dict) and isinstance(node.get(leaf), dict):
            node[leaf].update(value)
        else:
            node[leaf] = value
    return result


def profile_from_dict(document: Mapping[str, Any]) -> EstimatorProfile:
    """Build a profile from a nested or flat-dotted document."""
    data = unflatten(document)
    missing = [axis for axis in AXES if axis not in data]
    if missing:
        raise ValueError(f"profile is missing axis section(s): {', '.join(missing)}")
    if "provenance" in data:
        data.setdefault("metadata", {})["provenance"] = data.pop("provenance")
    return EstimatorProfile.model_validate(data)


def profile_to_dict(profile: EstimatorProfile) -> Dict[str, Any]:
    document: Dict[str, Any] = {"name": profile.name}
    for axis in AXES:
        document[axis] = profile.axis(axis).to_dict()
    if profile.metadata:
        document["metadata"] = dict(profile.metadata)
    return document


def save_profile(profile: EstimatorProfile, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        yaml.safe_dump(profile_to_dict(profile), f, sort_keys=False)
    return path


def load_profile(path: Union[str, Path]) -> EstimatorProfile:
    with open(path, "r") as f:
        document = yaml.safe_load(f) or {}
    if not isinstance(document, Mapping):
        raise ValueError(f"{path}: profile document must be a mapping")
    return profile_from_dict(document)


def resolve_profile(
    reference: Union[str, Mapping[str, Any], EstimatorProfile],
    base_dir: Optional[Path] = None,
) -> EstimatorProfile:
    """Resolve a built-in name, a profile path or an inline mapping."""
    if isinstance(reference, EstimatorProfile):
        return reference
    if isinstance(reference, Mapping):
        return profile_from_dict(reference)
    if reference in BUILTIN_PROFILES:
        return BUILTIN_PROFILES[reference]
    path = Path(reference)
    if not path.is_absolute() and base_dir is not None and not path.exists():
        path = base_dir / path
    if not path.exists():
        raise FileNotFoundError(
            f"noise profile {reference!r} is neither built-in "
            f"({', '.join(sorted(BUILTIN_PROFILES))}) nor an existing file"
        )
    return load_profile(path)
