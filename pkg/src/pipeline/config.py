"""
Run configuration.

A YAML document with the sections kalman, noise, loop_closure, io, api,
logging and synth. Every key may also be written flat as a dotted key
("loop_closure.xi: 0.5"); flat and nested forms can be mixed.

Resolution order for the config file: --config flag, HPT_CONFIG
environment variable, config/tracker.yaml. Only the last one may be
missing, in which case the built-in defaults apply.
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from core.adaptive_noise import EstimatorProfile, resolve_profile, unflatten
from core.errors import ConfigError
from core.kalman import KalmanConfig
from core.loop_closure import (
    DEFAULT_CALIBRATION_FRAMES,
    DEFAULT_THETA,
    DEFAULT_XI,
    LoopClosureConfig,
    NormMode,
)
from core.pose import AXES, EulerPose
from core.synth import SYNTHETIC_NOISE, NoiseSpec, TrajectorySpec, benchmark_spec


logger = logging.getLogger(__name__)

CONFIG_ENV_VAR = "HPT_CONFIG"
PROJECT_ROOT = Path(__file__).resolve().parents[2]
DEFAULT_CONFIG_PATH = PROJECT_ROOT / "config" / "tracker.yaml"

StreamFormat = Literal["jsonl", "csv"]
Triple = Tuple[float, float, float]


class NoiseSection(BaseModel):
    """Estimator profile reference plus optional clamp overrides."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    profile: Union[str, Dict[str, Any]] = "fsa_net"
    mode: Literal["adaptive", "constant"] = "adaptive"
    r_min: Optional[float] = Field(None, gt=0)
    r_max: Optional[float] = Field(None, gt=0)


class LoopClosureSection(BaseModel):
    """
    Loop-closure settings. Without an explicit kappa the origin is the
    mean of the first `calibration_frames` observations of each session.
    """

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    enabled: bool = False
    kappa: Optional[Triple] = None
    xi: float = Field(DEFAULT_XI, gt=0, le=1)
    theta: float = Field(DEFAULT_THETA, ge=0)
    norm_mode: NormMode = NormMode.EUCLIDEAN_3D
    calibration_frames: int = Field(DEFAULT_CALIBRATION_FRAMES, ge=1)

    @field_validator("kappa", mode="before")
    @classmethod
    def _kappa_mapping(cls, value):
        if isinstance(value, Mapping):
            return tuple(value[axis] for axis in AXES)
        return value

    def to_config(self) -> LoopClosureConfig:
        kappa = EulerPose(*self.kappa) if self.kappa is not None else EulerPose.zero()
        return LoopClosureConfig(kappa=kappa, xi=self.xi, theta=self.theta, norm_mode=self.norm_mode)

    @property
    def calibrate(self) -> bool:
        return self.enabled and self.kappa is None


class IOSection(BaseModel):
    """Input/output paths, listen address and metrics options."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    input: Optional[str] = None
    output: Optional[str] = None
    format: Optional[StreamFormat] = None
    metrics: Optional[str] = None
    listen: Optional[str] = None
    transport: Literal["tcp", "websocket"] = "tcp"
    strict_order: bool = True
    settle_epsilon: float = Field(3.0, gt=0)
    settle_target: Optional[Triple] = None
    settle_window: Optional[Tuple[float, float]] = None

    @model_validator(mode="after")
    def _one_source(self):
        if self.input is not None and self.listen is not None:
            raise ValueError("io.input and io.listen are exclusive: configure exactly one input source")
        if self.settle_window is not None and not self.settle_window[0] < self.settle_window[1]:
            raise ValueError("io.settle_window must be (start, end) with start < end")
        return self

    def listen_address(self, default_host: str = "127.0.0.1", default_port: int = 9999) -> Tuple[str, int]:
        if self.listen is None:
            return default_host, default_port
        return parse_address(self.listen)


class APISection(BaseModel):
    model_config = ConfigDict(frozen=True)

    host: str = "127.0.0.1"
    port: int = Field(8000, ge=0, le=65535)


class LoggingSection(BaseModel):
    model_config = ConfigDict(frozen=True)

    level: str = "INFO"
    format: str = "%(asctime)s %(levelname)s %(name)s: %(message)s"

    @field_validator("level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        value = value.upper()
        if value not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"unknown log level {value!r}")
        return value


class SynthSection(BaseModel):
    """Trajectory and estimator-noise choice for `simulate`."""

    model_config = ConfigDict(frozen=True)

    trajectory: Union[Literal["benchmark"], TrajectorySpec] = "benchmark"
    noise: Union[str, NoiseSpec] = "fsa_net_like"
    seed: int = 0

    def trajectory_spec(self) -> TrajectorySpec:
        if self.trajectory == "benchmark":
            return benchmark_spec(self.seed)
        return self.trajectory.model_copy(update={"seed": self.seed})

    def noise_spec(self) -> NoiseSpec:
        if isinstance(self.noise, NoiseSpec):
            return self.noise.with_seed(self.seed)
        if self.noise not in SYNTHETIC_NOISE:
            raise ConfigError(
                f"unknown synthetic noise {self.noise!r}; known: {', '.join(sorted(SYNTHETIC_NOISE))}"
            )
        return SYNTHETIC_NOISE[self.noise].with_seed(self.seed)


class RunConfig(BaseModel):
    """Complete configuration for one run of the tracker."""

    model_config = ConfigDict(extra="forbid")

    kalman: KalmanConfig = Field(default_factory=KalmanConfig)
    noise: NoiseSection = Field(default_factory=NoiseSection)
    loop_closure: LoopClosureSection = Field(default_factory=LoopClosureSection)
    io: IOSection = Field(default_factory=IOSection)
    api: APISection = Field(default_factory=APISection)
    logging: LoggingSection = Field(default_factory=LoggingSection)
    synth: SynthSection = Field(default_factory=SynthSection)
    source: Optional[str] = Field(None, exclude=True)

    @classmethod
    def from_document(cls, document: Mapping[str, Any], source: Optional[str] = None) -> "RunConfig":
        """Validate a nested or flat-dotted document."""
        try:
            data = unflatten(document)
            return cls.model_validate({**data, "source": source})
        except ValidationError as e:
            raise ConfigError(f"{source or 'config'}: {_summarize(e)}") from e
        except ValueError as e:
            raise ConfigError(f"{source or 'config'}: {e}") from e

    @property
    def base_dir(self) -> Path:
        return Path(self.source).parent if self.source else PROJECT_ROOT

    def resolve_profile(self) -> EstimatorProfile:
        """The configured estimator profile with overrides and mode applied."""
        try:
            profile = resolve_profile(self.noise.profile, base_dir=self.base_dir)
        except (OSError, ValueError) as e:
            raise ConfigError(f"noise.profile: {e}") from e
        if self.noise.r_min is not None or self.noise.r_max is not None:
            updates = {}
            for axis in AXES:
                model = profile.axis(axis)
                r_min = self.noise.r_min if self.noise.r_min is not None else model.r_min
                r_max = self.noise.r_max if self.noise.r_max is not None else model.r_max
                try:
                    updates[axis] = model.model_validate(
                        {**model.model_dump(), "r_min": r_min, "r_max": r_max}
                    )
                except ValidationError as e:
                    raise ConfigError(f"noise clamp override: {_summarize(e)}") from e
            profile = profile.model_copy(update=updates)
        if self.noise.mode == "constant":
            profile = profile.constant()
        return profile

    def with_overrides(self, overrides: Mapping[str, Any]) -> "RunConfig":
        """Copy with dotted-key overrides applied; None values are skipped."""
        present = {k: v for k, v in overrides.items() if v is not None}
        if not present:
            return self
        document = self.model_dump(mode="json", exclude={"source"})
        _deep_merge(document, unflatten(present))
        return RunConfig.from_document(document, source=self.source)


def _deep_merge(target: Dict[str, Any], updates: Mapping[str, Any]):
    for key, value in updates.items():
        if isinstance(value, Mapping) and isinstance(target.get(key), dict):
            _deep_merge(target[key], value)
        else:
            target[key] = value


def _summarize(error: ValidationError) -> str:
    parts: List[str] = []
    for item in error.errors()[:3]:
        location = ".".join(str(p) for p in item.get("loc", ()))
        parts.append(f"{location}: {item.get('msg')}" if location else str(item.get("msg")))
    return "; ".join(parts)


def parse_address(address: str) -> Tuple[str, int]:
    """'host:port' -> (host, port)."""
    host, sep, port = address.rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigError(f"listen address must be host:port, got {address!r}")
    return host or "127.0.0.1", int(port)


def resolve_config_path(
    explicit: Optional[str] = None, environ: Optional[Mapping[str, str]] = None
) -> Tuple[Path, bool]:
    """(path, required): required is False only for the default location."""
    environ = os.environ if environ is None else environ
    if explicit:
        return Path(explicit), True
    if environ.get(CONFIG_ENV_VAR):
        return Path(environ[CONFIG_ENV_VAR]), True
    return DEFAULT_CONFIG_PATH, False


def load_config(
    path: Optional[str] = None, environ: Optional[Mapping[str, str]] = None
) -> RunConfig:
    """Load and validate the run configuration."""
    config_path, required = resolve_config_path(path, environ)
    try:
        with open(config_path, "r") as f:
            document = yaml.safe_load(f) or {}
    except FileNotFoundError:
        if required:
            raise ConfigError(f"config file not found: {config_path}")
        logger.warning("Config file not found: %s; using default configuration", config_path)
        return RunConfig()
    except yaml.YAMLError as e:
        raise ConfigError(f"{config_path}: invalid YAML: {e}") from e

    if not isinstance(document, Mapping):
        raise ConfigError(f"{config_path}: top level must be a mapping")
    config = RunConfig.from_document(document, source=str(config_path))
    logger.debug("Loaded config from %s", config_path)
    return config


def configure_logging(config: RunConfig):
    logging.basicConfig(level=config.logging.level, format=config.logging.format)
    logging.getLogger().setLevel(config.logging.level)
