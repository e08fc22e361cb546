"""
Synthetic Benchmark Streams

Ground-truth head trajectories, stand-in estimator noise and the
evaluation metrics used by every end-to-end check.

- gen_trajectory: sum of sinusoids per axis, optional dwell-at-origin
  segments and an optional seeded wander
- corrupt: per-frame Gaussian draw whose standard deviation depends on
  the true angle (NoiseModel-shaped curve), plus bias
- rmse / jitter / settle_time: stream metrics

Random draws come from numpy's seeded Generator. Only distributional
properties of the draws are relied upon, never exact values.
"""

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .adaptive_noise import SQRT_2PI, EstimatorProfile, NoiseModel, eval_noise
from .pose import AXES, EulerPose, FrameRecord, poses_to_array


logger = logging.getLogger(__name__)

BENCHMARK_VERSION = 2
BENCHMARK_DWELL = (25.0, 35.0)
BENCHMARK_RAMP = 5.0
# at rest over the default origin-calibration window
BENCHMARK_LEAD_IN = 1.0


class Sinusoid(BaseModel):
    """amplitude * sin(2 pi frequency t + phase), degrees."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    amplitude: float
    frequency: float = Field(ge=0)
    phase: float = 0.0

    def value(self, t: np.ndarray) -> np.ndarray:
        return self.amplitude * np.sin(2.0 * math.pi * self.frequency * t + self.phase)


class DwellSegment(BaseModel):
    """
    Hold at the origin over [start, end).

    With ramp > 0 the motion fades out over [start - ramp, start) and back
    in over [end, end + ramp) along half-cosine ramps.
    """

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    start: float = Field(ge=0)
    end: float
    ramp: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.end > self.start:
            raise ValueError(f"dwell end ({self.end}) must be after start ({self.start})")
        return self

    def multiplier(self, t: np.ndarray) -> np.ndarray:
        m = np.ones_like(t)
        m[(t >= self.start) & (t < self.end)] = 0.0
        if self.ramp > 0:
            fade_out = (t >= self.start - self.ramp) & (t < self.start)
            m[fade_out] = 0.5 * (1.0 + np.cos(math.pi * (t[fade_out] - (self.start - self.ramp)) / self.ramp))
            fade_in = (t >= self.end) & (t < self.end + self.ramp)
            m[fade_in] = 0.5 * (1.0 - np.cos(math.pi * (t[fade_in] - self.end) / self.ramp))
        return m


class TrajectorySpec(BaseModel):
    """Duration (s), rate (Hz), per-axis sinusoid sums, dwell segments and seed."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    duration: float = Field(gt=0)
    rate: float = Field(gt=0)
    pitch: List[Sinusoid] = Field(default_factory=list)
    yaw: List[Sinusoid] = Field(default_factory=list)
    roll: List[Sinusoid] = Field(default_factory=list)
    dwell: List[DwellSegment] = Field(default_factory=list)
    seed: int = 0
    # smoothed random walk, degrees per sqrt(second); 0 disables
    wander_std: float = Field(0.0, ge=0)
    wander_smoothing: float = Field(1.0, gt=0)

    @property
    def n_frames(self) -> int:
        return int(round(self.duration * self.rate))

    def timestamps(self) -> np.ndarray:
        return np.arange(self.n_frames, dtype=float) / self.rate


class NoiseSpec(BaseModel):
    """
    Per-axis standard deviation curves sigma_err(x) plus bias.

    An axis left as None is noiseless.
    """

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    name: str = "custom"
    pitch: Optional[NoiseModel] = None
    yaw: Optional[NoiseModel] = None
    roll: Optional[NoiseModel] = None
    bias: float = 0.0
    seed: int = 0

    def curve(self, axis: str) -> Optional[NoiseModel]:
        if axis not in AXES:
            raise ValueError(f"unknown axis {axis!r}")
        return getattr(self, axis)

    def std(self, axis: str, angle: float) -> float:
        model = self.curve(axis)
        return 0.0 if model is None else eval_noise(model, angle)

    def with_seed(self, seed: int) -> "NoiseSpec":
        return self.model_copy(update={"seed": seed})


def std_curve(floor: float, ceiling: float, mu: float, sigma: float) -> NoiseModel:
    """Error std curve equal to `floor` at mu and rising to `ceiling` far away."""
    if not 0 < floor <= ceiling:
        raise ValueError(f"std curve needs 0 < floor <= ceiling, got {floor}, {ceiling}")
    return NoiseModel(
        lambda_=(ceiling - floor) * SQRT_2PI * sigma,
        mu=mu,
        sigma=sigma,
        tau=ceiling,
        r_min=floor,
        r_max=ceiling,
    )


# Error-vs-angle curves located and shaped like the built-in fits, scaled
# into the few-degree error band both estimators show on a benchmark.
FSA_NET_LIKE = NoiseSpec(
    name="fsa_net_like",
    yaw=std_curve(2.0, 6.0, mu=-0.35, sigma=30.87),
    pitch=std_curve(2.5, 4.0, mu=-5.19, sigma=132.41),
    roll=std_curve(2.0, 3.5, mu=-0.562, sigma=4440.0),
)

HOPENET_LIKE = NoiseSpec(
    name="hopenet_like",
    yaw=std_curve(3.0, 9.0, mu=-5.57, sigma=48.28),
    pitch=std_curve(3.5, 6.0, mu=-8.30, sigma=101.37),
    roll=std_curve(3.0, 5.0, mu=0.0476, sigma=2219.0),
)

SYNTHETIC_NOISE: Dict[str, NoiseSpec] = {
    FSA_NET_LIKE.name: FSA_NET_LIKE,
    HOPENET_LIKE.name: HOPENET_LIKE,
}


def matched_profile(noise: NoiseSpec, name: Optional[str] = None) -> EstimatorProfile:
    """
    Filter profile for a synthetic estimator: the variance curve with the
    noise curve's mu and sigma, R(mu) = floor^2 and R far away = ceiling^2.
    """
    axes = {}
    for axis in AXES:
        model = noise.curve(axis)
        if model is None:
            raise ValueError(f"noise spec {noise.name!r} has no curve for {axis}")
        floor, ceiling = model.minimum, model.tau
        tau = ceiling * ceiling
        axes[axis] = NoiseModel(
            lambda_=(tau - floor * floor) * SQRT_2PI * model.sigma,
            mu=model.mu,
            sigma=model.sigma,
            tau=tau,
        )
    return EstimatorProfile(
        name=name or f"{noise.name}_matched",
        metadata={"derived_from": noise.name},
        **axes,
    )


def benchmark_spec(seed: int = 0) -> TrajectorySpec:
    """
    Versioned benchmark trajectory: one second at rest, then sinusoids
    with a 10 s dwell at the origin.
    """
    return TrajectorySpec(
        duration=60.0,
        rate=30.0,
        yaw=[Sinusoid(amplitude=60.0, frequency=0.05)],
        pitch=[Sinusoid(amplitude=20.0, frequency=0.08)],
        roll=[Sinusoid(amplitude=15.0, frequency=0.06)],
        dwell=[
            DwellSegment(start=0.0, end=BENCHMARK_LEAD_IN, ramp=BENCHMARK_LEAD_IN),
            DwellSegment(start=BENCHMARK_DWELL[0], end=BENCHMARK_DWELL[1], ramp=BENCHMARK_RAMP),
        ],
        seed=seed,
    )


def _wander(spec: TrajectorySpec, t: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    dt = 1.0 / spec.rate
    steps = rng.standard_normal((len(t), 3)) * spec.wander_std * math.sqrt(dt)
    walk = np.cumsum(steps, axis=0)
    alpha = dt / (spec.wander_smoothing + dt)
    smoothed = np.empty_like(walk)
    level = np.zeros(3)
    for i, row in enumerate(walk):
        level = level + alpha * (row - level)
        smoothed[i] = level
    return smoothed


def gen_trajectory(spec: TrajectorySpec) -> List[FrameRecord]:
    """Ground-truth stream; the pose field starts out equal to the truth."""
    t = spec.timestamps()
    motion = np.ones_like(t)
    for segment in spec.dwell:
        motion = motion * segment.multiplier(t)

    columns = []
    for axis in AXES:
        values = np.zeros_like(t)
        for wave in getattr(spec, axis):
            values = values + wave.value(t)
        columns.append(values)
    truth = np.column_stack(columns) if len(t) else np.empty((0, 3))

    if spec.wander_std > 0:
        truth = truth + _wander(spec, t, np.random.default_rng(spec.seed))
    truth = truth * motion[:, None]

    frames = []
    for timestamp, row in zip(t, truth):
        pose = EulerPose.from_array(row).normalized()
        frames.append(FrameRecord(float(timestamp), pose, pose))
    logger.debug("Generated %d frames (%.1f s at %.1f Hz)", len(frames), spec.duration, spec.rate)
    return frames


def corrupt(frames: Sequence[FrameRecord], noise: NoiseSpec) -> List[FrameRecord]:
    """Replace each pose with truth + bias + N(0, sigma_err(truth)^2) per axis."""
    rng = np.random.default_rng(noise.seed)
    corrupted = []
    for index, frame in enumerate(frames):
        if frame.ground_truth is None:
            raise ValueError(f"frame {index} has no ground truth to corrupt")
        draws = rng.standard_normal(3)
        truth = frame.ground_truth
        values = [
            truth.component(axis) + noise.bias + noise.std(axis, truth.component(axis)) * draw
            for axis, draw in zip(AXES, draws)
        ]
        corrupted.append(frame.with_pose(EulerPose(*values).normalized()))
    return corrupted


def error_pairs(frames: Sequence[FrameRecord]) -> List[Tuple[EulerPose, EulerPose]]:
    """(true, predicted) pairs of the frames that carry ground truth."""
    return [(f.ground_truth, f.pose) for f in frames if f.ground_truth is not None]


PoseSeries = Union[Sequence[EulerPose], np.ndarray]


def _as_array(poses: PoseSeries) -> np.ndarray:
    if isinstance(poses, np.ndarray):
        array = np.asarray(poses, dtype=float)
    else:
        array = poses_to_array(poses)
    if array.ndim != 2 or array.shape[1] != 3:
        raise ValueError(f"expected an (N, 3) pose series, got shape {array.shape}")
    return array


def rmse(filtered: PoseSeries, truth: PoseSeries) -> Dict[str, float]:
    """Per-axis root mean squared difference."""
    a, b = _as_array(filtered), _as_array(truth)
    if len(a) != len(b):
        raise ValueError(f"stream lengths differ: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise ValueError("rmse of an empty stream is undefined")
    values = np.sqrt(np.mean((a - b) ** 2, axis=0))
    return {axis: float(v) for axis, v in zip(AXES, values)}


def jitter(stream: PoseSeries) -> Dict[str, float]:
    """Mean absolute frame-to-frame change per axis (degrees/frame)."""
    a = _as_array(stream)
    if len(a) < 2:
        raise ValueError(f"jitter needs at least 2 frames, got {len(a)}")
    values = np.mean(np.abs(np.diff(a, axis=0)), axis=0)
    return {axis: float(v) for axis, v in zip(AXES, values)}


def settle_time(
    timestamps: Sequence[float],
    stream: PoseSeries,
    target: EulerPose,
    epsilon: float,
) -> Optional[float]:
    """
    Seconds from the first frame until the stream enters the epsilon ball
    around target for good; None if it never does.
    """
    t = np.asarray(timestamps, dtype=float)
    a = _as_array(stream)
    if len(t) != len(a):
        raise ValueError(f"timestamps and stream lengths differ: {len(t)} vs {len(a)}")
    if len(a) == 0:
        return None
    distance = np.linalg.norm(a - target.as_array(), axis=1)
    outside = np.nonzero(distance > epsilon)[0]
    if len(outside) == 0:
        return 0.0
    last = int(outside[-1])
    if last == len(a) - 1:
        return None
    return float(t[last + 1] - t[0])


def window_mask(timestamps: Sequence[float], start: float, end: float) -> np.ndarray:
    """Boolean mask of timestamps within [start, end)."""
    t = np.asarray(timestamps, dtype=float)
    return (t >= start) & (t < end)
