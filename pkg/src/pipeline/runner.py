"""
Offline filter runs.

SessionFactory turns a RunConfig into FilterSessions; the same factory
backs the file pipeline, the TCP frame server and the WebSocket bridge,
so identical frame sequences give identical posteriors everywhere.
"""

import json
import logging
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from core.adaptive_noise import EstimatorProfile
from core.errors import PipelineError, TrackerError
from core.kalman import FilterSession, KalmanConfig, init_session
from core.loop_closure import LoopClosureConfig
from core.pose import AXES, EulerPose, FrameRecord, StateVector
from core.synth import jitter, rmse, settle_time, window_mask

from .config import RunConfig
from .streams import read_stream, write_stream


logger = logging.getLogger(__name__)

METRICS_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SessionFactory:
    """Read-only recipe for opening a FilterSession from a first frame."""

    kalman: KalmanConfig
    profile: EstimatorProfile
    loop_closure: Optional[LoopClosureConfig] = None
    calibration_frames: Optional[int] = None

    @classmethod
    def from_config(cls, config: RunConfig, profile: Optional[EstimatorProfile] = None) -> "SessionFactory":
        section = config.loop_closure
        return cls(
            kalman=config.kalman,
            profile=profile or config.resolve_profile(),
            loop_closure=section.to_config() if section.enabled else None,
            calibration_frames=section.calibration_frames if section.calibrate else None,
        )

    def open(self, frame: FrameRecord) -> FilterSession:
        return init_session(
            self.kalman,
            frame.pose,
            frame.timestamp,
            self.profile,
            loop_closure=self.loop_closure,
            calibration_frames=self.calibration_frames,
        )


@dataclass
class FilterRun:
    """Posteriors of one pass over a stream plus per-frame latency."""

    frames: List[FrameRecord]
    states: List[StateVector]
    latencies_ms: List[float] = field(default_factory=list)
    loop_closure_origin: Optional[EulerPose] = None

    def posterior_poses(self) -> List[EulerPose]:
        return [state.pose for state in self.states]

    def posterior_frames(self) -> List[FrameRecord]:
        return [frame.with_pose(state.pose) for frame, state in zip(self.frames, self.states)]


def filter_frames(factory: SessionFactory, frames: Sequence[FrameRecord]) -> FilterRun:
    """Run one session over the frames in order; the first frame opens it."""
    states: List[StateVector] = []
    latencies: List[float] = []
    session: Optional[FilterSession] = None
    for index, frame in enumerate(frames):
        started = time.perf_counter()
        try:
            if session is None:
                session = factory.open(frame)
                state = session.state
            else:
                state = session.step(frame)
        except (TrackerError, ValueError) as e:
            raise PipelineError(index, e) from e
        latencies.append((time.perf_counter() - started) * 1000.0)
        states.append(state)
    origin = session.loop_closure_origin if session is not None else None
    return FilterRun(list(frames), states, latencies, origin)


def _as_floats(values: Optional[Dict[str, float]]) -> Optional[Dict[str, float]]:
    return None if values is None else {k: float(v) for k, v in values.items()}


def compute_metrics(
    run: FilterRun,
    profile_name: Optional[str] = None,
    settle_target: Optional[EulerPose] = None,
    settle_epsilon: float = 3.0,
    settle_window: Optional[Sequence[float]] = None,
) -> Dict[str, Any]:
    """
    Versioned metrics report for one filter run.

    The settle target defaults to the zero pose, never the run's own
    loop-closure origin, so paired runs are measured against one target.
    """
    frames = run.frames
    observed = [f.pose for f in frames]
    filtered = run.posterior_poses()
    has_truth = bool(frames) and all(f.ground_truth is not None for f in frames)
    truth = [f.ground_truth for f in frames] if has_truth else None

    target = settle_target if settle_target is not None else EulerPose.zero()
    timestamps = np.array([f.timestamp for f in frames], dtype=float)
    window = np.ones(len(frames), dtype=bool)
    if settle_window is not None:
        window = window_mask(timestamps, settle_window[0], settle_window[1])
    filtered_array = np.array([p.as_tuple() for p in filtered], dtype=float).reshape(-1, 3)

    latencies = run.latencies_ms
    return {
        "schema_version": METRICS_SCHEMA_VERSION,
        "frames": len(frames),
        "profile": profile_name,
        "rmse": _as_floats(rmse(filtered, truth)) if has_truth else None,
        "raw_rmse": _as_floats(rmse(observed, truth)) if has_truth else None,
        "jitter": _as_floats(jitter(filtered)) if len(frames) >= 2 else None,
        "raw_jitter": _as_floats(jitter(observed)) if len(frames) >= 2 else None,
        "settle_time": settle_time(timestamps[window], filtered_array[window], target, settle_epsilon),
        "settle_target": dict(zip(AXES, target.as_tuple())),
        "settle_epsilon": settle_epsilon,
        "settle_window": list(settle_window) if settle_window is not None else None,
        "latency_ms": {
            "mean": statistics.fmean(latencies) if latencies else None,
            "median": statistics.median(latencies) if latencies else None,
        },
        "loop_closure_origin": (
            dict(zip(AXES, run.loop_closure_origin.as_tuple()))
            if run.loop_closure_origin is not None
            else None
        ),
    }


def metrics_for(config: RunConfig, run: FilterRun, profile_name: Optional[str]) -> Dict[str, Any]:
    io = config.io
    target = EulerPose(*io.settle_target) if io.settle_target is not None else None
    return compute_metrics(
        run,
        profile_name=profile_name,
        settle_target=target,
        settle_epsilon=io.settle_epsilon,
        settle_window=io.settle_window,
    )


@dataclass
class PipelineResult:
    run: FilterRun
    metrics: Dict[str, Any]
    output_path: Optional[Path] = None


def run_filter_pipeline(config: RunConfig, frames: Optional[Sequence[FrameRecord]] = None) -> PipelineResult:
    """
    Filter io.input (or the given frames), write io.output and io.metrics
    when configured, and return posteriors plus the metrics report.
    """
    io = config.io
    if frames is None:
        if io.input is None:
            raise ValueError("no input stream configured (io.input)")
        frames = read_stream(io.input, io.format, strict=io.strict_order)

    factory = SessionFactory.from_config(config)
    run = filter_frames(factory, frames)
    metrics = metrics_for(config, run, factory.profile.name)

    output_path = None
    if io.output is not None:
        output_path = write_stream(io.output, run.frames, states=run.states)
    if io.metrics is not None:
        metrics_path = Path(io.metrics)
        metrics_path.parent.mkdir(parents=True, exist_ok=True)
        metrics_path.write_text(json.dumps(metrics, indent=2))

    logger.info(
        "Filtered %d frames with profile %s (mean latency %.3f ms)",
        metrics["frames"], factory.profile.name, metrics["latency_ms"]["mean"] or 0.0,
    )
    return PipelineResult(run, metrics, output_path)


VARIANTS = ("original", "standard", "adaptive", "adaptive_loop_closure")


def compare_variants(config: RunConfig, frames: Sequence[FrameRecord]) -> Dict[str, Dict[str, Any]]:
    """
    Metrics for the observations themselves, a constant-R filter, the
    adaptive-R filter and adaptive R with loop closure, on the same frames.
    """
    if not frames:
        raise ValueError("cannot compare variants on an empty stream")
    profile = config.resolve_profile()
    lc_section = config.loop_closure
    lc_config = lc_section.to_config()
    calibration = lc_section.calibration_frames if lc_section.kappa is None else None

    factories = {
        "standard": SessionFactory(config.kalman, profile.constant()),
        "adaptive": SessionFactory(config.kalman, profile),
        "adaptive_loop_closure": SessionFactory(config.kalman, profile, lc_config, calibration),
    }

    report: Dict[str, Dict[str, Any]] = {}
    identity = FilterRun(list(frames), [StateVector(f.pose) for f in frames])
    report["original"] = metrics_for(config, identity, None)
    for name, factory in factories.items():
        run = filter_frames(factory, frames)
        report[name] = metrics_for(config, run, factory.profile.name)
    return report


def evaluate_streams(
    candidate: Sequence[FrameRecord], reference: Sequence[FrameRecord]
) -> Dict[str, Any]:
    """Side-by-side metrics of two aligned streams (same timestamps)."""
    if len(candidate) != len(reference):
        raise ValueError(f"stream lengths differ: {len(candidate)} vs {len(reference)}")
    for index, (a, b) in enumerate(zip(candidate, reference)):
        if abs(a.timestamp - b.timestamp) > 1e-9:
            raise ValueError(f"timestamps differ at frame {index}: {a.timestamp!r} vs {b.timestamp!r}")

    a_poses = [f.pose for f in candidate]
    b_poses = [f.pose for f in reference]
    report: Dict[str, Any] = {
        "schema_version": METRICS_SCHEMA_VERSION,
        "frames": len(candidate),
        "difference_rmse": rmse(a_poses, b_poses) if candidate else None,
        "candidate_jitter": jitter(a_poses) if len(candidate) >= 2 else None,
        "reference_jitter": jitter(b_poses) if len(reference) >= 2 else None,
    }
    for label, stream in (("candidate", candidate), ("reference", reference)):
        truths = [f.ground_truth for f in stream]
        report[f"{label}_rmse"] = (
            rmse([f.pose for f in stream], truths)
            if stream and all(t is not None for t in truths)
            else None
        )
    return report
