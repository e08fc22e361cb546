"""
Constant-Velocity Kalman Filter

State x = (p, y, r, v_p, v_y, v_r), observation z = (p, y, r).

Predict:
    x' = F x,            F = [[I, dt I], [0, I]]
    P' = F P F^T + Q
Update:
    S  = H P' H^T + R,   H = [I 0]
    K  = P' H^T S^-1     (solved against S, never inverted explicitly)
    x  = x' + K (z - H x')
    P  = (I - K H) P'    (Joseph form optional)

Every covariance leaving this module is re-symmetrized.

A FilterSession wires in the adaptive observation noise and loop
closure for one pose stream: step() blends the observation, builds R,
predicts over the frame interval and updates.
"""

import logging
import math
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from . import loop_closure as lc
from .adaptive_noise import EstimatorProfile, build_R
from .errors import DegradedCovarianceError, OrderingError
from .pose import CovarianceMatrix, EulerPose, FrameRecord, StateVector, symmetrize


logger = logging.getLogger(__name__)

STATE_DIM = 6
OBS_DIM = 3
MAX_CONDITION_NUMBER = 1e12

H = np.hstack([np.eye(OBS_DIM), np.zeros((OBS_DIM, OBS_DIM))])
H.setflags(write=False)

# Tuning values, not measured ones
DEFAULT_PROCESS_NOISE = (0.01, 0.01, 0.01, 0.1, 0.1, 0.1)
DEFAULT_INITIAL_COVARIANCE = (10.0, 10.0, 10.0, 10.0, 10.0, 10.0)
DEFAULT_FIXED_DT = 1.0 / 30.0


class DtMode(str, Enum):
    FROM_TIMESTAMPS = "from_timestamps"
    FIXED = "fixed"


class NoiseEvalPoint(str, Enum):
    BLENDED = "blended"
    RAW = "raw"


class KalmanConfig(BaseModel):
    """Process noise Q, initial covariance P0 (diagonals) and dt handling."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    process_noise_q: Tuple[float, float, float, float, float, float] = DEFAULT_PROCESS_NOISE
    initial_covariance_p0: Tuple[float, float, float, float, float, float] = (
        DEFAULT_INITIAL_COVARIANCE
    )
    dt_mode: DtMode = DtMode.FROM_TIMESTAMPS
    fixed_dt: float = Field(DEFAULT_FIXED_DT, gt=0)
    joseph_form: bool = False
    noise_eval_point: NoiseEvalPoint = NoiseEvalPoint.BLENDED

    @field_validator("process_noise_q", "initial_covariance_p0")
    @classmethod
    def _positive_diagonal(cls, value):
        if any(v <= 0 for v in value):
            raise ValueError("diagonal entries must be > 0")
        return value

    @property
    def Q(self) -> np.ndarray:
        return np.diag(self.process_noise_q)

    @property
    def P0(self) -> np.ndarray:
        return np.diag(self.initial_covariance_p0)


def transition_matrix(dt: float) -> np.ndarray:
    F = np.eye(STATE_DIM)
    F[:OBS_DIM, OBS_DIM:] = dt * np.eye(OBS_DIM)
    return F


def _check_dt(dt: float) -> float:
    dt = float(dt)
    if not math.isfinite(dt) or dt <= 0:
        raise ValueError(f"dt must be finite and > 0, got {dt!r}")
    return dt


def propagate(
    state: StateVector,
    covariance: CovarianceMatrix,
    process_noise: np.ndarray,
    dt: float,
) -> Tuple[StateVector, CovarianceMatrix]:
    """Prediction with an explicit process noise matrix."""
    dt = _check_dt(dt)
    F = transition_matrix(dt)
    x = F @ state.as_array()
    P = F @ covariance.matrix @ F.T + np.asarray(process_noise, dtype=float)
    return StateVector.from_array(x), CovarianceMatrix.symmetrized(P)


def kalman_gain(prior_covariance: CovarianceMatrix, R: np.ndarray) -> np.ndarray:
    """K = P H^T S^-1 as a 6x3 matrix."""
    P = prior_covariance.matrix
    S = H @ P @ H.T + np.asarray(R, dtype=float)
    condition = np.linalg.cond(S)
    if not np.isfinite(condition) or condition > MAX_CONDITION_NUMBER:
        raise DegradedCovarianceError(float(condition))
    # S and P are symmetric, so K^T = S^-1 H P
    return np.linalg.solve(S, H @ P).T


def _check_R(R: np.ndarray) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape != (OBS_DIM, OBS_DIM):
        raise ValueError(f"R must be 3x3, got shape {R.shape}")
    if not np.all(np.isfinite(R)) or np.any(np.diag(R) <= 0):
        raise ValueError("R diagonal entries must be finite and > 0")
    return R


def update(
    prior_state: StateVector,
    prior_covariance: CovarianceMatrix,
    z: EulerPose,
    R: np.ndarray,
    joseph_form: bool = False,
) -> Tuple[StateVector, CovarianceMatrix]:
    """Measurement update against observation z with noise R."""
    R = _check_R(R)
    K = kalman_gain(prior_covariance, R)
    x = prior_state.as_array()
    innovation = z.as_array() - H @ x
    posterior = x + K @ innovation

    P = prior_covariance.matrix
    I_KH = np.eye(STATE_DIM) - K @ H
    if joseph_form:
        P_post = I_KH @ P @ I_KH.T + K @ R @ K.T
    else:
        P_post = I_KH @ P
    return StateVector.from_array(posterior), CovarianceMatrix.symmetrized(P_post)


class FilterSession:
    """
    Mutable per-stream filter state.

    Single owner, strictly sequential. A session whose update hit a
    degraded covariance is flagged `needs_reinit` and refuses further
    steps; open a new one from the next frame.
    """

    def __init__(
        self,
        state: StateVector,
        covariance: CovarianceMatrix,
        last_timestamp: float,
        config: KalmanConfig,
        noise_models: EstimatorProfile,
        loop_closure: Optional[lc.LoopClosureConfig] = None,
        calibrator: Optional[lc.OriginCalibrator] = None,
        loop_closure_template: Optional[lc.LoopClosureConfig] = None,
    ):
        self.state = state
        self.covariance = covariance
        self.last_timestamp = last_timestamp
        self.config = config
        self.noise_models = noise_models
        self.loop_closure = loop_closure
        self.calibrator = calibrator
        self._loop_closure_template = loop_closure_template
        self.steps = 0
        self.needs_reinit = False

    @property
    def loop_closure_origin(self) -> Optional[EulerPose]:
        return self.loop_closure.kappa if self.loop_closure is not None else None

    def blend(self, pose: EulerPose) -> EulerPose:
        if self.loop_closure is None:
            return pose
        return lc.apply(self.loop_closure, pose)

    def _calibrate(self, pose: EulerPose):
        if self.calibrator is None or self.calibrator.done:
            return
        origin = self.calibrator.observe(pose)
        if origin is not None:
            template = self._loop_closure_template or lc.LoopClosureConfig()
            self.loop_closure = template.model_copy(update={"kappa": origin})
            logger.info(
                "Loop-closure origin calibrated from %d frames: %s",
                self.calibrator.count,
                origin,
            )

    def step(self, frame: FrameRecord) -> StateVector:
        return step(self, frame)


def init_session(
    config: KalmanConfig,
    first_observation: EulerPose,
    t0: float,
    noise_models: EstimatorProfile,
    loop_closure: Optional[lc.LoopClosureConfig] = None,
    calibration_frames: Optional[int] = None,
) -> FilterSession:
    """
    Open a session at the first observation with zero velocity. The
    observation is stored as given; loop closure only blends in step().

    With `calibration_frames` set, loop closure starts inactive and its
    origin is the mean of that many raw observations (this one
    included); `loop_closure` then only supplies xi, theta and the norm.
    """
    t0 = float(t0)
    if not math.isfinite(t0):
        raise ValueError(f"t0 must be finite, got {t0!r}")
    calibrator = None
    template = None
    active = loop_closure
    if calibration_frames is not None:
        calibrator = lc.OriginCalibrator(calibration_frames)
        template = loop_closure
        active = None

    session = FilterSession(
        state=StateVector(first_observation),
        covariance=CovarianceMatrix.diagonal(config.initial_covariance_p0),
        last_timestamp=t0,
        config=config,
        noise_models=noise_models,
        loop_closure=active,
        calibrator=calibrator,
        loop_closure_template=template,
    )
    session._calibrate(first_observation)
    return session


def predict(session: FilterSession, dt: float) -> Tuple[StateVector, CovarianceMatrix]:
    """Prior state and covariance dt seconds after the session's posterior."""
    return propagate(session.state, session.covariance, session.config.Q, dt)


def step(session: FilterSession, frame: FrameRecord) -> StateVector:
    """
    Advance the session by one frame and return the posterior.

    Order: loop-closure blend, R from the profile, predict, update.
    A rejected frame leaves the session untouched.
    """
    if session.needs_reinit:
        raise DegradedCovarianceError(float("inf"))

    config = session.config
    if config.dt_mode is DtMode.FROM_TIMESTAMPS:
        if not frame.timestamp > session.last_timestamp:
            raise OrderingError(frame.timestamp, session.last_timestamp)
        dt = frame.timestamp - session.last_timestamp
    else:
        dt = config.fixed_dt

    z = session.blend(frame.pose)
    noise_point = z if config.noise_eval_point is NoiseEvalPoint.BLENDED else frame.pose
    R = build_R(session.noise_models, noise_point)

    prior_state, prior_covariance = predict(session, dt)
    try:
        posterior, covariance = update(
            prior_state, prior_covariance, z, R, joseph_form=config.joseph_form
        )
    except DegradedCovarianceError:
        session.needs_reinit = True
        logger.warning("Degraded covariance at t=%s; session needs re-initialization", frame.timestamp)
        raise

    session.state = posterior
    session.covariance = covariance
    session.last_timestamp = frame.timestamp
    session.steps += 1
    session._calibrate(frame.pose)
    return posterior
