"""
Test suite for the constant-velocity Kalman filter

Tests predict/update algebra, session stepping, covariance health over long
randomized streams, and agreement with independent reference filters.
"""

import os
import sys

import numpy as np
import pytest
from filterpy.kalman import KalmanFilter

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(__file__)), 'src'))

from core.adaptive_noise import HOPENET, EstimatorProfile, NoiseModel, build_R
from core.errors import DegradedCovarianceError, OrderingError
from core.kalman import (
    DtMode,
    KalmanConfig,
    init_session,
    kalman_gain,
    predict,
    propagate,
    transition_matrix,
    update,
)
from core.loop_closure import LoopClosureConfig, NormMode
from core.pose import AXES, CovarianceMatrix, EulerPose, FrameRecord, StateVector


def constant_profile(value=1.0, name="flat"):
    axis = NoiseModel(**{"lambda": 0.0, "mu": 0.0, "sigma": 1.0, "tau": value})
    return EstimatorProfile(name=name, pitch=axis, yaw=axis, roll=axis)


def random_frames(rng, n, t0=0.0, spread=30.0):
    t = t0
    frames = []
    for _ in range(n):
        t += rng.uniform(0.01, 0.1)
        frames.append(FrameRecord(t, EulerPose(*rng.uniform(-spread, spread, 3))))
    return frames


class TestInitSession:
    """Test session construction."""

    def test_zero_observation(self):
        session = init_session(KalmanConfig(), EulerPose.zero(), 0.0, HOPENET)
        assert session.state.as_array().tolist() == [0.0] * 6

    def test_state_from_first_observation(self):
        session = init_session(KalmanConfig(), EulerPose(5, -3, 1), 2.5, HOPENET)
        assert session.state.pose == EulerPose(5, -3, 1)
        assert session.state.velocity == (0.0, 0.0, 0.0)
        assert session.last_timestamp == 2.5

    def test_first_observation_not_blended(self):
        lc = LoopClosureConfig(kappa=EulerPose.zero())
        session = init_session(KalmanConfig(), EulerPose(1, 0, 0), 0.0, HOPENET, loop_closure=lc)
        assert session.state.pose == EulerPose(1, 0, 0)
        assert session.state.velocity == (0.0, 0.0, 0.0)
        assert session.loop_closure_origin == EulerPose.zero()

    def test_initial_covariance_exact(self):
        config = KalmanConfig(initial_covariance_p0=(1, 2, 3, 4, 5, 6))
        session = init_session(config, EulerPose.zero(), 0.0, HOPENET)
        assert np.array_equal(session.covariance.matrix, np.diag([1.0, 2, 3, 4, 5, 6]))

    def test_rejects_non_finite_t0(self):
        with pytest.raises(ValueError):
            init_session(KalmanConfig(), EulerPose.zero(), float("nan"), HOPENET)

    def test_config_rejects_non_positive_diagonal(self):
        with pytest.raises(ValueError):
            KalmanConfig(process_noise_q=(0.01, 0.01, 0.0, 0.1, 0.1, 0.1))
        with pytest.raises(ValueError):
            KalmanConfig(fixed_dt=0.0)


class TestPredict:
    """Test the prediction step."""

    def test_pose_advances_by_velocity(self):
        state = StateVector(EulerPose(1, 0, 0), (2.0, 0.0, 0.0))
        prior, _ = propagate(state, CovarianceMatrix.diagonal([1.0] * 6), np.zeros((6, 6)), 0.5)
        assert prior.pose == EulerPose(2, 0, 0)
        assert prior.velocity == (2.0, 0.0, 0.0)

    def test_tiny_dt_adds_q(self):
        config = KalmanConfig()
        session = init_session(config, EulerPose.zero(), 0.0, HOPENET)
        prior, cov = predict(session, 1e-12)
        assert prior.as_array().tolist() == [0.0] * 6
        assert np.allclose(cov.matrix, session.covariance.matrix + config.Q, atol=1e-9)

    def test_identity_block_form(self):
        _, cov = propagate(StateVector(EulerPose.zero()), CovarianceMatrix(np.eye(6)), np.zeros((6, 6)), 1.0)
        assert np.allclose(cov.matrix[:3, :3], 2 * np.eye(3))
        assert np.allclose(cov.matrix[:3, 3:], np.eye(3))
        assert np.allclose(cov.matrix[3:, 3:], np.eye(3))

    @pytest.mark.parametrize("dt", [0.0, -0.1, float("nan"), float("inf")])
    def test_rejects_bad_dt(self, dt):
        with pytest.raises(ValueError):
            propagate(StateVector(EulerPose.zero()), CovarianceMatrix(np.eye(6)), np.zeros((6, 6)), dt)

    def test_transition_matrix(self):
        F = transition_matrix(0.25)
        assert F[0, 3] == F[1, 4] == F[2, 5] == 0.25
        assert np.array_equal(np.diag(F), np.ones(6))


class TestUpdate:
    """Test the measurement update."""

    def setup_method(self):
        self.prior = StateVector(EulerPose(1.0, 2.0, 3.0), (0.5, -0.5, 0.25))
        self.cov = CovarianceMatrix(np.eye(6))

    def test_zero_innovation_moves_nothing(self):
        posterior, _ = update(self.prior, self.cov, self.prior.pose, np.eye(3))
        assert posterior == self.prior

    def test_identity_hand_evaluation(self):
        z = EulerPose(2.0, 3.0, 4.0)
        posterior, cov = update(self.prior, self.cov, z, np.eye(3))
        assert posterior.pose.as_tuple() == pytest.approx((1.5, 2.5, 3.5))
        assert posterior.velocity == pytest.approx((0.5, -0.5, 0.25))
        K = kalman_gain(self.cov, np.eye(3))
        assert np.allclose(K[:3, :], 0.5 * np.eye(3))
        assert np.allclose(cov.matrix[:3, :3], 0.5 * np.eye(3))

    def test_huge_r_vanishing_gain(self):
        z = EulerPose(50.0, -40.0, 30.0)
        posterior, _ = update(self.prior, self.cov, z, 1e12 * np.eye(3))
        assert posterior.as_array() == pytest.approx(self.prior.as_array(), rel=1e-6)

    def test_joseph_form_matches_standard(self):
        z = EulerPose(3.0, -1.0, 0.0)
        R = np.diag([2.0, 5.0, 0.7])
        a_state, a_cov = update(self.prior, self.cov, z, R)
        b_state, b_cov = update(self.prior, self.cov, z, R, joseph_form=True)
        assert np.allclose(a_state.as_array(), b_state.as_array(), atol=1e-12)
        assert np.allclose(a_cov.matrix, b_cov.matrix, atol=1e-12)

    def test_singular_innovation_covariance(self):
        cov = CovarianceMatrix(np.zeros((6, 6)))
        with pytest.raises(DegradedCovarianceError):
            update(self.prior, cov, EulerPose.zero(), np.diag([1e-13, 1.0, 1.0]))

    def test_rejects_non_positive_r(self):
        with pytest.raises(ValueError):
            update(self.prior, self.cov, EulerPose.zero(), np.diag([1.0, 0.0, 1.0]))

    def test_monotone_gain(self):
        rng = np.random.default_rng(7)
        A = rng.normal(size=(6, 6))
        cov = CovarianceMatrix.symmetrized(A @ A.T + 0.5 * np.eye(6))
        for axis in range(3):
            gains = []
            for r in (0.5, 1.0, 2.0, 8.0, 50.0, 400.0):
                R = np.eye(3)
                R[axis, axis] = r
                gains.append(kalman_gain(cov, R)[axis, axis])
            assert all(b < a for a, b in zip(gains, gains[1:]))


class TestStep:
    """Test the per-frame orchestration."""

    def test_constant_stream_converges(self):
        session = init_session(KalmanConfig(), EulerPose(10, 10, 10), 0.0, HOPENET)
        for k in range(1, 200):
            state = session.step(FrameRecord(k / 30.0, EulerPose(10, 10, 10)))
        assert state.pose.as_tuple() == pytest.approx((10, 10, 10), abs=0.5)

    def test_step_response_converges(self):
        session = init_session(KalmanConfig(), EulerPose.zero(), 0.0, constant_profile(1.0))
        for k in range(1, 200):
            state = session.step(FrameRecord(k / 30.0, EulerPose(10, 10, 10)))
        assert state.pose.as_tuple() == pytest.approx((10, 10, 10), abs=0.5)

    def test_timestamp_regression_rejected(self):
        session = init_session(KalmanConfig(), EulerPose.zero(), 1.0, HOPENET)
        session.step(FrameRecord(1.1, EulerPose(1, 1, 1)))
        state, cov, steps = session.state, session.covariance, session.steps
        for t in (1.1, 1.05):
            with pytest.raises(OrderingError):
                session.step(FrameRecord(t, EulerPose(5, 5, 5)))
        assert session.state == state
        assert session.covariance is cov
        assert session.steps == steps
        assert session.last_timestamp == 1.1

    def test_fixed_dt_ignores_timestamps(self):
        config = KalmanConfig(dt_mode=DtMode.FIXED, fixed_dt=0.5)
        session = init_session(config, EulerPose.zero(), 0.0, HOPENET)
        session.step(FrameRecord(0.0, EulerPose(1, 1, 1)))
        assert session.steps == 1

    def test_loop_closure_fixed_point(self):
        kappa = EulerPose(1.5, -2.0, 0.5)
        lc = LoopClosureConfig(kappa=kappa)
        session = init_session(KalmanConfig(), kappa, 0.0, HOPENET, loop_closure=lc)
        for k in range(1, 50):
            state = session.step(FrameRecord(k / 30.0, kappa))
            assert state.pose == kappa
            assert state.velocity == (0.0, 0.0, 0.0)

    def test_origin_calibrated_from_first_frames(self):
        lc = LoopClosureConfig(xi=0.5, theta=10.0, norm_mode=NormMode.PER_AXIS)
        session = init_session(
            KalmanConfig(), EulerPose(1, 1, 1), 0.0, HOPENET, loop_closure=lc, calibration_frames=3
        )
        assert session.loop_closure is None
        session.step(FrameRecord(0.1, EulerPose(2, 2, 2)))
        assert session.loop_closure is None
        session.step(FrameRecord(0.2, EulerPose(3, 3, 3)))
        assert session.loop_closure_origin == EulerPose(2, 2, 2)
        assert session.loop_closure.xi == 0.5
        assert session.loop_closure.norm_mode is NormMode.PER_AXIS

    def test_degraded_covariance_flags_session(self):
        tiny = NoiseModel(**{"lambda": 0.0, "mu": 0.0, "sigma": 1.0, "tau": 1e-13, "r_min": 1e-14})
        unit = NoiseModel(**{"lambda": 0.0, "mu": 0.0, "sigma": 1.0, "tau": 1.0})
        profile = EstimatorProfile(name="bad", pitch=tiny, yaw=unit, roll=unit)
        config = KalmanConfig(process_noise_q=(1e-20,) * 6, initial_covariance_p0=(1e-20,) * 6)
        session = init_session(config, EulerPose.zero(), 0.0, profile)
        with pytest.raises(DegradedCovarianceError):
            session.step(FrameRecord(0.1, EulerPose(1, 1, 1)))
        assert session.needs_reinit
        assert session.steps == 0
        with pytest.raises(DegradedCovarianceError):
            session.step(FrameRecord(0.2, EulerPose(1, 1, 1)))


class TestCovarianceHealth:
    """Test symmetry and PSD over long randomized streams."""

    @pytest.mark.parametrize("joseph_form", [False, True])
    def test_symmetric_psd_over_10000_steps(self, joseph_form):
        rng = np.random.default_rng(2024)
        config = KalmanConfig(joseph_form=joseph_form)
        frames = random_frames(rng, 10_000)
        session = init_session(config, frames[0].pose, 0.0, HOPENET)
        for frame in frames:
            session.step(frame)
            cov = session.covariance
            assert cov.asymmetry() < 1e-9
            assert cov.min_eigenvalue() >= -1e-9


class TestReferenceFilters:
    """Test agreement with independently implemented filters."""

    def test_matches_filterpy(self):
        rng = np.random.default_rng(11)
        dt = 1.0 / 30.0
        config = KalmanConfig(dt_mode=DtMode.FIXED, fixed_dt=dt, joseph_form=True)
        first = EulerPose(*rng.uniform(-20, 20, 3))
        session = init_session(config, first, 0.0, HOPENET)

        kf = KalmanFilter(dim_x=6, dim_z=3)
        kf.x = session.state.as_array().reshape(6, 1)
        kf.P = config.P0.copy()
        kf.F = transition_matrix(dt)
        kf.H = np.hstack([np.eye(3), np.zeros((3, 3))])
        kf.Q = config.Q.copy()

        for k in range(1, 300):
            z = EulerPose(*rng.uniform(-40, 40, 3))
            state = session.step(FrameRecord(k * dt, z))
            kf.predict()
            kf.update(z.as_array(), R=build_R(HOPENET, z))
            assert np.allclose(state.as_array(), kf.x.ravel(), rtol=1e-9, atol=1e-9)
            assert np.allclose(session.covariance.matrix, kf.P, rtol=1e-9, atol=1e-9)

    def test_decouples_into_per_axis_filters(self):
        rng = np.random.default_rng(5)
        config = KalmanConfig(process_noise_q=(0.02, 0.01, 0.03, 0.2, 0.1, 0.05))
        frames = random_frames(rng, 500)
        session = init_session(config, frames[0].pose, frames[0].timestamp, HOPENET)

        q = config.process_noise_q
        p0 = config.initial_covariance_p0
        axes = []
        for i in range(3):
            axes.append(
                {
                    "x": np.array([frames[0].pose.as_tuple()[i], 0.0]),
                    "P": np.diag([p0[i], p0[i + 3]]),
                    "Q": np.diag([q[i], q[i + 3]]),
                }
            )

        last = frames[0].timestamp
        for frame in frames[1:]:
            dt = frame.timestamp - last
            last = frame.timestamp
            R = build_R(HOPENET, frame.pose)
            state = session.step(frame)
            F = np.array([[1.0, dt], [0.0, 1.0]])
            for i, f in enumerate(axes):
                x = F @ f["x"]
                P = F @ f["P"] @ F.T + f["Q"]
                P = 0.5 * (P + P.T)
                S = P[0, 0] + R[i, i]
                K = P[:, 0] / S
                x = x + K * (frame.pose.as_tuple()[i] - x[0])
                P = P - np.outer(K, P[0, :])
                f["x"], f["P"] = x, 0.5 * (P + P.T)

            full = state.as_array()
            for i in range(3):
                assert full[i] == pytest.approx(axes[i]["x"][0], abs=1e-9)
                assert full[i + 3] == pytest.approx(axes[i]["x"][1], abs=1e-9)
            cov = session.covariance.matrix
            for i in range(3):
                block = cov[np.ix_([i, i + 3], [i, i + 3])]
                assert np.allclose(block, axes[i]["P"], atol=1e-9)
            off = cov.copy()
            for i in range(3):
                off[np.ix_([i, i + 3], [i, i + 3])] = 0.0
            assert np.max(np.abs(off)) < 1e-9
        assert AXES == ("pitch", "yaw", "roll")
