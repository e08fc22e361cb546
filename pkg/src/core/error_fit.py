"""
Estimator Error Characterization

Turns (true, predicted) pose pairs into noise-profile parameters:

1. compute_errors - wrap-aware absolute error per axis
2. bin_errors     - mean absolute error per angle interval (by TRUE angle)
3. fit_gauss1d    - offset-Gaussian fit  f(x) = tau - lambda*phi_{mu,sigma}(x)
4. fit_gauss2d    - two-variable surface E(x, y) over an axis pair
5. export_profile - fits -> EstimatorProfile with provenance

Fitting uses damped least squares (scipy trust-region reflective) over
the location/width parameters only; amplitude and offset enter the model
linearly and are solved exactly at every evaluation. Five starting points
are tried and the lowest residual wins, ties going to the earliest start.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares

from .adaptive_noise import DEFAULT_R_MAX, DEFAULT_R_MIN, SQRT_2PI, EstimatorProfile, NoiseModel
from .pose import AXES, EulerPose, angle_difference


logger = logging.getLogger(__name__)

DEFAULT_BIN_WIDTH = 10.0
DEFAULT_RANGE = (-90.0, 90.0)

XTOL = 1e-8
MAX_EVALUATIONS = 500
DEGENERATE_RATIO = 1e-3
# Widths beyond this multiple of the data half-range are not identifiable
MAX_WIDTH_FACTOR = 10.0
N_STARTS = 5


@dataclass(frozen=True)
class ErrorSample:
    """One (truth, prediction) pair and its absolute per-axis error."""

    true_pose: EulerPose
    predicted_pose: EulerPose
    error: Tuple[float, float, float] = field(init=False)

    def __post_init__(self):
        errors = tuple(
            abs(angle_difference(self.predicted_pose.component(axis), self.true_pose.component(axis)))
            for axis in AXES
        )
        object.__setattr__(self, "error", errors)

    def axis_error(self, axis: str) -> float:
        return self.error[AXES.index(axis)]


@dataclass(frozen=True)
class BinnedErrors:
    """Uniform angle bins with per-bin mean absolute error."""

    axis: str
    edges: np.ndarray
    means: Tuple[Optional[float], ...]
    counts: np.ndarray
    dropped: int = 0

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def points(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(centers, means, counts) of the non-empty bins."""
        mask = self.counts > 0
        means = np.array([m for m in self.means if m is not None], dtype=float)
        return self.centers[mask], means, self.counts[mask].astype(float)

    def to_table(self) -> List[Dict[str, Any]]:
        return [
            {"lo": float(lo), "hi": float(hi), "count": int(n), "mean_error": mean}
            for lo, hi, n, mean in zip(self.edges[:-1], self.edges[1:], self.counts, self.means)
        ]


@dataclass(frozen=True)
class FitResult:
    """Offset-Gaussian parameters for one axis plus fit diagnostics."""

    lambda_: float
    mu: float
    sigma: float
    tau: float
    residual_rms: float
    iterations: int
    converged: bool
    degenerate: bool = False
    n_points: int = 0
    axis: Optional[str] = None

    @property
    def amplitude(self) -> float:
        """lambda * peak density: depth of the dip below tau."""
        return self.lambda_ / (SQRT_2PI * self.sigma)

    def curve(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.tau - self.amplitude * np.exp(-((x - self.mu) ** 2) / (2.0 * self.sigma**2))

    def to_noise_model(self, r_min: float = DEFAULT_R_MIN, r_max: float = DEFAULT_R_MAX) -> NoiseModel:
        return NoiseModel(
            lambda_=self.lambda_, mu=self.mu, sigma=self.sigma, tau=self.tau,
            r_min=r_min, r_max=r_max,
        )

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["lambda"] = data.pop("lambda_")
        return data


@dataclass(frozen=True)
class SurfaceFitResult:
    """Two-variable offset-Gaussian parameters over an axis pair."""

    lambda_: float
    mu_x: float
    mu_y: float
    sigma_x: float
    sigma_y: float
    tau: float
    residual_rms: float
    iterations: int
    converged: bool
    degenerate: bool = False
    n_points: int = 0
    x_axis: Optional[str] = None
    y_axis: Optional[str] = None

    @property
    def amplitude(self) -> float:
        return self.lambda_ / (2.0 * math.pi * self.sigma_x * self.sigma_y)

    def surface(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return self.tau - self.amplitude * np.exp(
            -((x - self.mu_x) ** 2) / (2.0 * self.sigma_x**2)
            - ((y - self.mu_y) ** 2) / (2.0 * self.sigma_y**2)
        )

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["lambda"] = data.pop("lambda_")
        return data


def compute_errors(pairs: Iterable[Tuple[EulerPose, EulerPose]]) -> List[ErrorSample]:
    """Absolute per-axis error for each (true, predicted) pair."""
    samples = [
        ErrorSample(true_pose.normalized(), predicted.normalized())
        for true_pose, predicted in pairs
    ]
    if not samples:
        raise ValueError("error computation needs at least one (true, predicted) pair")
    return samples


def bin_errors(
    samples: Sequence[ErrorSample],
    axis: str,
    bin_width: float = DEFAULT_BIN_WIDTH,
    range: Tuple[float, float] = DEFAULT_RANGE,
) -> BinnedErrors:
    """
    Mean absolute error per [lo + i*w, lo + (i+1)*w) interval of the true
    angle. When w does not divide the range the last bin is narrower.
    """
    lo, hi = float(range[0]), float(range[1])
    if not bin_width > 0:
        raise ValueError(f"bin width must be > 0, got {bin_width!r}")
    if not lo < hi:
        raise ValueError(f"range must satisfy lo < hi, got {range!r}")
    if axis not in AXES:
        raise ValueError(f"unknown axis {axis!r}")

    n_bins = max(1, int(math.ceil((hi - lo) / bin_width - 1e-9)))
    edges = lo + bin_width * np.arange(n_bins + 1, dtype=float)
    # a partial last bin ends at hi
    edges[-1] = hi
    sums = np.zeros(n_bins)
    counts = np.zeros(n_bins, dtype=int)
    dropped = 0
    for sample in samples:
        angle = sample.true_pose.component(axis)
        if not lo <= angle < hi:
            dropped += 1
            continue
        index = min(int(math.floor((angle - lo) / bin_width)), n_bins - 1)
        sums[index] += sample.axis_error(axis)
        counts[index] += 1

    if dropped:
        logger.warning("%s: %d sample(s) outside [%s, %s) dropped", axis, dropped, lo, hi)
    means = tuple(float(s / n) if n > 0 else None for s, n in zip(sums, counts))
    return BinnedErrors(axis=axis, edges=edges, means=means, counts=counts, dropped=dropped)


# -- fitting core -----------------------------------------------------------


def _solve_linear(basis: np.ndarray, y: np.ndarray, sqrt_w: np.ndarray) -> Tuple[float, float]:
    """Weighted least-squares (A, tau) for y ~ tau - A * basis."""
    design = np.column_stack([-basis, np.ones_like(basis)]) * sqrt_w[:, None]
    coef, *_ = np.linalg.lstsq(design, y * sqrt_w, rcond=None)
    return float(coef[0]), float(coef[1])


@dataclass
class _Candidate:
    index: int
    theta: np.ndarray
    cost: float
    nfev: int
    converged: bool


def _run_starts(residuals, starts: List[np.ndarray], bounds, workers: int) -> _Candidate:
    def run(item):
        index, x0 = item
        result = least_squares(
            residuals, x0, jac="3-point", bounds=bounds, method="trf",
            x_scale="jac", xtol=XTOL, ftol=1e-14, gtol=1e-14, max_nfev=MAX_EVALUATIONS,
        )
        return _Candidate(index, result.x, float(result.cost), int(result.nfev), result.status > 0)

    items = list(enumerate(starts))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            candidates = list(pool.map(run, items))
    else:
        candidates = [run(item) for item in items]
    return min(candidates, key=lambda c: (c.cost, c.index))


def _gaussian_basis_1d(x: np.ndarray, mu: float, sigma: float) -> np.ndarray:
    return np.exp(-((x - mu) ** 2) / (2.0 * sigma**2))


def initial_guess(bins: BinnedErrors) -> Dict[str, float]:
    """
    Starting parameters from the bin table: mu at the lowest bin, tau at
    the highest bin mean, sigma half the data range, lambda from the gap.
    """
    x, y, _ = bins.points()
    if len(x) == 0:
        raise ValueError("no populated bins")
    mu = float(x[np.argmin(y)])
    tau = float(np.max(y))
    sigma = max(float(np.max(x) - np.min(x)) / 2.0, 1e-6)
    amplitude = tau - float(np.min(y))
    return {"lambda": amplitude * SQRT_2PI * sigma, "mu": mu, "sigma": sigma, "tau": tau}


def _fit_points(
    x: np.ndarray,
    y: np.ndarray,
    weights: np.ndarray,
    guess: Mapping[str, float],
    axis: Optional[str],
    workers: int,
) -> FitResult:
    if len(x) < 4:
        raise ValueError(f"fit needs at least 4 points for 4 parameters, got {len(x)}")
    sqrt_w = np.sqrt(weights)
    half_range = max(float(np.max(x) - np.min(x)) / 2.0, 1e-6)
    sigma_hi = MAX_WIDTH_FACTOR * half_range
    sigma_lo = 1e-6 * half_range

    def residuals(theta):
        basis = _gaussian_basis_1d(x, theta[0], theta[1])
        amplitude, tau = _solve_linear(basis, y, sqrt_w)
        return sqrt_w * (tau - amplitude * basis - y)

    mu0 = float(guess["mu"])
    sigma0 = float(np.clip(guess["sigma"], sigma_lo * 10, sigma_hi * 0.999))
    starts = [
        np.array([mu0, sigma0]),
        np.array([mu0, max(0.5 * sigma0, sigma_lo * 10)]),
        np.array([mu0, min(2.0 * sigma0, sigma_hi * 0.999)]),
        np.array([mu0 - 0.25 * sigma0, sigma0]),
        np.array([mu0 + 0.25 * sigma0, sigma0]),
    ][:N_STARTS]

    best = _run_starts(residuals, starts, ([-np.inf, sigma_lo], [np.inf, sigma_hi]), workers)
    mu, sigma = float(best.theta[0]), float(best.theta[1])
    basis = _gaussian_basis_1d(x, mu, sigma)
    amplitude, tau = _solve_linear(basis, y, sqrt_w)
    lam = amplitude * SQRT_2PI * sigma

    # never report something worse than the starting curve
    guess_amplitude = float(guess["lambda"]) / (SQRT_2PI * float(guess["sigma"]))
    guess_resid = float(guess["tau"]) - guess_amplitude * _gaussian_basis_1d(x, mu0, float(guess["sigma"])) - y
    fit_resid = tau - amplitude * basis - y
    converged = best.converged
    if np.sum(weights * fit_resid**2) > np.sum(weights * guess_resid**2):
        lam, mu, sigma, tau = (float(guess[k]) for k in ("lambda", "mu", "sigma", "tau"))
        fit_resid = guess_resid
        converged = False

    residual_rms = float(np.sqrt(np.sum(weights * fit_resid**2) / np.sum(weights)))
    degenerate = abs(lam) / (SQRT_2PI * sigma) <= DEGENERATE_RATIO * abs(tau)
    result = FitResult(
        lambda_=lam, mu=mu, sigma=sigma, tau=tau, residual_rms=residual_rms,
        iterations=best.nfev, converged=converged, degenerate=degenerate,
        n_points=len(x), axis=axis,
    )
    if degenerate:
        logger.warning(
            "%s fit is degenerate (amplitude %.3g vs offset %.3g); behaves as constant noise",
            axis or "curve", result.amplitude, tau,
        )
    if not converged:
        logger.warning("%s fit did not converge after %d evaluations", axis or "curve", best.nfev)
    return result


def _guess_dict(initial_guess_value) -> Optional[Dict[str, float]]:
    if initial_guess_value is None:
        return None
    if isinstance(initial_guess_value, FitResult):
        return {
            "lambda": initial_guess_value.lambda_, "mu": initial_guess_value.mu,
            "sigma": initial_guess_value.sigma, "tau": initial_guess_value.tau,
        }
    guess = dict(initial_guess_value)
    if "lambda_" in guess:
        guess["lambda"] = guess.pop("lambda_")
    return guess


def fit_gauss1d(
    bins: BinnedErrors,
    initial_guess_value: Optional[Mapping[str, float]] = None,
    workers: int = 1,
) -> FitResult:
    """Count-weighted offset-Gaussian fit to the bin means."""
    x, y, counts = bins.points()
    if len(x) < 4:
        raise ValueError(f"fit needs at least 4 non-empty bins, got {len(x)}")
    guess = _guess_dict(initial_guess_value) or initial_guess(bins)
    return _fit_points(x, y, counts, guess, bins.axis, workers)


def fit_gauss1d_raw(
    samples: Sequence[ErrorSample],
    axis: str,
    initial_guess_value: Optional[Mapping[str, float]] = None,
    workers: int = 1,
) -> FitResult:
    """Unbinned fit: every sample is one point of unit weight."""
    x = np.array([s.true_pose.component(axis) for s in samples], dtype=float)
    y = np.array([s.axis_error(axis) for s in samples], dtype=float)
    if len(x) < 4:
        raise ValueError(f"fit needs at least 4 samples, got {len(x)}")
    guess = _guess_dict(initial_guess_value)
    if guess is None:
        sigma = max(float(np.max(x) - np.min(x)) / 2.0, 1e-6)
        tau = float(np.max(y))
        guess = {
            "lambda": (tau - float(np.min(y))) * SQRT_2PI * sigma,
            "mu": float(x[np.argmin(y)]),
            "sigma": sigma,
            "tau": tau,
        }
    return _fit_points(x, y, np.ones_like(x), guess, axis, workers)


def surface_points(
    samples: Sequence[ErrorSample], x_axis: str, y_axis: str, error_axis: Optional[str] = None
) -> List[Tuple[float, float, float]]:
    """
    (x, y, error) triples over an axis pair. The error is the mean of the
    pair's absolute errors unless `error_axis` picks one.
    """
    if x_axis == y_axis:
        raise ValueError("surface axes must differ")
    points = []
    for sample in samples:
        if error_axis is None:
            error = 0.5 * (sample.axis_error(x_axis) + sample.axis_error(y_axis))
        else:
            error = sample.axis_error(error_axis)
        points.append(
            (sample.true_pose.component(x_axis), sample.true_pose.component(y_axis), error)
        )
    return points


def fit_gauss2d(
    samples: Sequence[Tuple[float, float, float]],
    workers: int = 1,
    x_axis: Optional[str] = None,
    y_axis: Optional[str] = None,
) -> SurfaceFitResult:
    """
    Fit E(x, y) = tau - lambda/(2 pi sx sy) exp(-(x-mx)^2/2sx^2 - (y-my)^2/2sy^2).

    lambda is signed: a negative value models an error peak.
    """
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 3:
        raise ValueError("surface samples must be (x, y, error) triples")
    if len(data) < 7:
        raise ValueError(f"surface fit needs at least 7 samples, got {len(data)}")
    if not np.all(np.isfinite(data)):
        raise ValueError("surface samples must be finite")
    x, y, z = data[:, 0], data[:, 1], data[:, 2]
    sqrt_w = np.ones_like(z)

    half_x = max(float(np.ptp(x)) / 2.0, 1e-6)
    half_y = max(float(np.ptp(y)) / 2.0, 1e-6)

    def basis_of(theta):
        mx, my, sx, sy = theta
        return np.exp(-((x - mx) ** 2) / (2.0 * sx**2) - ((y - my) ** 2) / (2.0 * sy**2))

    def residuals(theta):
        basis = basis_of(theta)
        amplitude, tau = _solve_linear(basis, z, sqrt_w)
        return tau - amplitude * basis - z

    median = float(np.median(z))
    extreme = int(np.argmin(z)) if median - z.min() >= z.max() - median else int(np.argmax(z))
    mx0, my0 = float(x[extreme]), float(y[extreme])
    starts = [
        np.array([mx0, my0, half_x, half_y]),
        np.array([mx0, my0, 0.5 * half_x, 0.5 * half_y]),
        np.array([mx0, my0, 2.0 * half_x, 2.0 * half_y]),
        np.array([mx0 - 0.25 * half_x, my0 - 0.25 * half_y, half_x, half_y]),
        np.array([mx0 + 0.25 * half_x, my0 + 0.25 * half_y, half_x, half_y]),
    ][:N_STARTS]
    lower = [-np.inf, -np.inf, 1e-6 * half_x, 1e-6 * half_y]
    upper = [np.inf, np.inf, MAX_WIDTH_FACTOR * half_x, MAX_WIDTH_FACTOR * half_y]

    best = _run_starts(residuals, starts, (lower, upper), workers)
    mx, my, sx, sy = (float(v) for v in best.theta)
    basis = basis_of(best.theta)
    amplitude, tau = _solve_linear(basis, z, sqrt_w)
    resid = tau - amplitude * basis - z
    degenerate = abs(amplitude) <= DEGENERATE_RATIO * abs(tau)
    return SurfaceFitResult(
        lambda_=amplitude * 2.0 * math.pi * sx * sy,
        mu_x=mx, mu_y=my, sigma_x=sx, sigma_y=sy, tau=tau,
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        iterations=best.nfev, converged=best.converged, degenerate=degenerate,
        n_points=len(z), x_axis=x_axis, y_axis=y_axis,
    )


def export_profile(
    fits: Mapping[str, FitResult],
    name: str,
    r_min: float = DEFAULT_R_MIN,
    r_max: float = DEFAULT_R_MAX,
    sample_count: Optional[int] = None,
    base: Optional[EstimatorProfile] = None,
) -> EstimatorProfile:
    """
    Assemble a noise profile from per-axis fits.

    Axes without a fit are copied from `base`; without a base all three
    fits are required.
    """
    missing = [axis for axis in AXES if axis not in fits]
    if missing and base is None:
        raise ValueError(f"profile export is missing fit(s) for: {', '.join(missing)}")
    unusable = [axis for axis, fit in fits.items() if not (fit.converged or fit.degenerate)]
    if unusable:
        raise ValueError(f"fit(s) neither converged nor degenerate: {', '.join(unusable)}")

    provenance: Dict[str, Any] = {}
    axes: Dict[str, NoiseModel] = {}
    for axis in AXES:
        if axis in fits:
            fit = fits[axis]
            axes[axis] = fit.to_noise_model(r_min, r_max)
            provenance[axis] = {
                "residual_rms": fit.residual_rms,
                "iterations": fit.iterations,
                "converged": fit.converged,
                "degenerate": fit.degenerate,
                "points": fit.n_points,
            }
        else:
            axes[axis] = base.axis(axis)
            provenance[axis] = {"inherited_from": base.name}
    if sample_count is not None:
        provenance["sample_count"] = int(sample_count)
    return EstimatorProfile(name=name, metadata={"provenance": provenance}, **axes)


def fit_report(
    fits: Mapping[str, FitResult],
    bins: Mapping[str, BinnedErrors],
    surface: Optional[SurfaceFitResult] = None,
) -> Dict[str, Any]:
    """JSON-ready report: parameters, residuals and bin tables."""
    report: Dict[str, Any] = {
        "axes": {
            axis: {
                "fit": fit.to_dict(),
                "bins": bins[axis].to_table() if axis in bins else [],
                "dropped": bins[axis].dropped if axis in bins else 0,
            }
            for axis, fit in fits.items()
        }
    }
    if surface is not None:
        report["surface"] = surface.to_dict()
    return report
