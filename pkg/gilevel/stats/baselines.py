"""Comparison models for the GIW filter.

- `kalman_run`: the exact Kalman filter with known `Sigma` and `Omega`.
- `iw_filter` / `iw_fit`: the conjugate inverted Wishart filter with
  `Omega = w Sigma`, `w` chosen by maximum likelihood.
- `em_fit`: offline EM estimates of unrestricted `Sigma` and `Omega`.
"""

import dataclasses
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize
from scipy.linalg import solve_triangular

from gilevel.core import utils
from gilevel.errors import EstimationError, ParameterError, SingularityError
from gilevel.stats import matrix
from gilevel.stats.filter import (
    FilterOutput,
    FilterState,
    ForecastRecord,
    check_series,
    standardize,
    student_log_density,
)
from gilevel.stats.hyperparam import loglik_closed
from gilevel.stats.steady_state import SteadyState

LOG_2PI = math.log(2 * math.pi)
# Prior variance scale of the initial level.
DIFFUSE = 1000.0
# Floor for EM M-step eigenvalues.
EM_PD_FLOOR = 1e-8


def _pd(M, name: str) -> np.ndarray:
    M = matrix.symmetrize(np.atleast_2d(np.asarray(M, dtype=float)))
    try:
        matrix.chol_upper(M)
    except SingularityError:
        raise ParameterError(f"'{name}' must be positive definite.") from None
    return M


def gaussian_log_density(e: np.ndarray, F: np.ndarray) -> float:
    U = matrix.chol_upper(F)
    z = solve_triangular(U, e, trans="T")
    return float(
        -0.5 * (len(e) * LOG_2PI + z @ z) - np.sum(np.log(np.diag(U)))
    )


@dataclasses.dataclass(frozen=True)
class KalmanState:
    t: int
    m: np.ndarray
    C: np.ndarray


@dataclasses.dataclass(frozen=True)
class KalmanPass:
    """Everything a forward pass produces, indexed by `t = 1..N` as rows
    `0..N-1`."""

    filtered_means: np.ndarray
    filtered_covs: np.ndarray
    predicted_means: np.ndarray
    predicted_covs: np.ndarray
    forecast_covs: np.ndarray
    errors: np.ndarray
    loglik: float
    m0: np.ndarray
    C0: np.ndarray


def _initial(p, m0, C0) -> Tuple[np.ndarray, np.ndarray]:
    m0 = np.zeros(p) if m0 is None else np.asarray(m0, dtype=float)
    C0 = DIFFUSE * np.eye(p) if C0 is None else np.asarray(C0, dtype=float)
    return m0, C0


def kalman_pass(data, sigma, omega, phi=1.0, m0=None, C0=None) -> KalmanPass:
    """`R_t = phi^2 C_{t-1} + Omega`, `F_t = R_t + Sigma`, `K_t = R_t F_t^{-1}`,
    `m_t = phi m_{t-1} + K_t e_t`, `C_t = R_t - K_t R_t`."""
    data = check_series(data)
    N, p = data.shape
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    omega = np.atleast_2d(np.asarray(omega, dtype=float))
    m, C = _initial(p, m0, C0)
    m_init, C_init = m, C

    out = {
        name: np.empty((N, p, p))
        for name in ("filtered_covs", "predicted_covs", "forecast_covs")
    }
    filtered_means = np.empty((N, p))
    predicted_means = np.empty((N, p))
    errors = np.empty((N, p))
    loglik = 0.0
    for t, y in enumerate(data):
        a = phi * m
        R = matrix.symmetrize(phi**2 * C + omega)
        F = matrix.symmetrize(R + sigma)
        e = y - a
        try:
            loglik += gaussian_log_density(e, F)
        except SingularityError as err:
            raise SingularityError(
                f"Forecast covariance is singular at t={t + 1}.", pivot=err.pivot
            ) from None
        K = np.linalg.solve(F, R).T
        m = a + K @ e
        C = matrix.symmetrize(R - K @ R)

        predicted_means[t], out["predicted_covs"][t] = a, R
        out["forecast_covs"][t] = F
        filtered_means[t], out["filtered_covs"][t] = m, C
        errors[t] = e

    return KalmanPass(
        filtered_means=filtered_means,
        predicted_means=predicted_means,
        errors=errors,
        loglik=loglik,
        m0=m_init,
        C0=C_init,
        **out,
    )


def kalman_run(
    data, sigma, omega, phi: float = 1.0, m0=None, C0=None
) -> FilterOutput:
    """The Kalman filter with known covariances. Errors are standardized by the
    forecast covariance `F_t`."""
    sigma = _pd(sigma, "sigma")
    omega = matrix.symmetrize(np.atleast_2d(np.asarray(omega, dtype=float)))
    result = kalman_pass(data, sigma, omega, phi, m0, C0)
    records = []
    for t, (e, a, F) in enumerate(
        zip(result.errors, result.predicted_means, result.forecast_covs)
    ):
        records.append(
            ForecastRecord(
                t=t + 1,
                dof=math.inf,
                location=a,
                spread=F,
                error=e,
                std_error=standardize(e, np.diag(F)),
                log_pred=gaussian_log_density(e, F),
            )
        )
    N = len(records)
    final = KalmanState(
        t=N, m=result.filtered_means[-1], C=result.filtered_covs[-1]
    )
    return FilterOutput.from_records(
        records, final, result.filtered_means, [sigma] * N
    )


@dataclasses.dataclass(frozen=True)
class SmootherOutput:
    """Smoothed moments for `t = 0..N` (row 0 is the initial level).

    `lag_one[t]` is `Cov(theta_t, theta_{t-1} | y^N)`; row 0 is unused.
    """

    means: np.ndarray
    covs: np.ndarray
    lag_one: np.ndarray
    filtered: KalmanPass


def kalman_smoother(
    data, sigma, omega, phi: float = 1.0, m0=None, C0=None
) -> SmootherOutput:
    """Fixed-interval (Rauch-Tung-Striebel) smoother."""
    kp = kalman_pass(data, sigma, omega, phi, m0, C0)
    N, p = kp.filtered_means.shape

    # Filtered moments for t = 0..N, with t = 0 the prior.
    f_means = np.vstack([kp.m0[None, :], kp.filtered_means])
    f_covs = np.concatenate([kp.C0[None], kp.filtered_covs])

    means = np.empty((N + 1, p))
    covs = np.empty((N + 1, p, p))
    lag_one = np.zeros((N + 1, p, p))
    means[N], covs[N] = f_means[N], f_covs[N]
    for t in range(N - 1, -1, -1):
        R_next = kp.predicted_covs[t]
        J = phi * np.linalg.solve(R_next, f_covs[t]).T
        means[t] = f_means[t] + J @ (means[t + 1] - kp.predicted_means[t])
        covs[t] = matrix.symmetrize(f_covs[t] + J @ (covs[t + 1] - R_next) @ J.T)
        lag_one[t + 1] = covs[t + 1] @ J.T
    return SmootherOutput(means=means, covs=covs, lag_one=lag_one, filtered=kp)


@dataclasses.dataclass(frozen=True)
class EmResult:
    sigma_hat: np.ndarray
    omega_hat: np.ndarray
    loglik_trace: List[float]
    iterations: int
    converged: bool
    repaired: bool = False


def em_initial(data) -> Tuple[np.ndarray, np.ndarray]:
    """Half the sample covariance of the first differences, for both `Sigma`
    and `Omega`."""
    data = check_series(data)
    d = np.diff(data, axis=0)
    if len(d) < 2:
        return np.eye(data.shape[1]), np.eye(data.shape[1])
    start = np.atleast_2d(np.cov(d, rowvar=False)) / 2
    start = matrix.nearest_pd(start, EM_PD_FLOOR)
    return start, start.copy()


def _repair(M: np.ndarray, name: str, iteration: int) -> Tuple[np.ndarray, bool]:
    M = matrix.symmetrize(M)
    if matrix.is_pd(M) and np.linalg.eigvalsh(M)[0] >= EM_PD_FLOOR:
        return M, False
    utils.warn(
        f"EM M-step produced a {name} that is not positive definite at iteration "
        f"{iteration}; repairing it."
    )
    return matrix.nearest_pd(M, EM_PD_FLOOR), True


def em_fit(
    data,
    phi: float = 1.0,
    tol: float = 1e-3,
    max_iter: int = 500,
    init: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    m0=None,
    C0=None,
) -> EmResult:
    """Shumway-Stoffer EM for `(Sigma, Omega)` with `phi`, `m0` and `C0` held
    fixed. Stops when the log-likelihood changes by less than `tol`."""
    data = check_series(data)
    N, p = data.shape
    if N <= p:
        utils.warn(f"EM with N={N} observations for p={p} is poorly determined.")
    if init is None:
        sigma, omega = em_initial(data)
    else:
        sigma, omega = _pd(init[0], "sigma"), _pd(init[1], "omega")

    trace = []
    converged = False
    repaired = False
    iterations = 0
    while True:
        smooth = kalman_smoother(data, sigma, omega, phi, m0, C0)
        loglik = smooth.filtered.loglik
        if trace and abs(loglik - trace[-1]) < tol:
            trace.append(loglik)
            converged = True
            break
        trace.append(loglik)
        if iterations >= max_iter:
            break
        iterations += 1

        x, V, V_lag = smooth.means, smooth.covs, smooth.lag_one
        S11 = np.sum(V[1:], axis=0) + x[1:].T @ x[1:]
        S00 = np.sum(V[:-1], axis=0) + x[:-1].T @ x[:-1]
        S10 = np.sum(V_lag[1:], axis=0) + x[1:].T @ x[:-1]
        omega = (S11 - phi * (S10 + S10.T) + phi**2 * S00) / N
        resid = data - x[1:]
        sigma = (resid.T @ resid + np.sum(V[1:], axis=0)) / N

        sigma, fixed_sigma = _repair(sigma, "Sigma", iterations)
        omega, fixed_omega = _repair(omega, "Omega", iterations)
        repaired = repaired or fixed_sigma or fixed_omega

    return EmResult(
        sigma_hat=sigma,
        omega_hat=omega,
        loglik_trace=trace,
        iterations=iterations,
        converged=converged,
        repaired=repaired,
    )


def iw_filter(
    data, w: float, phi: float = 1.0, n0: float = 0.01, S0=None, m0=None
) -> FilterOutput:
    """The conjugate filter with `Omega = w Sigma`: a scalar gain `p` and
    `Sigma | y^t ~ IW` with spread `S_t`."""
    if not w > 0:
        raise ParameterError(f"w must be positive; got {w}.")
    data = check_series(data)
    N, p = data.shape
    # Scalar Riccati limit of p_t = (phi^2 p_{t-1} + w) / (phi^2 p_{t-1} + w + 1).
    b = w + 1 - phi**2
    gain = 2 * w / (math.sqrt(b * b + 4 * phi**2 * w) + b)
    q = gain + w + 1
    m = np.zeros(p) if m0 is None else np.asarray(m0, dtype=float)
    S = np.eye(p) if S0 is None else _pd(S0, "S0")
    n = float(n0)

    records = []
    means = np.empty((N, p))
    sigma_path = []
    for t, y in enumerate(data):
        location = phi * m
        e = y - location
        records.append(
            ForecastRecord(
                t=t + 1,
                dof=n,
                location=location,
                spread=S,
                error=e,
                std_error=standardize(e, np.diag(S) / n),
                log_pred=student_log_density(e, n, S),
            )
        )
        S = matrix.symmetrize(S + np.outer(e, e))
        n += 1.0
        m = location + gain * e
        means[t] = m
        sigma_path.append(S / (q * (n + 2 * p)))

    steady = SteadyState(
        P=gain * np.eye(p), Q=q * np.eye(p), phi=float(phi), W=w * np.eye(p)
    )
    final = FilterState(
        t=N, m=m, S=S, n=n, sigma_tilde=sigma_path[-1], steady=steady
    )
    return FilterOutput.from_records(records, final, means, sigma_path)


@dataclasses.dataclass(frozen=True)
class IwFit:
    output: FilterOutput
    w_hat: float
    loglik: float


def _iw_loglik(data, w, phi, n0, S0, m0) -> float:
    output = iw_filter(data, w, phi, n0, S0, m0)
    N, p = data.shape
    S_start = np.eye(p) if S0 is None else np.asarray(S0, dtype=float)
    return loglik_closed(S_start, output.final.S, n0, N, p)


def iw_fit(
    data,
    phi: float = 1.0,
    n0: float = 0.01,
    S0=None,
    m0=None,
    bracket: Sequence[float] = (1e-4, 1e2),
    grid_points: int = 13,
    widenings: int = 2,
) -> IwFit:
    """Maximize the profile log-likelihood over `w` by golden-section search
    on `log w`.

    A coarse grid over `bracket` locates an interior maximum first; when the
    maximum sits on an edge the bracket is widened 100-fold on that side, up to
    `widenings` times.
    """
    data = check_series(data)
    low, high = float(bracket[0]), float(bracket[1])
    if not 0 < low < high:
        raise ParameterError(
            f"The w bracket must be positive and increasing; got {bracket}."
        )

    def neg_loglik(log_w):
        return -_iw_loglik(data, math.exp(log_w), phi, n0, S0, m0)

    for _ in range(widenings + 1):
        grid = np.linspace(math.log(low), math.log(high), grid_points)
        values = np.array([neg_loglik(x) for x in grid])
        i = int(np.argmin(values))
        if 0 < i < grid_points - 1:
            break
        if i == 0:
            low /= 100.0
        else:
            high *= 100.0
    else:
        raise EstimationError(
            f"The likelihood of w is monotone on [{low:g}, {high:g}]; no interior "
            "maximum found."
        )

    result = optimize.minimize_scalar(
        neg_loglik,
        bracket=(grid[i - 1], grid[i], grid[i + 1]),
        method="golden",
        options={"xtol": 1e-8},
    )
    w_hat = math.exp(result.x)
    return IwFit(
        output=iw_filter(data, w_hat, phi, n0, S0, m0),
        w_hat=w_hat,
        loglik=-float(result.fun),
    )
