"""The GIW filter: one-step forecasting and updating of the level and of the
observation covariance.

Given `W`, the steady-state gain `P` and `Q = P + W + I` are fixed, and each
step is

```
e_t = y_t - phi m_{t-1}
S_t = S_{t-1} + e_t e_t'        n_t = n_{t-1} + 1
Sigma~_t = (Q^{-1} S_t + S_t Q^{-1}) / (2 (n_t + 2p))
m_t = phi m_{t-1} + Sigma~_t^{1/2} P Sigma~_t^{-1/2} e_t
```

The one-step forecast is the matrix-variate Student-t `t_p(n_{t-1}, phi
m_{t-1}, S_{t-1})`; with a discount factor `delta` the spread is discounted
instead of accumulated (see `vol_filter_step`).
"""

import dataclasses
import math
from typing import Any, List, Optional, Tuple

import numpy as np
from scipy import stats
from scipy.linalg import solve_triangular
from scipy.special import multigammaln

from gilevel.core import utils
from gilevel.errors import DataError, ShapeError
from gilevel.stats import matrix
from gilevel.stats.giw import ESTIMATORS
from gilevel.stats.hyperparam import NrResult
from gilevel.stats.model import EstimatedW, FixedW, ModelConfig
from gilevel.stats.steady_state import SteadyState, p_step, w_from_p
from gilevel.stats.volatility import VolConstants, vol_constants

LOG_PI = math.log(math.pi)
# Forecast standard deviations below this are treated as missing.
STD_FLOOR = 1e-12


def student_log_density(e: np.ndarray, n: float, S: np.ndarray) -> float:
    """Log density at error `e` of `t_p(n, ., S)`:

    ```
    Gamma_p((n+p)/2) / (pi^{p/2} Gamma_p((n+p-1)/2)) |S|^{-1/2} (1 + e'S^{-1}e)^{-(n+p)/2}
    ```
    """
    e = np.asarray(e, dtype=float)
    p = len(e)
    U = matrix.chol_upper(S)
    z = solve_triangular(U, e, trans="T")
    quad = float(z @ z)
    half_logdet = float(np.sum(np.log(np.diag(U))))
    return (
        multigammaln((n + p) / 2, p)
        - multigammaln((n + p - 1) / 2, p)
        - 0.5 * p * LOG_PI
        - half_logdet
        - 0.5 * (n + p) * math.log1p(quad)
    )


@dataclasses.dataclass(frozen=True)
class FilterState:
    t: int
    m: np.ndarray
    S: np.ndarray
    n: float
    sigma_tilde: np.ndarray
    steady: SteadyState
    estimator: str = "tilde"
    standardization: str = "spread"
    P_t: Optional[np.ndarray] = None

    @property
    def p(self) -> int:
        return len(self.m)

    @property
    def gain(self) -> np.ndarray:
        """`P_t` when the exact gain is propagated, else the steady-state `P`."""
        return self.steady.P if self.P_t is None else self.P_t

    def forecast_covariance(self) -> np.ndarray:
        """`Sigma~^{1/2} Q Sigma~^{1/2}`, the forecast covariance given the
        current estimate of `Sigma`."""
        Z = matrix.sym_sqrt(self.sigma_tilde)
        return matrix.symmetrize(Z @ self.steady.Q @ Z)

    def with_steady_state(self, steady: SteadyState) -> "FilterState":
        return dataclasses.replace(self, steady=steady)


@dataclasses.dataclass(frozen=True)
class ForecastRecord:
    t: int
    dof: float
    location: np.ndarray
    spread: np.ndarray
    error: np.ndarray
    std_error: np.ndarray
    log_pred: float


def filter_init(
    config: ModelConfig, p: int, W: Optional[np.ndarray] = None
) -> FilterState:
    """The state at `t = 0`. `W` defaults to the model's `w_spec`, which must
    not need data."""
    if W is None:
        W, _ = config.resolve_w(p)
    steady = config.steady_state(W)
    S0 = config.prior_spread(p)
    n0 = float(config.n0)
    return FilterState(
        t=0,
        m=config.prior_mean(p),
        S=S0,
        n=n0,
        sigma_tilde=ESTIMATORS[config.estimator](n0 + 2 * p, steady.Q_inv, S0),
        steady=steady,
        estimator=config.estimator,
        standardization=config.standardization,
        P_t=config.p0 * np.eye(p) if config.exact_gain else None,
    )


def _check_observation(state: FilterState, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != (state.p,):
        raise ShapeError(f"Observation has shape {y.shape}, expected ({state.p},).")
    bad = np.flatnonzero(~np.isfinite(y))
    if len(bad):
        raise DataError(
            f"Non-finite observation at row {state.t}, column {bad[0]}.",
            row=state.t,
            col=int(bad[0]),
        )
    return y


def standardize(e: np.ndarray, variances: np.ndarray) -> np.ndarray:
    sd = np.sqrt(np.clip(variances, 0.0, None))
    out = np.full_like(e, np.nan)
    ok = sd >= STD_FLOOR
    out[ok] = e[ok] / sd[ok]
    return out


def _advance(
    state: FilterState,
    y: np.ndarray,
    S_prior: np.ndarray,
    dof: float,
    n_post: float,
) -> Tuple[FilterState, ForecastRecord]:
    """Shared body of `filter_step` and `vol_filter_step`. `dof = inf` gives a
    Gaussian forecast with the conditional covariance."""
    p = state.p
    steady = state.steady
    location = steady.phi * state.m
    e = y - location

    if np.isinf(dof):
        cov = state.forecast_covariance()
        log_pred = float(stats.multivariate_normal(np.zeros(p), cov).logpdf(e))
        variances = np.diag(cov)
    else:
        log_pred = student_log_density(e, dof, S_prior)
        if state.standardization == "spread":
            variances = np.diag(S_prior) / dof
        else:
            variances = np.diag(state.forecast_covariance())
    std_error = standardize(e, variances)

    S = matrix.symmetrize(S_prior + np.outer(e, e))
    sigma_tilde = ESTIMATORS[state.estimator](n_post + 2 * p, steady.Q_inv, S)
    P_t = None if state.P_t is None else p_step(state.P_t, steady.phi, steady.W)
    gain = steady.P if P_t is None else P_t
    Z, Z_inv = matrix.sym_sqrt_and_inv(sigma_tilde)
    m = location + Z @ gain @ Z_inv @ e

    record = ForecastRecord(
        t=state.t + 1,
        dof=dof,
        location=location,
        spread=S_prior,
        error=e,
        std_error=std_error,
        log_pred=log_pred,
    )
    new_state = dataclasses.replace(
        state, t=state.t + 1, m=m, S=S, n=n_post, sigma_tilde=sigma_tilde, P_t=P_t
    )
    return new_state, record


def filter_step(state: FilterState, y) -> Tuple[FilterState, ForecastRecord]:
    y = _check_observation(state, y)
    return _advance(state, y, state.S, state.n, state.n + 1.0)


def log_predictive(state: FilterState, y) -> float:
    """Log density of `y` under the one-step forecast `t_p(n, phi m, S)`."""
    y = _check_observation(state, y)
    return student_log_density(y - state.steady.phi * state.m, state.n, state.S)


def vol_filter_step(
    state: FilterState, y, consts: VolConstants
) -> Tuple[FilterState, ForecastRecord]:
    """A step with time-varying `Sigma_t`: the spread decays by `k` before the
    update, the forecast has `delta/(1-delta)` degrees of freedom and the
    posterior `1/(1-delta)`.

    With `delta = 1` the spread accumulates, `n` stays at its current value and
    the forecast is Gaussian.
    """
    y = _check_observation(state, y)
    if consts.p != state.p:
        raise ShapeError(f"Constants are for p={consts.p}, the state has p={state.p}.")
    if consts.degenerate:
        return _advance(state, y, state.S, math.inf, state.n)
    return _advance(
        state, y, state.S / consts.k, consts.forecast_dof, consts.posterior_dof
    )


@dataclasses.dataclass(frozen=True)
class FilterOutput:
    records: List[ForecastRecord]
    final: Any
    means: np.ndarray
    sigma_path: List[np.ndarray]
    msse: np.ndarray
    mse: np.ndarray
    mad: np.ndarray
    missing: int
    nr_results: List[Tuple[int, NrResult]] = dataclasses.field(default_factory=list)

    @classmethod
    def from_records(
        cls,
        records: List[ForecastRecord],
        final: Any,
        means: np.ndarray,
        sigma_path: List[np.ndarray],
        nr_results: Optional[List[Tuple[int, NrResult]]] = None,
    ) -> "FilterOutput":
        errors = np.array([r.error for r in records])
        std = np.array([r.std_error for r in records])
        missing = int(np.isnan(std).sum())
        if missing:
            utils.warn(
                f"{missing} standardized errors had a forecast standard deviation "
                f"below {STD_FLOOR:g} and are left out of the MSSE."
            )
        squared = std**2
        counts = np.sum(~np.isnan(squared), axis=0)
        msse = np.where(
            counts > 0, np.nansum(squared, axis=0) / np.maximum(counts, 1), np.nan
        )
        return cls(
            records=records,
            final=final,
            means=means,
            sigma_path=sigma_path,
            msse=msse,
            mse=np.mean(errors**2, axis=0),
            mad=np.mean(np.abs(errors), axis=0),
            missing=missing,
            nr_results=list(nr_results or []),
        )

    @property
    def loglik(self) -> float:
        return float(sum(r.log_pred for r in self.records))

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.error for r in self.records])

    @property
    def forecasts(self) -> np.ndarray:
        return np.array([r.location for r in self.records])


def check_series(data) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    if data.ndim != 2:
        raise ShapeError(f"Expected an N×p series, got shape {data.shape}.")
    if len(data) < 1:
        raise DataError("No observations.")
    rows, cols = np.nonzero(~np.isfinite(data))
    if len(rows):
        raise DataError(
            f"Non-finite observation at row {rows[0]}, column {cols[0]}.",
            row=int(rows[0]),
            col=int(cols[0]),
        )
    return data


def run_filter(
    config: ModelConfig, data, W: Optional[np.ndarray] = None
) -> FilterOutput:
    """Filter the whole series and summarize the one-step forecast errors.

    `W` overrides the model's `w_spec`. With an `EstimatedW` that sets
    `reestimate_every=k`, `W` is re-estimated from the observations seen so
    far every `k` steps, warm-started at the current gain.
    """
    config.validate()
    data = check_series(data)
    N, p = data.shape

    nr_results = []
    if W is None:
        W, result = config.resolve_w(p, data)
        if result is not None:
            nr_results.append((0, result))
    state = filter_init(config, p, W)

    w_spec = config.w_spec
    every = w_spec.reestimate_every if isinstance(w_spec, EstimatedW) else 0
    consts = None if config.delta is None else vol_constants(config.delta, p)

    records = []
    means = np.empty((N, p))
    sigma_path = []
    for t, y in enumerate(data):
        if every and t >= 2 and t % every == 0:
            result = w_spec.estimate(config, data[:t], init=state.steady.P)
            nr_results.append((t, result))
            state = state.with_steady_state(
                config.steady_state(w_from_p(result.P, config.phi))
            )
        if consts is None:
            state, record = filter_step(state, y)
        else:
            state, record = vol_filter_step(state, y, consts)
        records.append(record)
        means[t] = state.m
        sigma_path.append(state.sigma_tilde)

    return FilterOutput.from_records(records, state, means, sigma_path, nr_results)


def run_filter_with_w(data, W, phi: float = 1.0, **fields) -> FilterOutput:
    """`run_filter` with a known `W`; other `ModelConfig` fields are passed as
    keywords."""
    config = ModelConfig(phi=phi, w_spec=FixedW(W=np.asarray(W, dtype=float)), **fields)
    return run_filter(config, data)
