"""EWMA control chart of log Bayes factors of the one-step forecasts against a
Gaussian target.

Phase I (`t <= phase1_end`) calibrates the center and the limits of the chart;
Phase II is monitored.
"""

import dataclasses
from typing import Optional

import numpy as np
from scipy import signal, stats

from gilevel.core import utils
from gilevel.core.component import component
from gilevel.core.field import Field
from gilevel.core.io import MatrixLike, load_matrix
from gilevel.errors import ParameterError
from gilevel.stats.filter import (
    FilterOutput,
    FilterState,
    check_series,
    log_predictive,
    run_filter,
)
from gilevel.stats.model import ModelConfig

Z0_MODES = ("two_pass", "sequential")
COLUMNS = ("t", "H", "Z", "center", "lcl", "ucl", "signal")


@component
class ChartConfig:
    lam: float = Field(0.05)
    target_mean: MatrixLike = Field(None)
    target_cov: MatrixLike = Field(None)
    phase1_end: int = Field(180)
    # Phase I steps left out of the calibration of `z0` and the limits.
    burn_in: int = Field(0)
    limit_multiplier: float = Field(3.0)
    z0: str = Field("two_pass")
    audit: bool = Field(False)

    def __post_configure__(self):
        self.validate()

    def validate(self) -> None:
        if not 0 < self.lam <= 1:
            raise ParameterError(f"lam must lie in (0, 1]; got {self.lam}.")
        if self.phase1_end < 10:
            raise ParameterError(
                f"Phase I needs at least 10 observations; got {self.phase1_end}."
            )
        if not 0 <= self.burn_in <= self.phase1_end - 2:
            raise ParameterError("burn_in must leave at least 2 Phase I steps.")
        if not self.limit_multiplier > 0:
            raise ParameterError("limit_multiplier must be positive.")
        if self.z0 not in Z0_MODES:
            raise ParameterError(
                f"z0 must be one of {list(Z0_MODES)}; got '{self.z0}'."
            )


@dataclasses.dataclass(frozen=True)
class GaussianTarget:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        try:
            dist = stats.multivariate_normal(self.mean, self.cov)
        except (np.linalg.LinAlgError, ValueError) as e:
            raise utils.ConfigurationError(
                f"The target covariance must be positive definite: {e}"
            ) from None
        object.__setattr__(self, "_dist", dist)

    @classmethod
    def from_sample(cls, data: np.ndarray) -> "GaussianTarget":
        return cls(np.mean(data, axis=0), np.atleast_2d(np.cov(data, rowvar=False)))

    def logpdf(self, y) -> np.ndarray:
        return self._dist.logpdf(y)


def log_bayes_factor(state: FilterState, y, target: GaussianTarget) -> float:
    """`log p(y | forecast) - log N(y; target)` for the forecast made from
    `state`."""
    return log_predictive(state, y) - float(target.logpdf(y))


def ewma(series, lam: float, z0: float) -> np.ndarray:
    """`Z_t = lam H_t + (1 - lam) Z_{t-1}` started at `Z_0 = z0`."""
    if not 0 < lam <= 1:
        raise ParameterError(f"lam must lie in (0, 1]; got {lam}.")
    series = np.asarray(series, dtype=float)
    out, _ = signal.lfilter([lam], [1.0, lam - 1.0], series, zi=[(1.0 - lam) * z0])
    return out


@dataclasses.dataclass(frozen=True)
class ChartReport:
    H: np.ndarray
    Z: np.ndarray
    z0: float
    center: float
    lcl: float
    ucl: float
    phase1_end: int
    # 1-based times of out-of-limit points.
    signals: np.ndarray
    output: FilterOutput

    @property
    def t(self) -> np.ndarray:
        return np.arange(1, len(self.H) + 1)

    @property
    def first_signal(self) -> Optional[int]:
        return int(self.signals[0]) if len(self.signals) else None

    def rows(self) -> np.ndarray:
        n = len(self.H)
        flags = np.isin(self.t, self.signals).astype(float)
        return np.column_stack(
            [
                self.t,
                self.H,
                self.Z,
                np.full(n, self.center),
                np.full(n, self.lcl),
                np.full(n, self.ucl),
                flags,
            ]
        )


def target_for(config: ChartConfig, data: np.ndarray) -> GaussianTarget:
    """The configured target, with the Phase I sample moments filling in."""
    p = data.shape[1]
    phase1 = data[: config.phase1_end]
    mean = load_matrix(config.target_mean, "target_mean", shape=(p,))
    cov = load_matrix(config.target_cov, "target_cov", shape=(p, p))
    if mean is None:
        mean = np.mean(phase1, axis=0)
    if cov is None:
        cov = np.atleast_2d(np.cov(phase1, rowvar=False))
    return GaussianTarget(mean, cov)


def chart_run(data, config: ChartConfig, model: ModelConfig) -> ChartReport:
    config.validate()
    data = check_series(data)
    if config.phase1_end >= len(data):
        raise ParameterError(
            f"phase1_end={config.phase1_end} leaves no Phase II in {len(data)} rows."
        )
    target = target_for(config, data)
    output = run_filter(model, data)
    H = np.array([r.log_pred for r in output.records]) - target.logpdf(data)

    calibration = slice(config.burn_in, config.phase1_end)
    if config.z0 == "two_pass":
        z0 = float(np.mean(H[calibration]))
    else:
        z0 = float(H[0])
    Z = ewma(H, config.lam, z0)

    center = float(np.mean(Z[calibration]))
    sd = float(np.std(Z[calibration], ddof=1))
    if not (np.isfinite(sd) and sd > 0):
        raise utils.ConfigurationError(
            "The EWMA statistic is constant over Phase I; the limits are undefined."
        )
    half_width = config.limit_multiplier * sd
    lcl, ucl = center - half_width, center + half_width

    t = np.arange(1, len(H) + 1)
    out = (Z < lcl) | (Z > ucl)
    if not config.audit:
        out &= t > config.phase1_end
    return ChartReport(
        H=H,
        Z=Z,
        z0=z0,
        center=center,
        lcl=lcl,
        ucl=ucl,
        phase1_end=config.phase1_end,
        signals=t[out],
        output=output,
    )
