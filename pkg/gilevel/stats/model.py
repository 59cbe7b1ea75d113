"""Prior and evolution settings of the local level model.

```
y_t = theta_t + eps_t,          eps_t | Sigma ~ N_p(0, Sigma)
theta_t = phi theta_{t-1} + w_t,  w_t | Sigma ~ N_p(0, Sigma^{1/2} W Sigma^{1/2})
```

with `theta_0 | Sigma ~ N_p(m0, p0 Sigma)` and `Sigma ~ GIW_p(n0, Q^{-1}, S0)`.
`W` is given directly, built from discount factors, or estimated from the data.
"""

import abc
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from gilevel.core import utils
from gilevel.core.component import component
from gilevel.core.field import ComponentField, Field
from gilevel.core.io import MatrixLike, load_matrix
from gilevel.errors import DataError, ParameterError, SingularityError
from gilevel.stats import matrix
from gilevel.stats.giw import ESTIMATORS
from gilevel.stats.hyperparam import (
    NrResult,
    NrSettings,
    newton_raphson_p,
    w_from_discounts,
)
from gilevel.stats.steady_state import SteadyState, w_from_p

STANDARDIZATIONS = ("spread", "conditional")


def _check_pd(M: np.ndarray, name: str) -> np.ndarray:
    M = matrix.symmetrize(M)
    try:
        matrix.chol_upper(M)
    except SingularityError:
        raise ParameterError(f"'{name}' must be positive definite.") from None
    return M


class WSpec(abc.ABC):
    """How the evolution covariance `W` is obtained."""

    @abc.abstractmethod
    def resolve(
        self, model: "ModelConfig", p: int, data: Optional[np.ndarray] = None
    ) -> Tuple[np.ndarray, Optional[NrResult]]:
        """Return `W` (p×p, positive definite) and the estimation result, if
        `W` was estimated."""


@component
class FixedW(WSpec):
    """A known `W`, optionally scaled. A scalar means a multiple of the
    identity."""

    W: Union[float, MatrixLike] = Field(None)
    scale: float = Field(1.0)

    def resolve(self, model, p, data=None):
        if self.W is None:
            raise utils.ConfigurationError(
                "FixedW needs a value for `W` (a matrix, a CSV path or a scalar)."
            )
        if isinstance(self.W, (int, float)):
            W = float(self.W) * np.eye(p)
        else:
            W = load_matrix(self.W, "W", shape=(p, p))
        if not self.scale > 0:
            raise ParameterError(f"The scale of W must be positive; got {self.scale}.")
        return _check_pd(self.scale * W, "W"), None


@component
class DiscountW(WSpec):
    """`W = diag(delta_i^{-1} (1 - delta_i)^2)` from one discount factor per
    component (or one shared factor)."""

    deltas: Union[float, Sequence[float]] = Field(0.9)

    def resolve(self, model, p, data=None):
        return w_from_discounts(self.deltas, p), None


@component
class EstimatedW(WSpec):
    """`W` estimated by minimizing `log|S_N|` over the steady-state gain.

    Without `reestimate_every` the estimate uses the first `calibration` rows.
    When unset, all rows are used and the filter then forecasts the same
    observations `W` was fitted to, so its errors are in-sample. With
    `reestimate_every=k` the filter starts from the calibration estimate, or
    from the gain `init_scale * I` when no calibration segment is set, and
    re-estimates from the observations seen so far every `k` steps.
    """

    tol: float = Field(1e-3)
    max_iter: int = Field(50)
    eig_clamp: float = Field(1e-4)
    init_scale: float = Field(0.5)
    calibration: Optional[int] = Field(None)
    reestimate_every: int = Field(0)

    def __post_configure__(self):
        self.settings()
        if self.calibration is not None and self.calibration < 2:
            raise ParameterError("`calibration` must be at least 2 observations.")
        if self.reestimate_every < 0:
            raise ParameterError("`reestimate_every` must be non-negative.")

    def settings(self, init: Optional[np.ndarray] = None) -> NrSettings:
        return NrSettings(
            tol=self.tol,
            max_iter=self.max_iter,
            eig_clamp=self.eig_clamp,
            init=init,
            init_scale=self.init_scale,
        )

    def estimate(
        self,
        model: "ModelConfig",
        data: np.ndarray,
        init: Optional[np.ndarray] = None,
    ) -> NrResult:
        p = data.shape[1]
        return newton_raphson_p(
            data,
            model.prior_spread(p),
            self.settings(init),
            phi=model.phi,
            m0=model.prior_mean(p),
        )

    def resolve(self, model, p, data=None):
        if self.reestimate_every and self.calibration is None:
            P = self.init_scale * np.eye(p)
            return w_from_p(P, model.phi), None
        if data is None:
            raise utils.ConfigurationError(
                "EstimatedW needs data: W is estimated from the series before "
                "filtering."
            )
        if self.calibration is not None:
            if self.calibration > len(data):
                utils.warn(
                    f"Calibration segment of {self.calibration} rows is longer than "
                    f"the series ({len(data)} rows); using all of it."
                )
            data = data[: self.calibration]
        result = self.estimate(model, data)
        if not result.converged:
            utils.warn(
                f"Newton-Raphson for W stopped after {result.iterations} iterations "
                "without meeting its tolerance."
            )
        return w_from_p(result.P, model.phi), result


@component
class ModelConfig:
    """Prior, evolution and estimator settings of the GIW filter."""

    phi: float = Field(1.0)
    m0: Union[float, MatrixLike] = Field(None)
    p0: float = Field(1000.0)
    n0: float = Field(0.01)
    S0: Union[float, MatrixLike] = Field(None)
    w_spec: WSpec = ComponentField(FixedW)
    exact_gain: bool = Field(False)
    estimator: str = Field("tilde")
    standardization: str = Field("spread")
    delta: Optional[float] = Field(None)

    def __post_configure__(self):
        self.validate()

    def validate(self) -> None:
        if not self.n0 > 0:
            raise ParameterError(f"n0 must be positive; got {self.n0}.")
        if not self.p0 > 0:
            raise ParameterError(f"p0 must be positive; got {self.p0}.")
        if not np.isfinite(self.phi):
            raise ParameterError(f"phi must be finite; got {self.phi}.")
        if self.estimator not in ESTIMATORS:
            raise ParameterError(
                f"Unknown estimator '{self.estimator}'; use one of "
                f"{sorted(ESTIMATORS)}."
            )
        if self.standardization not in STANDARDIZATIONS:
            raise ParameterError(
                f"Unknown standardization '{self.standardization}'; use one of "
                f"{list(STANDARDIZATIONS)}."
            )
        if self.delta is not None and not 0 < self.delta <= 1:
            raise ParameterError(f"delta must lie in (0, 1]; got {self.delta}.")

    def prior_mean(self, p: int) -> np.ndarray:
        if self.m0 is None:
            return np.zeros(p)
        if isinstance(self.m0, (int, float)):
            return np.full(p, float(self.m0))
        return load_matrix(self.m0, "m0", shape=(p,))

    def prior_spread(self, p: int) -> np.ndarray:
        if self.S0 is None:
            return np.eye(p)
        if isinstance(self.S0, (int, float)):
            return _check_pd(float(self.S0) * np.eye(p), "S0")
        return _check_pd(load_matrix(self.S0, "S0", shape=(p, p)), "S0")

    def resolve_w(
        self, p: int, data: Optional[np.ndarray] = None
    ) -> Tuple[np.ndarray, Optional[NrResult]]:
        if data is not None and len(data) == 0:
            raise DataError("No observations.")
        return self.w_spec.resolve(self, p, data)

    def steady_state(self, W: np.ndarray) -> SteadyState:
        return SteadyState.from_w(self.phi, W)
