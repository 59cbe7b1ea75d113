"""Time-varying observation covariance.

The precision follows a multiplicative random walk,

```
Sigma_t^{-1} = k U(Sigma_{t-1}^{-1})' B_t U(Sigma_{t-1}^{-1}),    B_t ~ B_p(m/2, 1/2)
```

where `U(.)` is the upper Cholesky factor and `B_t` a singular multivariate beta
matrix. `k` and `m` are chosen so that `E(Sigma_t^{-1}) = Sigma_{t-1}^{-1}`.
"""

import dataclasses
import math
from typing import List, Optional, Tuple

import numpy as np

from gilevel.errors import ParameterError, SingularityError
from gilevel.stats import matrix

# Floor for the eigenvalues of simulated covariances.
PATH_FLOOR = 1e-10


@dataclasses.dataclass(frozen=True)
class VolConstants:
    delta: float
    p: int
    k: float
    m: float

    @property
    def degenerate(self) -> bool:
        """`delta = 1`: `k = 1` and `B_t = I`, so the covariance is static."""
        return self.delta == 1.0

    @property
    def forecast_dof(self) -> float:
        return math.inf if self.degenerate else self.delta / (1.0 - self.delta)

    @property
    def posterior_dof(self) -> float:
        return math.inf if self.degenerate else 1.0 / (1.0 - self.delta)


def vol_constants(delta: float, p: int) -> VolConstants:
    """`k = (delta (1-p) + p) / (delta (2-p) + p - 1)` and
    `m = delta / (1 - delta) + p - 1`."""
    if not 0 < delta <= 1:
        raise ParameterError(f"The discount factor must lie in (0, 1]; got {delta}.")
    if p < 1:
        raise ParameterError(f"p must be at least 1; got {p}.")
    k = (delta * (1 - p) + p) / (delta * (2 - p) + p - 1)
    m = math.inf if delta == 1 else delta / (1 - delta) + p - 1
    return VolConstants(delta=float(delta), p=int(p), k=float(k), m=float(m))


def _check_rng(rng) -> np.random.Generator:
    if not isinstance(rng, np.random.Generator):
        raise TypeError("Pass a seeded `numpy.random.Generator`.")
    return rng


def sample_wishart_identity(
    dof: float, p: int, rng, size: Optional[int] = None
) -> np.ndarray:
    """`W_p(dof, I)` draws by the Bartlett decomposition: `L L'` with
    `L_ii^2 ~ chi^2_{dof - i}` and standard normal entries below the
    diagonal."""
    if not dof > p - 1:
        raise ParameterError(f"Wishart draws need dof > p - 1; got dof={dof}, p={p}.")
    rng = _check_rng(rng)
    shape = () if size is None else (size,)
    L = np.zeros(shape + (p, p))
    rows, cols = np.tril_indices(p, -1)
    L[..., rows, cols] = rng.standard_normal(shape + (len(rows),))
    diag = np.arange(p)
    L[..., diag, diag] = np.sqrt(rng.chisquare(dof - diag, size=shape + (p,)))
    return L @ np.swapaxes(L, -1, -2)


def sample_singular_beta(
    m: float, n: int, p: int, rng, size: Optional[int] = None
) -> np.ndarray:
    """Draw `B = U(C)'^{-1} A_1 U(C)^{-1}` with `A_1 ~ W_p(m, I)`, `A_2` the sum
    of `n` outer products of standard normal vectors and `C = A_1 + A_2`.

    `I - B` has rank `min(n, p)`. With `size`, returns a `(size, p, p)` stack.
    """
    if not m > p - 1:
        raise ParameterError(f"The singular beta needs m > p - 1; got m={m}, p={p}.")
    if n < 1:
        raise ParameterError(f"n must be at least 1; got {n}.")
    rng = _check_rng(rng)
    A1 = sample_wishart_identity(m, p, rng, size)
    shape = () if size is None else (size,)
    Y = rng.standard_normal(shape + (n, p))
    C = A1 + np.swapaxes(Y, -1, -2) @ Y
    # C = L L' with L = U(C)', so B = L^{-1} A_1 L^{-T}.
    L = np.linalg.cholesky(C)
    X = np.linalg.solve(L, A1)
    B = np.swapaxes(np.linalg.solve(L, np.swapaxes(X, -1, -2)), -1, -2)
    return 0.5 * (B + np.swapaxes(B, -1, -2))


def _factor(prec: np.ndarray) -> np.ndarray:
    """A factor `U` with `U'U = prec`: the upper Cholesky factor, or the
    symmetric square root when `prec` is only semi-definite."""
    try:
        return matrix.chol_upper(prec)
    except SingularityError:
        return matrix.sym_sqrt(prec)


def evolve_precision(prec_prev: np.ndarray, B: np.ndarray, k: float) -> np.ndarray:
    """`k U' B U` with `U = U(prec_prev)`. `B` may be a stack of matrices."""
    U = _factor(matrix.symmetrize(np.asarray(prec_prev, dtype=float)))
    out = k * (U.T @ np.asarray(B, dtype=float) @ U)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def _covariance(prec: np.ndarray) -> np.ndarray:
    return matrix.nearest_pd(np.linalg.pinv(prec, hermitian=True), PATH_FLOOR)


def simulate_vol_path(
    sigma0: np.ndarray, consts: VolConstants, N: int, rng
) -> List[np.ndarray]:
    """`Sigma_1, ..., Sigma_N` started from `sigma0`.

    Precisions are evolved unmodified; only the returned covariances are
    repaired to be positive definite.
    """
    sigma0 = np.asarray(sigma0, dtype=float)
    if sigma0.shape != (consts.p, consts.p):
        raise ParameterError(
            f"sigma0 has shape {sigma0.shape}, the constants are for p={consts.p}."
        )
    if consts.degenerate:
        return [sigma0.copy() for _ in range(N)]
    rng = _check_rng(rng)
    prec = matrix.spd_inv(sigma0)
    path = []
    for _ in range(N):
        B = sample_singular_beta(consts.m, 1, consts.p, rng)
        prec = evolve_precision(prec, B, consts.k)
        path.append(_covariance(prec))
    return path


def simulate_vol_llm(
    sigma0: np.ndarray,
    W: np.ndarray,
    consts: VolConstants,
    N: int,
    rng,
    phi: float = 1.0,
    m_init: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Simulate the local level model with covariance path `Sigma_t`:
    `y_t = theta_t + Sigma_t^{1/2} u_t` and
    `theta_t = phi theta_{t-1} + Sigma_t^{1/2} W^{1/2} v_t`.

    Returns the N×p series and the path.
    """
    p = consts.p
    path = simulate_vol_path(sigma0, consts, N, rng)
    W_half = matrix.sym_sqrt(np.asarray(W, dtype=float))
    theta = np.zeros(p) if m_init is None else np.asarray(m_init, dtype=float)
    data = np.empty((N, p))
    for t, sigma in enumerate(path):
        Z = matrix.sym_sqrt(sigma)
        theta = phi * theta + Z @ W_half @ rng.standard_normal(p)
        data[t] = theta + Z @ rng.standard_normal(p)
    return data, path
