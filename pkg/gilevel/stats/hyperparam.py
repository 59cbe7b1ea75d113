"""Estimation of the level's evolution covariance `W`.

Up to constants the GIW filter's log-likelihood is `-log|S_N|` scaled, so `W`
is estimated by minimizing `log|S_N|` over the steady-state gain `P` (with the
observation covariance taken as the identity) and mapping back with
`w_from_p`.
"""

import dataclasses
import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import multigammaln

from gilevel.core import utils
from gilevel.errors import DataError, DomainError, EstimationError, ParameterError
from gilevel.stats import matrix

# Beyond this many observations the expansion path truncates the convolution.
TRUNCATE_AFTER = 500
TRUNCATION_TOL = 1e-12


def loglik_closed(
    S0: np.ndarray, SN: np.ndarray, n0: float, N: int, p: int
) -> float:
    """The telescoped prediction-decomposition log-likelihood of `N`
    observations, given the prior and final spread matrices."""
    if N < 1:
        raise DataError("The log-likelihood needs at least one observation.")
    c1 = n0 + p - 2
    c = (
        multigammaln((n0 + p + N - 1) / 2, p)
        - multigammaln((n0 + p - 1) / 2, p)
        - 0.5 * N * p * math.log(math.pi)
    )
    return (
        c
        + 0.5 * (c1 + 1) * matrix.logdet(S0)
        - 0.5 * (c1 + N + 1) * matrix.logdet(SN)
    )


def _check_gain(P: np.ndarray) -> np.ndarray:
    P = matrix.symmetrize(np.atleast_2d(np.asarray(P, dtype=float)))
    w = np.linalg.eigvalsh(P)
    if w[0] <= 0 or w[-1] >= 1:
        raise DomainError(
            f"The eigenvalues of P must lie in (0, 1); got [{w[0]:.6g}, {w[-1]:.6g}]."
        )
    return P


def _check_data(data: np.ndarray, p: int) -> np.ndarray:
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.shape[1] != p:
        raise DataError(f"Data has {data.shape[1]} columns, P is {p}×{p}.")
    if len(data) < 1:
        raise DataError("No observations.")
    return data


def _errors(P, data, phi, m0) -> np.ndarray:
    """One-step errors of `m_t = phi m_{t-1} + P (y_t - phi m_{t-1})`."""
    m = np.zeros(len(P)) if m0 is None else np.asarray(m0, dtype=float)
    errors = np.empty_like(data)
    for t, y in enumerate(data):
        e = y - phi * m
        errors[t] = e
        m = phi * m + P @ e
    return errors


def truncation_window(P: np.ndarray, phi: float = 1.0, tol: float = TRUNCATION_TOL):
    """Smallest `L` with `||(phi (I - P))^L||_2 < tol`, or `None` when the
    powers do not decay."""
    rho = abs(phi) * np.max(np.abs(1.0 - np.linalg.eigvalsh(P)))
    if rho >= 1.0:
        return None
    if rho == 0.0:
        return 1
    return max(1, int(math.ceil(math.log(tol) / math.log(rho))))


def _expansion_errors(P, data, phi, m0, window) -> np.ndarray:
    """Errors from the convolution `m_{t-1} = sum_i G^i P y_{t-1-i} + G^{t-1} m_0`
    with `G = phi (I - P)`, truncated to `window` lags."""
    N, p = data.shape
    G = phi * (np.eye(p) - P)
    L = N if window is None else min(window, N)
    kernels = np.empty((L, p, p))
    power = np.eye(p)
    for i in range(L):
        kernels[i] = power @ P
        power = G @ power
    m0 = np.zeros(p) if m0 is None else np.asarray(m0, dtype=float)

    errors = np.empty_like(data)
    G_power = np.eye(p)
    for t in range(N):
        # m_{t-1} with t observations y_0..y_{t-1} seen so far.
        lags = min(t, L)
        past = data[t - 1 :: -1][:lags] if t > 0 else data[:0]
        m = np.einsum("ijk,ik->j", kernels[:lags], past)
        if t < L:
            m = m + G_power @ m0
            G_power = G @ G_power
        errors[t] = data[t] - phi * m
    return errors


def logdet_sn(
    P: np.ndarray,
    data: np.ndarray,
    S0: np.ndarray,
    phi: float = 1.0,
    m0: Optional[np.ndarray] = None,
    method: str = "recursion",
    window: Union[int, str, None] = "auto",
) -> float:
    """`log|S_N|` with `S_N = S_0 + sum_t e_t e_t'` for the gain `P`.

    `method="recursion"` runs the filter; `method="expansion"` evaluates the
    same errors from the convolution form, truncated after `window` lags
    (`"auto"` truncates at 1e-12 once N exceeds 500).
    """
    P = _check_gain(P)
    data = _check_data(data, len(P))
    if method == "recursion":
        errors = _errors(P, data, phi, m0)
    elif method == "expansion":
        if window == "auto":
            window = (
                truncation_window(P, phi) if len(data) > TRUNCATE_AFTER else None
            )
        errors = _expansion_errors(P, data, phi, m0, window)
    else:
        raise ValueError(f"Unknown method '{method}'; use 'recursion' or 'expansion'.")
    return matrix.logdet(np.asarray(S0, dtype=float) + errors.T @ errors)


def symmetric_basis(p: int) -> np.ndarray:
    """Directions `K_a`, one per entry of `vech(P)`: `u_k u_k'` on the diagonal and
    `u_k u_l' + u_l u_k'` off it."""
    q = p * (p + 1) // 2
    basis = np.zeros((q, p, p))
    rows, cols = np.triu_indices(p)
    # vech order: column by column down the lower triangle.
    for a, (l, k) in enumerate(zip(rows, cols)):
        basis[a, k, l] = 1.0
        basis[a, l, k] = 1.0
    return basis


def _derivatives(P, data, S0, phi, m0, hessian: bool = True):
    """Value, gradient and Hessian of `log|S_N|` in `vech(P)` coordinates.

    Tangents of `m_t` are propagated through the recursion:
    `dm_t = phi (I - P) dm_{t-1} + K_a e_t` and
    `d2m_t = phi (I - P) d2m_{t-1} + K_b de^a_t + K_a de^b_t`, `de_t = -phi dm_{t-1}`.
    """
    P = _check_gain(P)
    N, p = data.shape
    K = symmetric_basis(p)
    q = len(K)
    S0 = np.asarray(S0, dtype=float)

    errors = _errors(P, data, phi, m0)
    SN = S0 + errors.T @ errors
    S_inv = matrix.spd_inv(SN)
    value = matrix.logdet(SN)

    G_T = (phi * (np.eye(p) - P)).T
    dm = np.zeros((q, p))
    d2m = np.zeros((q, q, p)) if hessian else None
    dS = np.zeros((q, p, p))
    curvature = np.zeros((q, q))
    for e in errors:
        de = -phi * dm
        dS += np.einsum("ai,j->aij", de, e)
        if hessian:
            d2e = -phi * d2m
            u = S_inv @ e
            curvature += 2.0 * (d2e @ u) + 2.0 * (de @ S_inv @ de.T)
            K_de = np.einsum("bij,aj->abi", K, de)
            d2m = d2m @ G_T + K_de + K_de.transpose(1, 0, 2)
        dm = dm @ G_T + np.einsum("aij,j->ai", K, e)

    dS = dS + dS.transpose(0, 2, 1)
    M = S_inv @ dS
    gradient = np.einsum("aii->a", M)
    if not hessian:
        return value, gradient, None
    H = curvature - np.einsum("aij,bji->ab", M, M)
    return value, gradient, 0.5 * (H + H.T)


def _vech_to_vec_index(p: int) -> List[Tuple[int, int]]:
    rows, cols = np.triu_indices(p)
    return [(k, l) for l, k in zip(rows, cols)]


def grad_logdet_sn(
    P: np.ndarray,
    data: np.ndarray,
    S0: np.ndarray,
    phi: float = 1.0,
    m0: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Symmetric `p×p` matrix of derivatives with respect to `p_kl`, where an
    off-diagonal `p_kl` moves both `P[k, l]` and `P[l, k]`."""
    P = _check_gain(P)
    data = _check_data(data, len(P))
    _, g, _ = _derivatives(P, data, S0, phi, m0, hessian=False)
    return matrix.unvech(g)


def hess_logdet_sn(
    P: np.ndarray,
    data: np.ndarray,
    S0: np.ndarray,
    phi: float = 1.0,
    m0: Optional[np.ndarray] = None,
) -> np.ndarray:
    """`p²×p²` second derivatives indexed by `vec` position
    (`k + l p` for `p_kl`)."""
    P = _check_gain(P)
    p = len(P)
    data = _check_data(data, p)
    _, _, H = _derivatives(P, data, S0, phi, m0)
    pairs = _vech_to_vec_index(p)
    out = np.zeros((p * p, p * p))
    for a, (k, l) in enumerate(pairs):
        for b, (r, s) in enumerate(pairs):
            for i in {k + l * p, l + k * p}:
                for j in {r + s * p, s + r * p}:
                    out[i, j] = H[a, b]
    return out


@dataclasses.dataclass(frozen=True)
class NrSettings:
    tol: float = 1e-3
    max_iter: int = 50
    eig_clamp: float = 1e-4
    init: Optional[np.ndarray] = None
    init_scale: float = 0.5

    def __post_init__(self):
        if not 0 < self.eig_clamp < 0.5:
            raise ParameterError(f"eig_clamp must lie in (0, 0.5); got {self.eig_clamp}.")
        if not self.tol > 0:
            raise ParameterError(f"tol must be positive; got {self.tol}.")
        if self.max_iter < 1:
            raise ParameterError(f"max_iter must be at least 1; got {self.max_iter}.")
        if not 0 < self.init_scale < 1:
            raise ParameterError(f"init_scale must lie in (0, 1); got {self.init_scale}.")


@dataclasses.dataclass(frozen=True)
class NrIterate:
    index: int
    objective: float
    step_norm: float


@dataclasses.dataclass(frozen=True)
class NrResult:
    P: np.ndarray
    trace: Tuple[NrIterate, ...]
    converged: bool
    iterations: int

    @property
    def objective(self) -> float:
        return self.trace[-1].objective


def clamp_spectrum(P: np.ndarray, eps: float) -> np.ndarray:
    w, V = matrix.sym_eigh(P)
    R = (V * np.clip(w, eps, 1.0 - eps)) @ V.T
    return 0.5 * (R + R.T)


def newton_raphson_p(
    data: np.ndarray,
    S0: np.ndarray,
    settings: NrSettings = NrSettings(),
    phi: float = 1.0,
    m0: Optional[np.ndarray] = None,
) -> NrResult:
    """Minimize `log|S_N|` over `P` by Newton's method in `vech(P)`.

    Each iterate is symmetrized and its spectrum clamped to `[eps, 1 - eps]`.
    Steps are halved until the objective does not increase; when the Hessian is
    not positive definite the iterate falls back to steepest descent.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if len(data) < 2:
        raise DataError("Estimating W needs at least two observations.")
    p = data.shape[1]
    eps = settings.eig_clamp
    P = (
        settings.init_scale * np.eye(p)
        if settings.init is None
        else np.atleast_2d(np.asarray(settings.init, dtype=float))
    )
    P = clamp_spectrum(P, eps)
    data = _check_data(data, p)

    def objective(candidate):
        return logdet_sn(candidate, data, S0, phi, m0)

    f = objective(P)
    trace = [NrIterate(0, f, 0.0)]
    if not np.isfinite(f):
        raise EstimationError("log|S_N| is not finite at the initial P.", trace=trace)

    def line_search(theta, direction):
        step = 1.0
        for _ in range(40):
            candidate = clamp_spectrum(matrix.unvech(theta + step * direction), eps)
            f_new = objective(candidate)
            if np.isfinite(f_new) and f_new <= f + 1e-12 * (1.0 + abs(f)):
                return candidate, f_new
            step *= 0.5
        return None, None

    converged = False
    iterations = 0
    for iterations in range(1, settings.max_iter + 1):
        _, g, H = _derivatives(P, data, S0, phi, m0)
        theta = matrix.vech(P)
        candidate = None
        try:
            U = matrix.chol_upper(H)
            newton = -np.linalg.solve(U, np.linalg.solve(U.T, g))
            candidate, f_new = line_search(theta, newton)
        except np.linalg.LinAlgError:
            utils.warn(
                f"Hessian of log|S_N| is not positive definite at iterate "
                f"{iterations}; taking a steepest-descent step."
            )
        if candidate is None:
            candidate, f_new = line_search(theta, -g)
        if candidate is None:
            raise EstimationError(
                f"No descent step found at iterate {iterations}.", trace=trace
            )
        step_norm = matrix.frobenius(candidate, P)
        P, f = candidate, f_new
        trace.append(NrIterate(iterations, f, step_norm))
        if step_norm <= settings.tol:
            converged = True
            break

    return NrResult(P=P, trace=tuple(trace), converged=converged, iterations=iterations)


def w_from_discounts(
    deltas: Union[float, Sequence[float]], p: Optional[int] = None
) -> np.ndarray:
    """`diag(delta_i^{-1} (1 - delta_i)^2)`. A single discount needs `p`."""
    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    if deltas.ndim != 1:
        raise ParameterError("Discount factors must be a scalar or a flat sequence.")
    if len(deltas) == 1 and p is not None:
        deltas = np.repeat(deltas, p)
    elif p is not None and len(deltas) != p:
        raise ParameterError(f"Expected {p} discount factors, got {len(deltas)}.")
    if np.any(deltas <= 0) or np.any(deltas > 1):
        raise ParameterError(f"Discount factors must lie in (0, 1]; got {deltas.tolist()}.")
    if np.any(deltas == 1):
        raise ParameterError(
            "A discount factor of 1 gives a singular W (static level); W must be "
            "positive definite."
        )
    return np.diag((1.0 - deltas) ** 2 / deltas)
