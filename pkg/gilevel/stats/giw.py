"""The generalized inverted Wishart distribution and its Wishart dual.

`X ~ GIW_p(n, A, S)` when `X^{1/2} S^{-1} X^{1/2}` is inverted Wishart with `n`
degrees of freedom and scale `A`. `A = I` or `S = I` gives an ordinary inverted
Wishart, and the roles of `A` and `S` are interchangeable.
"""

import dataclasses
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.special import gammaln, multigammaln

from gilevel.core import utils
from gilevel.errors import (
    DomainError,
    NumericalFailure,
    ParameterError,
    SingularityError,
)
from gilevel.stats import matrix

LOG2 = np.log(2.0)
COMMUTE_TOL = 1e-10
MODE_RESIDUAL_TOL = 1e-6
COND_LIMIT = 1e12
TILDE_FLOOR = 1e-10
# The averaged estimate is kept while its condition number stays within this
# factor of the geometric one.
TILDE_COND_FACTOR = 10.0
# Above this dimension the vec system has more than 2.5M unknowns and the
# Newton solve starts from the geometric estimate instead.
VEC_START_MAX_P = 6


def _spd(M, name: str) -> np.ndarray:
    M = matrix.symmetrize(np.atleast_2d(np.asarray(M, dtype=float)))
    try:
        matrix.chol_upper(M)
    except SingularityError as e:
        raise ParameterError(f"'{name}' must be positive definite: {e}") from None
    return M


@dataclasses.dataclass(frozen=True)
class GiwParams:
    n: float
    A: np.ndarray
    S: np.ndarray

    def __post_init__(self):
        A = _spd(self.A, "A")
        S = _spd(self.S, "S")
        if A.shape != S.shape:
            raise ParameterError(f"A {A.shape} and S {S.shape} differ in shape.")
        if not self.n > 2 * len(A):
            raise ParameterError(
                f"GIW degrees of freedom must exceed 2p = {2 * len(A)}; got n={self.n}."
            )
        object.__setattr__(self, "n", float(self.n))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "S", S)

    @property
    def p(self) -> int:
        return len(self.A)

    def swapped(self) -> "GiwParams":
        return GiwParams(self.n, self.S, self.A)

    def dual(self) -> "GwParams":
        """Parameters of `X^{-1}`."""
        return GwParams(
            self.n - self.p - 1, matrix.spd_inv(self.A), matrix.spd_inv(self.S)
        )


@dataclasses.dataclass(frozen=True)
class GwParams:
    dof: float
    Ainv: np.ndarray
    Sinv: np.ndarray

    def __post_init__(self):
        Ainv = _spd(self.Ainv, "Ainv")
        Sinv = _spd(self.Sinv, "Sinv")
        if Ainv.shape != Sinv.shape:
            raise ParameterError("Ainv and Sinv differ in shape.")
        if not self.dof > len(Ainv) - 1:
            raise ParameterError(
                f"GW degrees of freedom must exceed p - 1 = {len(Ainv) - 1}; "
                f"got {self.dof}."
            )
        object.__setattr__(self, "dof", float(self.dof))
        object.__setattr__(self, "Ainv", Ainv)
        object.__setattr__(self, "Sinv", Sinv)

    @property
    def p(self) -> int:
        return len(self.Ainv)


def _log_normalizer(n: float, p: int, logdet_A: float, logdet_S: float) -> float:
    a = 0.5 * (n - p - 1)
    return a * (logdet_A + logdet_S) - p * a * LOG2 - multigammaln(a, p)


def _sandwich_trace(A: np.ndarray, S: np.ndarray, R: np.ndarray) -> float:
    """`tr(A R S R)`, evaluated so that swapping `A` and `S` gives the identical
    float."""
    RAR = R @ A @ R
    RSR = R @ S @ R
    return 0.5 * (float(np.sum(RAR * S)) + float(np.sum(RSR * A)))


def giw_log_density(X: np.ndarray, params: GiwParams) -> float:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    try:
        _, X_inv_root = matrix.sym_sqrt_and_inv(X)
        logdet_X = matrix.logdet(X)
    except SingularityError as e:
        raise DomainError(f"GIW density needs a positive definite X: {e}") from None
    return (
        _log_normalizer(
            params.n, params.p, matrix.logdet(params.A), matrix.logdet(params.S)
        )
        - 0.5 * params.n * logdet_X
        - 0.5 * _sandwich_trace(params.A, params.S, X_inv_root)
    )


def gw_log_density(Y: np.ndarray, params: GwParams) -> float:
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    p = params.p
    n = params.dof + p + 1
    A = matrix.spd_inv(params.Ainv)
    S = matrix.spd_inv(params.Sinv)
    try:
        logdet_Y = matrix.logdet(Y)
    except SingularityError as e:
        raise DomainError(f"GW density needs a positive definite Y: {e}") from None
    Y_root = matrix.sym_sqrt(Y)
    return (
        _log_normalizer(n, p, matrix.logdet(A), matrix.logdet(S))
        + 0.5 * (n - 2 * p - 2) * logdet_Y
        - 0.5 * _sandwich_trace(A, S, Y_root)
    )


@dataclasses.dataclass(frozen=True)
class GiwMoments:
    params: GiwParams

    @property
    def e_quad(self) -> np.ndarray:
        """`E(X^{1/2} S^{-1} X^{1/2})`."""
        n, p = self.params.n, self.params.p
        if not n > 2 * p + 2:
            raise ParameterError(
                f"E(X^(1/2) S^-1 X^(1/2)) exists only for n > 2p + 2 = {2 * p + 2}; "
                f"got n={n}."
            )
        return self.params.A / (n - 2 * p - 2)

    @property
    def e_inv_quad(self) -> np.ndarray:
        """`E(X^{-1/2} S X^{-1/2})`."""
        return (self.params.n - self.params.p - 1) * matrix.spd_inv(self.params.A)

    def e_det_pow(self, ell: float) -> float:
        """`E|X|^ell` for `0 < ell < (n - 2p)/2`."""
        n, p = self.params.n, self.params.p
        if not 0 < ell < (n - 2 * p) / 2:
            raise ParameterError(
                f"E|X|^l exists only for 0 < l < (n - 2p)/2 = {(n - 2 * p) / 2}; "
                f"got l={ell}."
            )
        half = (n - p - np.arange(1, p + 1)) / 2
        log_value = (
            -p * ell * LOG2
            + float(np.sum(gammaln(half - ell) - gammaln(half)))
            + ell * (matrix.logdet(self.params.A) + matrix.logdet(self.params.S))
        )
        return float(np.exp(log_value))


def giw_moments(params: GiwParams) -> GiwMoments:
    return GiwMoments(params)


def averaged_estimate(n: float, A: np.ndarray, S: np.ndarray) -> np.ndarray:
    """`(AS + SA)/(2n)` repaired to be positive definite. No validation."""
    AS = A @ S
    return matrix.nearest_pd(0.5 * (AS + AS.T) / n, TILDE_FLOOR)


def geometric_estimate(n: float, A: np.ndarray, S: np.ndarray) -> np.ndarray:
    """`(A # S)^2 / n`, with the matrix geometric mean
    `A # S = A^{1/2} (A^{-1/2} S A^{-1/2})^{1/2} A^{1/2}`.

    `A # S` is the positive definite solution of `Z A^{-1} Z = S`, so the result
    solves the mode equation. It is symmetric in `A` and `S` and reduces to
    `AS/n` when they commute.
    """
    R, R_inv = matrix.sym_sqrt_and_inv(A)
    G = R @ matrix.sym_sqrt(R_inv @ S @ R_inv) @ R
    G = 0.5 * (G + G.T)
    return matrix.nearest_pd(G @ G / n, TILDE_FLOOR)


def _cond(M: np.ndarray) -> float:
    w = np.linalg.eigvalsh(M)
    return float(w[-1] / w[0]) if w[0] > 0 else np.inf


def guarded_estimate(n: float, A: np.ndarray, S: np.ndarray) -> np.ndarray:
    """The averaged estimate `(AS + SA)/(2n)` while it is positive definite and
    no worse conditioned than `TILDE_COND_FACTOR` times `geometric_estimate`;
    the geometric estimate otherwise.
    """
    AS = A @ S
    averaged = 0.5 * (AS + AS.T) / n
    geometric = geometric_estimate(n, A, S)
    if _cond(averaged) <= TILDE_COND_FACTOR * _cond(geometric):
        return averaged
    return geometric


def estimator_tilde(params: GiwParams) -> np.ndarray:
    return averaged_estimate(params.n, params.A, params.S)


def mode_residual(params: GiwParams, X: np.ndarray) -> float:
    """Frobenius norm of `A X^{-1/2} S + S X^{-1/2} A - 2n X^{1/2}`."""
    Z, Z_inv = matrix.sym_sqrt_and_inv(X)
    return float(np.linalg.norm(_mode_equation(params, Z, Z_inv), "fro"))


def _mode_equation(params: GiwParams, Z: np.ndarray, Z_inv: np.ndarray) -> np.ndarray:
    A, S = params.A, params.S
    T = A @ Z_inv @ S
    return T + T.T - 2 * params.n * Z


def _vec_start(params: GiwParams) -> Optional[np.ndarray]:
    """Starting point from the vectorized mode equation.

    With `b = vec(S)`, `B = I ⊗ A`, `d = vec(A)` and `D = I ⊗ S` the mode
    equation reads `(b' ⊗ B + d' ⊗ D) vec(K) = 2n vec(I)` for
    `K = X^{-1/2} ⊗ X^{-1/2}`. The minimum-norm solution is reshaped to `K`,
    and `K vec(I) = vec(X^{-1})`.
    """
    p = params.p
    I = np.eye(p)
    M = matrix.kron(matrix.vec(params.S)[None, :], matrix.kron(I, params.A))
    M += matrix.kron(matrix.vec(params.A)[None, :], matrix.kron(I, params.S))
    singular_values = np.linalg.svd(M, compute_uv=False)
    if singular_values[-1] <= 0 or singular_values[0] / singular_values[-1] > COND_LIMIT:
        return None
    c, *_ = scipy.linalg.lstsq(M, 2 * params.n * matrix.vec(I))
    K = c.reshape(p * p, p * p, order="F")
    X_inv = matrix.unvec(K @ matrix.vec(I), p)
    if not np.all(np.isfinite(X_inv)):
        return None
    try:
        X_inv = matrix.symmetrize(X_inv)
        return matrix.spd_inv(X_inv)
    except (SingularityError, ValueError):
        return None


def giw_mode(params: GiwParams, max_iter: int = 100) -> np.ndarray:
    """The mode `X̂`, solving `A X^{-1/2} S + S X^{-1/2} A = 2n X^{1/2}`.

    Commuting `A` and `S` give `AS/n` directly. Otherwise the vectorized equation
    supplies a starting point that Newton's method on `Z = X^{1/2}` polishes.
    Raises `NumericalFailure` when the residual stays above
    `1e-6 n ||X^{1/2}||_F`.
    """
    A, S, n, p = params.A, params.S, params.n, params.p
    if matrix.commute_residual(A, S) <= COMMUTE_TOL:
        return averaged_estimate(n, A, S)

    X0 = _vec_start(params) if p <= VEC_START_MAX_P else None
    if X0 is None or not matrix.is_pd(X0):
        X0 = geometric_estimate(n, A, S)

    Z, Z_inv = matrix.sym_sqrt_and_inv(X0)
    F = _mode_equation(params, Z, Z_inv)
    norm_F = np.linalg.norm(F)
    eye = np.eye(p * p)
    for _ in range(max_iter):
        if norm_F <= 1e-13 * n * np.linalg.norm(Z):
            break
        J = -(
            np.kron((Z_inv @ S).T, A @ Z_inv) + np.kron((Z_inv @ A).T, S @ Z_inv)
        ) - 2 * n * eye
        try:
            dZ = matrix.unvec(np.linalg.solve(J, -matrix.vec(F)), p)
        except np.linalg.LinAlgError:
            break
        dZ = 0.5 * (dZ + dZ.T)
        step = 1.0
        for _ in range(50):
            candidate = Z + step * dZ
            try:
                candidate_inv = matrix.spd_inv(candidate)
            except SingularityError:
                step *= 0.5
                continue
            F_new = _mode_equation(params, candidate, candidate_inv)
            if np.linalg.norm(F_new) < norm_F:
                break
            step *= 0.5
        else:
            break
        Z, Z_inv, F, norm_F = candidate, candidate_inv, F_new, np.linalg.norm(F_new)

    residual = float(norm_F)
    if not residual <= MODE_RESIDUAL_TOL * n * np.linalg.norm(Z):
        raise NumericalFailure(
            f"GIW mode equation not solved (residual {residual:.3g}).",
            residual=residual,
        )
    X = Z @ Z
    return 0.5 * (X + X.T)


def giw_block_diag(blocks: Sequence[GiwParams]) -> GiwParams:
    """Join independent blocks with a shared `n` into one block-diagonal GIW."""
    blocks = list(blocks)
    if not blocks:
        raise ParameterError("At least one block is required.")
    ns = {b.n for b in blocks}
    if len(ns) != 1:
        raise ParameterError(f"Blocks must share n; got {sorted(ns)}.")
    return GiwParams(
        blocks[0].n,
        scipy.linalg.block_diag(*(b.A for b in blocks)),
        scipy.linalg.block_diag(*(b.S for b in blocks)),
    )


def _check_rng(rng) -> np.random.Generator:
    if not isinstance(rng, np.random.Generator):
        raise TypeError("Pass a seeded `numpy.random.Generator`.")
    return rng


def giw_sample_p1(n: float, a: float, s: float, rng, size=None):
    """Draw scalar `GIW_1(n, a, s)` variates: `s a / g` with
    `g ~ Gamma((n - 2)/2, scale=2)`."""
    if not n > 2:
        raise ParameterError(f"GIW_1 needs n > 2; got n={n}.")
    if not (a > 0 and s > 0):
        raise ParameterError("a and s must be positive.")
    g = _check_rng(rng).gamma((n - 2) / 2, 2.0, size=size)
    return s * a / g


def gw_sample_p1(dof: float, alpha: float, sigma: float, rng, size=None):
    """Draw scalar `GW_1(dof, alpha, sigma)` variates, i.e.
    `alpha sigma chi^2_dof`."""
    if not dof > 0:
        raise ParameterError(f"GW_1 needs dof > 0; got {dof}.")
    if not (alpha > 0 and sigma > 0):
        raise ParameterError("alpha and sigma must be positive.")
    return alpha * sigma * _check_rng(rng).chisquare(dof, size=size)


EstimatorFn = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


def mode_or_tilde(n: float, A: np.ndarray, S: np.ndarray) -> np.ndarray:
    """`giw_mode`, falling back to `guarded_estimate` when the solve fails."""
    try:
        return giw_mode(GiwParams(n, A, S))
    except (NumericalFailure, ParameterError) as e:
        utils.warn(f"GIW mode failed ({e}); using the guarded (AS + SA)/(2n).")
        return guarded_estimate(n, A, S)


# The filter's `tilde` is the guarded average.
ESTIMATORS = {"tilde": guarded_estimate, "mode": mode_or_tilde}
