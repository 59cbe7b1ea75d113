"""The Riccati recursion of the level's scale matrix and its limit.

With `P_0 = p_0 I` every iterate is a matrix function of `W`, so the limit and
its inverse map are evaluated in the eigenbasis of `W` (respectively `P`).
"""

import dataclasses
import functools
from typing import Optional, Tuple

import numpy as np

from gilevel.errors import DomainError, NumericalFailure
from gilevel.stats import matrix

FIXED_POINT_TOL = 1e-8
ITERATION_TOL = 1e-12
MAX_ITERATIONS = 10_000


def p_step(P_prev: np.ndarray, phi: float, W: np.ndarray) -> np.ndarray:
    """`R (R + I)^{-1}` with `R = phi^2 P_prev + W`."""
    R = phi ** 2 * np.asarray(P_prev, dtype=float) + np.asarray(W, dtype=float)
    R = 0.5 * (R + R.T)
    # R and R + I commute, so the left solve equals R (R + I)^{-1}.
    P = np.linalg.solve(R + np.eye(len(R)), R)
    return 0.5 * (P + P.T)


def p_iterate(
    phi: float,
    W: np.ndarray,
    P0: Optional[np.ndarray] = None,
    tol: float = ITERATION_TOL,
    max_iter: int = MAX_ITERATIONS,
) -> Tuple[np.ndarray, int]:
    """Iterate `p_step` from `P0` (default `I`) until successive iterates differ
    by at most `tol` in Frobenius norm. Returns the limit and the step count."""
    W = matrix.symmetrize(W)
    P = np.eye(len(W)) if P0 is None else np.asarray(P0, dtype=float)
    for i in range(1, max_iter + 1):
        P_next = p_step(P, phi, W)
        if matrix.frobenius(P_next, P) <= tol:
            return P_next, i
        P = P_next
    raise NumericalFailure(
        f"Riccati iteration did not converge in {max_iter} steps.",
        residual=matrix.frobenius(p_step(P, phi, W), P),
    )


def p_limit(phi: float, W: np.ndarray) -> np.ndarray:
    """The positive definite root of `phi^2 P^2 + P (W + (1 - phi^2) I) - W = 0`.

    Per eigenvalue `w` of `W` this is `2w / (sqrt(m^2 + 4 phi^2 w) + m)` with
    `m = w + 1 - phi^2`; `phi = 0` gives `W (W + I)^{-1}`. If the fixed-point
    residual exceeds 1e-8 the recursion is iterated instead.
    """
    w, V = matrix.sym_eigh(W)
    if w[0] <= 0:
        raise DomainError(
            f"W must be positive definite (smallest eigenvalue {w[0]:.3g})."
        )
    m = w + 1.0 - phi ** 2
    discriminant = m ** 2 + 4.0 * phi ** 2 * w
    if np.any(discriminant <= 0):
        raise NumericalFailure("Steady-state discriminant is not positive definite.")
    pi = 2.0 * w / (np.sqrt(discriminant) + m)
    P = (V * pi) @ V.T
    P = 0.5 * (P + P.T)

    W = matrix.symmetrize(W)
    if matrix.frobenius(p_step(P, phi, W), P) > FIXED_POINT_TOL:
        P, _ = p_iterate(phi, W, P0=P)
    return P


def w_from_p(P: np.ndarray, phi: float) -> np.ndarray:
    """Invert `p_limit`: `W = (I - P)^{-1} (phi^2 P^2 + (1 - phi^2) P)`."""
    pi, V = matrix.sym_eigh(P)
    if np.any(pi >= 1.0 - 1e-14) or np.any(pi <= 0):
        raise DomainError(
            "The eigenvalues of P must lie in (0, 1) so that I - P is non-singular "
            f"and W positive definite; got [{pi[0]:.6g}, {pi[-1]:.6g}]."
        )
    w = (phi ** 2 * pi ** 2 + (1.0 - phi ** 2) * pi) / (1.0 - pi)
    W = (V * w) @ V.T
    return 0.5 * (W + W.T)


@dataclasses.dataclass(frozen=True)
class SteadyState:
    P: np.ndarray
    Q: np.ndarray
    phi: float
    W: np.ndarray

    @classmethod
    def from_w(cls, phi: float, W: np.ndarray) -> "SteadyState":
        W = matrix.symmetrize(np.atleast_2d(np.asarray(W, dtype=float)))
        P = p_limit(phi, W)
        Q = P + W + np.eye(len(W))
        return cls(P=P, Q=0.5 * (Q + Q.T), phi=float(phi), W=W)

    @property
    def p(self) -> int:
        return len(self.P)

    @functools.cached_property
    def Q_inv(self) -> np.ndarray:
        return matrix.spd_inv(self.Q)
