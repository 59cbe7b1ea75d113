"""Dense symmetric-matrix kernels.

All functions are pure and return new arrays.
"""

from typing import Tuple

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from gilevel.errors import ShapeError, SingularityError

SYMMETRY_TOL = 1e-12
# Inputs within this relative asymmetry are symmetrized silently.
LOOSE_SYMMETRY_TOL = 1e-6


def _square(M: np.ndarray, name: str = "matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ShapeError(f"Expected a square {name}, got shape {M.shape}.")
    return M


def asymmetry(M: np.ndarray) -> float:
    """Largest absolute asymmetry relative to `1 + max|M|`."""
    M = _square(M)
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(M - M.T)) / (1.0 + np.max(np.abs(M))))


def symmetrize(M: np.ndarray, strict: bool = False) -> np.ndarray:
    """Return `(M + M')/2`.

    Inputs are rejected when their asymmetry exceeds 1e-12 (strict) or 1e-6
    relative to `1 + max|M|`.
    """
    M = _square(M)
    tol = SYMMETRY_TOL if strict else LOOSE_SYMMETRY_TOL
    if asymmetry(M) > tol:
        raise ShapeError(
            f"Matrix is not symmetric (relative asymmetry {asymmetry(M):.3g} > {tol:g})."
        )
    return 0.5 * (M + M.T)


def sym_eigh(M: np.ndarray, strict: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    return np.linalg.eigh(symmetrize(M, strict=strict))


def sym_sqrt(M: np.ndarray, strict: bool = False) -> np.ndarray:
    """The symmetric square root. Negative eigenvalues are clamped at 0."""
    w, V = sym_eigh(M, strict=strict)
    R = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
    return 0.5 * (R + R.T)


def sym_sqrt_and_inv(M: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """`M^{1/2}` and `M^{-1/2}` from a single eigendecomposition."""
    w, V = sym_eigh(M)
    if w[0] <= 0:
        raise SingularityError(
            "Inverse square root requires a positive definite matrix "
            f"(smallest eigenvalue {w[0]:.3g})."
        )
    root = np.sqrt(w)
    R = (V * root) @ V.T
    R_inv = (V / root) @ V.T
    return 0.5 * (R + R.T), 0.5 * (R_inv + R_inv.T)


def chol_upper(M: np.ndarray) -> np.ndarray:
    """Upper Cholesky factor `U` with `U'U = M` and a positive diagonal.

    A non-positive pivot raises `SingularityError` with its 1-based index.
    """
    M = symmetrize(M)
    if M.size == 0:
        return M.copy()
    U, info = lapack.dpotrf(M, lower=0, clean=1)
    if info > 0:
        raise SingularityError(
            f"Matrix is not positive definite (leading minor {info} is not positive).",
            pivot=int(info),
        )
    if info < 0:
        raise ValueError(f"Illegal argument {-info} passed to dpotrf.")
    return np.triu(U)


def is_pd(M: np.ndarray) -> bool:
    try:
        chol_upper(M)
    except (SingularityError, ShapeError):
        return False
    return True


def nearest_pd(M: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    """Replace eigenvalues below `floor` by `floor`.

    Matrices whose smallest eigenvalue is already at least `floor` are returned
    unchanged (as a copy).
    """
    M = symmetrize(M)
    if M.size == 0:
        return M.copy()
    w, V = np.linalg.eigh(M)
    if w[0] >= floor:
        return M.copy()
    R = (V * np.maximum(w, floor)) @ V.T
    R = 0.5 * (R + R.T)
    # Reconstruction can land a few ulps of ||M|| below the floor.
    nudge = 4 * len(R) * np.finfo(float).eps * max(float(np.abs(w).max()), floor)
    while True:
        shortfall = floor - np.linalg.eigvalsh(R)[0]
        if shortfall <= 0:
            return R
        R = R + (shortfall + nudge) * np.eye(len(R))
        nudge *= 2


def kron(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.kron(np.atleast_2d(A), np.atleast_2d(B))


def vec(M: np.ndarray) -> np.ndarray:
    """Stack the columns of `M`."""
    return np.asarray(M, dtype=float).reshape(-1, order="F")


def unvec(v: np.ndarray, rows: int, cols: int = None) -> np.ndarray:
    cols = rows if cols is None else cols
    v = np.asarray(v, dtype=float).ravel()
    if v.size != rows * cols:
        raise ShapeError(f"Cannot reshape {v.size} entries to {rows}×{cols}.")
    return v.reshape(rows, cols, order="F")


def vech(M: np.ndarray) -> np.ndarray:
    """Stack the lower triangle of `M` column by column."""
    M = _square(M)
    # The upper triangle of M' in row-major order is the lower triangle of M in
    # column-major order.
    return M.T[np.triu_indices(len(M))]


def unvech(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float).ravel()
    p = int(round((np.sqrt(8 * v.size + 1) - 1) / 2))
    if p * (p + 1) // 2 != v.size:
        raise ShapeError(f"{v.size} is not a triangular number.")
    M = np.zeros((p, p))
    M.T[np.triu_indices(p)] = v
    return M + np.tril(M, -1).T


def duplication_matrix(p: int) -> np.ndarray:
    """`D` with `D @ vech(M) == vec(M)` for symmetric `M`."""
    q = p * (p + 1) // 2
    D = np.zeros((p * p, q))
    for k in range(q):
        e = np.zeros(q)
        e[k] = 1.0
        D[:, k] = vec(unvech(e))
    return D


def frobenius(A: np.ndarray, B: np.ndarray) -> float:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape != B.shape:
        raise ShapeError(f"Shapes {A.shape} and {B.shape} do not match.")
    return float(np.linalg.norm(A - B, "fro"))


def logdet(M: np.ndarray) -> float:
    """`log|M|` of a positive definite matrix, from its Cholesky factor.

    Matrices that are not positive definite raise `SingularityError`, even when
    their determinant is positive.
    """
    U = chol_upper(M)
    return 2.0 * float(np.sum(np.log(np.diag(U))))


def spd_inv(M: np.ndarray) -> np.ndarray:
    """Inverse of a positive definite matrix via its Cholesky factor."""
    U = chol_upper(M)
    U_inv = scipy.linalg.solve_triangular(U, np.eye(len(U)), lower=False)
    inv = U_inv @ U_inv.T
    return 0.5 * (inv + inv.T)


def commute_residual(A: np.ndarray, B: np.ndarray) -> float:
    """`||AB - BA||_F / ||AB||_F` (0 when `AB` vanishes)."""
    AB = A @ B
    norm = np.linalg.norm(AB, "fro")
    if norm == 0:
        return 0.0
    return float(np.linalg.norm(AB - B @ A, "fro") / norm)
