"""Exceptions raised by gilevel.

Each failure kind also derives from the closest builtin, so callers that only
know about `ValueError` or `numpy.linalg.LinAlgError` still catch them.
"""

from typing import Optional, Sequence

import numpy as np


class GilevelError(Exception):
    pass


class ShapeError(GilevelError, ValueError):
    """Dimension mismatch, or a matrix that should be symmetric is not."""


class SingularityError(GilevelError, np.linalg.LinAlgError):
    """A matrix required to be positive definite is not."""

    def __init__(self, message: str, pivot: Optional[int] = None):
        super().__init__(message)
        self.pivot = pivot


class ParameterError(GilevelError, ValueError):
    """Hyperparameter out of range, e.g. `n <= 2p` or a discount factor outside
    `(0, 1]`."""


class DomainError(GilevelError, ValueError):
    """Input outside the domain of a map, e.g. `P` with an eigenvalue of 1."""


class NumericalFailure(GilevelError, ArithmeticError):
    """A solver terminated without meeting its tolerance."""

    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message)
        self.residual = residual


class DataError(GilevelError, ValueError):
    """Malformed input data."""

    def __init__(
        self,
        message: str,
        row: Optional[int] = None,
        col: Optional[int] = None,
        line: Optional[int] = None,
    ):
        super().__init__(message)
        self.row = row
        self.col = col
        self.line = line


class EstimationError(GilevelError, RuntimeError):
    """Hyperparameter estimation diverged."""

    def __init__(self, message: str, trace: Sequence = ()):
        super().__init__(message)
        self.trace = list(trace)
