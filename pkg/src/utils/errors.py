"""Exception hierarchy shared by the gridflex packages."""

from __future__ import annotations


class GridflexError(Exception):
    """Base class for every error raised by gridflex."""


class NetworkValidationError(GridflexError, ValueError):
    """Raised when network data violates the schema or a topology invariant."""


class SingularMatrixError(GridflexError, ArithmeticError):
    """Raised when a linear system has a pivot below the singularity threshold."""


class ConvergenceError(GridflexError, RuntimeError):
    """Raised when an iterative solver stops without meeting its tolerance.

    Attributes:
        iterations: Number of iterations performed.
        mismatch: Final mismatch (infinity norm) when the solver gave up.
        step: Scheduling step the failure belongs to, if any.
    """

    def __init__(
        self,
        message: str,
        *,
        iterations: int = 0,
        mismatch: float = float("nan"),
        step: int | None = None,
    ):
        super().__init__(message)
        self.iterations = iterations
        self.mismatch = mismatch
        self.step = step


class InfeasibleModelError(GridflexError, ValueError):
    """Raised when a linear model or envelope admits no feasible point."""


class InstanceTooLargeError(GridflexError, ValueError):
    """Raised when an exact projection is requested on too many variables."""


class BracketError(GridflexError, RuntimeError):
    """Raised when a root finder cannot bracket a sign change."""
