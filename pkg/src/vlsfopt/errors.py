"""Exception types shared across the package."""

from __future__ import annotations


class VlsfError(Exception):
    """Base class for all errors raised by this package."""


class OutOfConvergenceRegion(VlsfError):
    """A cumulant generating function was evaluated outside its convergence strip."""

    def __init__(self, s: float, limit: float) -> None:
        super().__init__(
            f"tilt s={s!r} lies outside the open convergence region |s| < {limit!r}"
        )
        self.s = s
        self.limit = limit


class LatticePointOutOfSupport(VlsfError):
    """A lattice-law operation was asked for a point outside the open support range."""


class UnsupportedLaw(VlsfError):
    """The requested operation does not apply to this information-density law."""


class EmptyGrid(VlsfError):
    """An exhaustive search was started on a grid with no candidate points."""


class Infeasible(VlsfError):
    """No schedule satisfies the error budget within the configured size limits.

    Attributes:
        n_last: largest final decoding instant that was tried before giving up.
    """

    def __init__(self, message: str, n_last: int | None = None) -> None:
        super().__init__(message)
        self.n_last = n_last
