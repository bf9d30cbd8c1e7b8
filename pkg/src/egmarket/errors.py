"""Exception hierarchy shared by all egmarket modules."""

from __future__ import annotations

import numpy as np


class MarketError(Exception):
    """Base class for all egmarket errors."""


class DimensionMismatch(MarketError):
    """Input arrays have inconsistent shapes."""


class InvariantViolation(MarketError):
    """A validated quantity is outside its admissible range."""


class BadFamilyParams(MarketError):
    """Distribution-family parameters are malformed."""


class IndexOutOfRange(MarketError, IndexError):
    """Buyer or item index outside the instance."""


class BadParams(MarketError):
    """Scalar parameters of an online agent are malformed."""


class EmptyMarket(MarketError):
    """An auction was run with no participating agents."""


class StreamMismatch(MarketError):
    """Trace and benchmark were computed on different value streams."""


class NumericalBreakdown(MarketError):
    """Simplex pivoting could not continue (all candidate pivots ~ 0)."""


class NoConvergence(MarketError):
    """Dual solve hit its epoch budget before meeting the tolerance.

    The best iterate found so far is attached as ``best_w`` so callers can
    inspect or reuse it.
    """

    def __init__(self, message: str, best_w: np.ndarray | None = None):
        super().__init__(message)
        self.best_w = best_w


class TieResolutionInfeasible(MarketError):
    """The tie-splitting feasibility system has no solution.

    Carries the Farkas row certificate of the infeasible system; this
    normally means the supplied multipliers are outside tolerance of the
    dual optimum.
    """

    def __init__(self, message: str, certificate: np.ndarray | None = None):
        super().__init__(message)
        self.certificate = certificate
