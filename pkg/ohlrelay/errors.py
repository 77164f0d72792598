"""Exceptions raised across ohlrelay.

Every class derives from the builtin a caller would expect (``ValueError`` for
bad inputs, ``RuntimeError`` for numerical failures) and from
:class:`OHLRelayError`, whose ``exit_code`` the command line maps to the
process status.
"""

from typing import Iterable, Optional, Tuple


class OHLRelayError(Exception):
    """Base class of all ohlrelay errors."""
    exit_code = 1


class DomainError(OHLRelayError, ValueError):
    """Argument outside the domain of a function or a type invariant."""
    exit_code = 2


class NoRealSolutionError(DomainError):
    """Lambert W argument below the branch point -1/e."""


class ConfigError(OHLRelayError, ValueError):
    """Invalid or unknown configuration key."""
    exit_code = 2


class QuadratureAccuracyError(OHLRelayError, RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""
    def __init__(self, message: str, estimate: float, abserr: float):
        super().__init__(message)
        self.estimate = estimate
        self.abserr = abserr


class StationarityInfeasibleError(OHLRelayError, RuntimeError):
    """The threshold stationarity integral is >= 1, no positive root."""
    exit_code = 3


class NoInteriorOptimumError(OHLRelayError, RuntimeError):
    """The Lambert W argument for the beam width falls below -1/e."""
    exit_code = 3


class SurrogateRegimeError(OHLRelayError, ValueError):
    """The approximate OHL error model is evaluated outside base < 1."""
    exit_code = 3


class InfeasibleTargetError(OHLRelayError, ValueError):
    """Requested beam width cannot be produced by the lens system."""
    exit_code = 3

    def __init__(self, message: str, achievable: Optional[Tuple[float, float]] = None):
        super().__init__(message)
        self.achievable = achievable


class FocalRangeError(OHLRelayError, ValueError):
    """Focal length or voltage outside the calibrated lens range."""
    exit_code = 3


class CorridorTooNarrowError(OHLRelayError, ValueError):
    """Great-circle corridor selected no satellites."""
    exit_code = 3


class NoRouteError(OHLRelayError, RuntimeError):
    """Source and destination are disconnected in the link graph."""
    exit_code = 3

    def __init__(self, message: str, frontier: Iterable[int] = ()):
        super().__init__(message)
        self.frontier = sorted(frontier)


class IntegrityError(OHLRelayError, ValueError):
    """Snapshot and route documents disagree, or a route breaks a link limit."""
    exit_code = 4


class ValidationFailure(OHLRelayError, RuntimeError):
    """At least one oracle comparison failed."""
    exit_code = 4
