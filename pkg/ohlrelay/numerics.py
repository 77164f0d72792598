import logging
import math
import sys
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate as sp_integrate
from scipy.special import erfc, gammainc, gammaln, lambertw, logsumexp

from ohlrelay.errors import (DomainError, NoRealSolutionError,
                             QuadratureAccuracyError)

logger = logging.getLogger(__name__)
handler = logging.StreamHandler(sys.stdout)
formatter = logging.Formatter(
    '[%(asctime)s] %(module)s.%(funcName)s %(levelname)s: %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S')
handler.setFormatter(formatter)
logger.addHandler(handler)
logger.setLevel(logging.INFO)

# three-term exponential fit of the Gaussian tail
Q_APPROX_A = (5.0 / 24.0, 4.0 / 24.0, 1.0 / 24.0)
Q_APPROX_B = (2.0, 11.0 / 20.0, 0.5)

INV_E = math.exp(-1.0)
_BRANCH_SLACK = 1e-15
_SQRT2 = math.sqrt(2.0)
_GAMMA_EPS = 1e-16
_GAMMA_MAX_ITER = 100000


@dataclass(frozen=True)
class QuadratureSpec:
    """
    Accuracy contract handed to :func:`integrate`.

    Args:
        abs_tol (float): absolute tolerance.
        rel_tol (float): relative tolerance.
        max_subdivisions (int): QUADPACK subinterval limit.
    """
    abs_tol: float = 1e-12
    rel_tol: float = 1e-9
    max_subdivisions: int = 200

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise DomainError(
                f"Quadrature tolerances must be positive, got {self.abs_tol}, {self.rel_tol}.")
        if int(self.max_subdivisions) < 1:
            raise DomainError(
                f"max_subdivisions must be >= 1, got {self.max_subdivisions}.")
        object.__setattr__(self, "max_subdivisions", int(self.max_subdivisions))


class RngStream:
    """
    Reproducible random stream keyed by ``(seed, stream_id)``.

    The generator is a counter-based Philox seeded through
    :class:`numpy.random.SeedSequence`, so streams with different ids (or
    different child paths) are independent and the samples a stream produces
    do not depend on which process draws them.

    Example:
        >>> stream = RngStream(seed=7, stream_id=0)
        >>> batch = stream.child(3).generator.normal(size=4)
    """
    def __init__(self, seed: int, stream_id: int = 0, path: Tuple[int, ...] = ()):
        if int(seed) < 0 or int(stream_id) < 0:
            raise DomainError(
                f"seed and stream_id must be non-negative, got {seed}, {stream_id}.")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.path = tuple(int(p) for p in path)
        self._generator = None

    @property
    def spawn_key(self) -> Tuple[int, ...]:
        return (self.stream_id, ) + self.path

    @property
    def generator(self) -> np.random.Generator:
        if self._generator is None:
            sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=self.spawn_key)
            self._generator = np.random.Generator(np.random.Philox(sequence))
        return self._generator

    def child(self, index: int) -> "RngStream":
        """Independent sub-stream, e.g. one per Monte-Carlo batch."""
        if int(index) < 0:
            raise DomainError(f"Child index must be non-negative, got {index}.")
        return RngStream(self.seed, self.stream_id, self.path + (int(index), ))

    def __getstate__(self):
        # the generator is rebuilt lazily in worker processes
        return {"seed": self.seed, "stream_id": self.stream_id, "path": self.path}

    def __setstate__(self, state):
        self.__init__(state["seed"], state["stream_id"], state["path"])

    def __eq__(self, other):
        if not isinstance(other, RngStream):
            return NotImplemented
        return self.seed == other.seed and self.spawn_key == other.spawn_key

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, path={self.path})"


def q_exact(x):
    """
    Gaussian tail probability Q(x) = P(Z > x).

    Args:
        x (float | np.ndarray): argument.

    Returns:
        float | np.ndarray: ``0.5 * erfc(x / sqrt(2))``.
    """
    value = 0.5 * erfc(np.asarray(x, dtype=float) / _SQRT2)
    if np.ndim(value) == 0:
        return float(value)
    return value


def q_approx3(x):
    """
    Three-term exponential approximation of the Gaussian tail.

    Args:
        x (float | np.ndarray): non-negative argument.

    Returns:
        float | np.ndarray: ``sum(a_j * exp(-b_j * x**2))``.

    Raises:
        DomainError: for negative arguments.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("q_approx3 is a tail approximation, x must be >= 0.")
    x2 = x * x
    value = sum(a * np.exp(-b * x2) for a, b in zip(Q_APPROX_A, Q_APPROX_B))
    if np.ndim(value) == 0:
        return float(value)
    return value


def q_approx3_relative_error(x: float) -> float:
    exact = q_exact(x)
    return abs(q_approx3(x) - exact) / exact


def _lower_gamma_series(s: float, x: float) -> float:
    # log of gamma(s, x); valid and fast for x < s + 1
    term = 1.0 / s
    total = term
    ap = s
    for _ in range(_GAMMA_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _GAMMA_EPS:
            return math.log(total) - x + s * math.log(x)
    raise RuntimeError(f"Incomplete gamma series did not converge for s={s}, x={x}.")


def log_lower_incomplete_gamma(s: float, x: float) -> float:
    """Natural log of the lower incomplete gamma function; ``-inf`` at x = 0."""
    if not s > 0:
        raise DomainError(f"Incomplete gamma requires s > 0, got {s}.")
    if x < 0:
        raise DomainError(f"Incomplete gamma requires x >= 0, got {x}.")
    if x == 0:
        return -math.inf
    regularized = float(gammainc(s, x))
    if regularized > 0.0:
        return float(gammaln(s)) + math.log(regularized)
    logger.debug("Regularized gamma underflows at s=%g, x=%g; summing the series.", s, x)
    return _lower_gamma_series(s, x)


def lower_incomplete_gamma(s: float, x: float) -> float:
    """
    Lower incomplete gamma function.

    Regularized ``scipy.special.gammainc`` scaled by the complete gamma
    function, with a power series where the regularized value underflows.

    Args:
        s (float): shape, strictly positive.
        x (float): upper integration limit, non-negative.

    Returns:
        float: integral of ``t**(s-1) * exp(-t)`` over ``[0, x]``.

    Raises:
        DomainError: if ``s <= 0`` or ``x < 0``.

    Example:
        >>> round(lower_incomplete_gamma(1.0, 0.7), 5)
        0.50341
    """
    return math.exp(log_lower_incomplete_gamma(s, x))


def lambert_w(x: float, branch: str = "principal") -> float:
    """
    Real branches of the Lambert W function.

    Args:
        x (float): argument, ``x >= -1/e``.
        branch (str): ``"principal"`` (W0) or ``"minus_one"`` (W-1, only for
            ``-1/e <= x < 0``).

    Returns:
        float: ``w`` such that ``w * exp(w) == x``.

    Raises:
        NoRealSolutionError: for ``x < -1/e``.
        DomainError: for an unknown branch or ``x >= 0`` on ``minus_one``.
    """
    if branch not in ("principal", "minus_one"):
        raise DomainError(f"Unknown Lambert W branch: {branch}.")
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"Lambert W argument must be finite, got {x}.")
    if x < -INV_E - _BRANCH_SLACK:
        raise NoRealSolutionError(f"No real Lambert W solution for x = {x} < -1/e.")
    principal = branch == "principal"
    if not principal and x >= 0:
        raise DomainError(f"The minus_one branch is defined on [-1/e, 0), got {x}.")
    if x <= -INV_E:
        return -1.0
    if principal and x == 0:
        return 0.0
    return float(lambertw(x, 0 if principal else -1).real)


def integrate(f: Callable[[float], float],
              a: float,
              b: float,
              spec: Optional[QuadratureSpec] = None,
              singular_power: Optional[float] = None,
              points: Optional[Sequence[float]] = None) -> float:
    """
    Adaptive Gauss-Kronrod quadrature with an accuracy contract.

    An integrable endpoint singularity of type ``(h - a)**(gamma - 1)`` is
    removed by passing ``singular_power=gamma``: the integral is taken in
    ``u = ((h - a) / (b - a))**gamma``, where the integrand becomes bounded.
    Infinite upper limits are mapped to a finite interval by QUADPACK.

    Args:
        f (Callable): scalar integrand.
        a (float): lower limit.
        b (float): upper limit, may be ``inf``.
        spec (QuadratureSpec): tolerances; defaults apply when ``None``.
        singular_power (float): exponent ``gamma`` of the endpoint behaviour.
        points (Sequence[float]): interior break points in ``h``.

    Returns:
        float: integral estimate.

    Raises:
        DomainError: if ``a > b`` or a singular substitution is asked on an
            infinite interval.
        QuadratureAccuracyError: tolerance not met; carries the best estimate.
    """
    spec = spec or QuadratureSpec()
    if a > b:
        raise DomainError(f"Integration limits reversed: a={a} > b={b}.")
    if a == b:
        return 0.0

    integrand = f
    lower, upper = a, b
    breaks = list(points) if points else None
    if singular_power is not None:
        if singular_power <= 0:
            raise DomainError(f"singular_power must be positive, got {singular_power}.")
        if not math.isfinite(b):
            raise DomainError("Singular substitution needs a finite interval.")
        width = b - a
        inv = 1.0 / singular_power

        def integrand(u):
            return f(a + width * u**inv) * width * inv * u**(inv - 1.0)

        lower, upper = 0.0, 1.0
        if breaks:
            breaks = [((p - a) / width)**singular_power for p in breaks]
    if breaks is not None:
        breaks = [p for p in breaks if lower < p < upper]
        if not breaks or not math.isfinite(upper):
            breaks = None

    out = sp_integrate.quad(integrand,
                            lower,
                            upper,
                            epsabs=spec.abs_tol,
                            epsrel=spec.rel_tol,
                            limit=spec.max_subdivisions,
                            points=breaks,
                            full_output=1)
    value, abserr = out[0], out[1]
    if len(out) > 3 and abserr > max(spec.abs_tol, spec.rel_tol * abs(value)):
        raise QuadratureAccuracyError(
            f"Quadrature on [{a}, {b}] did not converge: {out[3]}", value, abserr)
    return value


def log_integrate(logf: Callable[[np.ndarray], np.ndarray],
                  a: float,
                  b: float,
                  nodes: int = 512) -> float:
    """Log of the integral of ``exp(logf)`` on ``[a, b]``, never underflowing."""
    t, weights = np.polynomial.legendre.leggauss(nodes)
    half = 0.5 * (b - a)
    x = a + half * (t + 1.0)
    return float(logsumexp(logf(x), b=weights * half))
