"""
Liquid-lens beam-width control.

A Gaussian beam with waist ``w0`` at a tunable lens of focal length ``F``
propagates a distance ``L'`` to a fixed output lens. The beam radius there
is ``w(F)**2 = w0**2 * ((L'/z_R)**2 + (1 - L'/F)**2)``, so it has a single
minimum at ``F = L'`` and two monotone branches: ``converging`` (``F < L'``)
and ``diverging`` (``F > L'``).
"""

import logging
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Tuple

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from ohlrelay.errors import (DomainError, FocalRangeError,
                             InfeasibleTargetError)

logger = logging.getLogger(__name__)
handler = logging.StreamHandler(sys.stdout)
formatter = logging.Formatter(
    '[%(asctime)s] %(module)s.%(funcName)s %(levelname)s: %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S')
handler.setFormatter(formatter)
logger.addHandler(handler)
logger.setLevel(logging.INFO)

BRANCHES = ("auto", "diverging", "converging")
IDENTITY_CALIBRATION = Path(__file__).parent / "data" / "lens_identity.txt"
SMALL_ANGLE_LIMIT = 0.1
_ROOT_RTOL = 1e-15


@dataclass(frozen=True)
class LensSystem:
    """
    Liquid lens followed by a fixed output lens.

    Args:
        input_waist_w0 (float): Gaussian waist at the liquid lens, meters.
        spacing_Lprime (float): distance to the output lens, meters.
        focal_range (Tuple[float, float]): attainable focal lengths, meters.
        wavelength (float): optical wavelength, meters.
        response_time (float): lens settling time, seconds. Metadata only.
    """
    input_waist_w0: float = 2e-3
    spacing_Lprime: float = 40e-3
    focal_range: Tuple[float, float] = (15e-3, 60e-3)
    wavelength: float = 1550e-9
    response_time: float = 5e-3
    rayleigh_zR: float = field(init=False)

    def __post_init__(self):
        for name in ("input_waist_w0", "spacing_Lprime", "wavelength", "response_time"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)}.")
        f_min, f_max = (float(f) for f in self.focal_range)
        if not 0 < f_min < f_max:
            raise DomainError(f"focal_range must satisfy 0 < min < max, got {self.focal_range}.")
        object.__setattr__(self, "focal_range", (f_min, f_max))
        object.__setattr__(self, "rayleigh_zR", math.pi * self.input_waist_w0**2 / self.wavelength)

    @property
    def free_space_radius(self) -> float:
        """Beam radius at the output lens without any focusing."""
        return self.input_waist_w0 * math.hypot(1.0, self.spacing_Lprime / self.rayleigh_zR)


@dataclass(frozen=True)
class LensSolution:
    focal_length_F: float
    target_wLprime: float
    target_divergence: float
    forward_residual: float
    branch: str
    closed_form_F: float = math.nan


def divergence_for_target(wi_star: float, L: float) -> float:
    """
    Transmit divergence that yields the beam width ``wi_star`` at distance ``L``.

    Example:
        >>> divergence_for_target(400.0, 1000e3)
        0.0004
    """
    if not (wi_star > 0 and L > 0):
        raise DomainError(f"Beam width and distance must be positive, got {wi_star}, {L}.")
    theta = wi_star / L
    if theta > SMALL_ANGLE_LIMIT:
        warnings.warn(f"Divergence {theta:.3g} rad is outside the small-angle regime.", RuntimeWarning)
    return theta


def waist_for_divergence(theta: float, wavelength: float = 1550e-9) -> float:
    """Far-field waist ``lambda / (pi theta)`` producing divergence ``theta``."""
    if not theta > 0:
        raise DomainError(f"Divergence must be positive, got {theta}.")
    return wavelength / (math.pi * theta)


def propagate_q(system: LensSystem, F: float) -> Tuple[float, float]:
    """
    Beam radius and wavefront curvature at the output lens.

    The complex beam parameter ``q0 = i z_R`` at the liquid lens goes through
    the ray matrix of a thin lens followed by free space. ``F = inf`` means
    no lens.

    Args:
        system (LensSystem): optical train.
        F (float): liquid-lens focal length, meters, non-zero.

    Returns:
        Tuple[float, float]: radius in meters and curvature ``Re(1/q)`` in 1/m.
    """
    if F == 0:
        raise DomainError("Focal length must be non-zero.")
    power = 0.0 if math.isinf(F) else 1.0 / F
    lens = np.array([[1.0, 0.0], [-power, 1.0]])
    space = np.array([[1.0, system.spacing_Lprime], [0.0, 1.0]])
    (a, b), (c, d) = space @ lens
    q0 = 1j * system.rayleigh_zR
    inv_q = (c * q0 + d) / (a * q0 + b)
    radius = math.sqrt(-system.wavelength / (math.pi * inv_q.imag))
    return radius, float(inv_q.real)


def _branch_interval(system: LensSystem, branch: str) -> Tuple[float, float]:
    f_min, f_max = system.focal_range
    if branch == "diverging":
        return max(f_min, system.spacing_Lprime), f_max
    return f_min, min(f_max, system.spacing_Lprime)


def _analytic_roots(system: LensSystem, target: float) -> dict:
    # roots of w(F) = target over the whole real line, per branch
    g2 = (target / system.input_waist_w0)**2 - (system.spacing_Lprime / system.rayleigh_zR)**2
    g = math.sqrt(max(g2, 0.0))
    lp = system.spacing_Lprime
    return {"diverging": math.inf if g >= 1.0 else lp / (1.0 - g), "converging": lp / (1.0 + g)}


def achievable_radii(system: LensSystem) -> Tuple[float, float]:
    """Smallest and largest output-lens beam radius over the focal range."""
    f_min, f_max = system.focal_range
    ends = [propagate_q(system, f_min)[0], propagate_q(system, f_max)[0]]
    if f_min <= system.spacing_Lprime <= f_max:
        ends.append(propagate_q(system, system.spacing_Lprime)[0])
    return min(ends), max(ends)


def _solve_on_branch(system: LensSystem, target: float, branch: str) -> float:
    lo, hi = _branch_interval(system, branch)
    if lo >= hi:
        raise FocalRangeError(f"The {branch} branch does not intersect the focal range {system.focal_range}.")

    def residual(F):
        return propagate_q(system, F)[0] - target

    r_lo, r_hi = residual(lo), residual(hi)
    if r_lo == 0:
        return lo
    if r_hi == 0:
        return hi
    if np.sign(r_lo) == np.sign(r_hi):
        root = _analytic_roots(system, target)[branch]
        raise FocalRangeError(
            f"Focal length {root:.6g} m for a {target:.6g} m beam lies outside "
            f"{system.focal_range} on the {branch} branch.")
    return brentq(residual, lo, hi, xtol=1e-18, rtol=_ROOT_RTOL, maxiter=200)


def closed_form_focal_length(system: LensSystem, target_wLprime: float) -> float:
    """
    Older closed-form focal length, kept for comparison.

    Evaluated literally with ``K = pi w**2 z_R / lambda``:
    ``F = (2 L' + K + sqrt((2 L' + K)**2 - 4 (L'**2 + z_R**2))) / 2``. The
    expression mixes units and disagrees with :func:`solve_focal_length`; it
    is kept to report the discrepancy. Returns NaN when the root is complex.
    """
    lp = system.spacing_Lprime
    k = math.pi * target_wLprime**2 * system.rayleigh_zR / system.wavelength
    disc = (2.0 * lp + k)**2 - 4.0 * (lp**2 + system.rayleigh_zR**2)
    if disc < 0:
        return math.nan
    return 0.5 * (2.0 * lp + k + math.sqrt(disc))


def solve_focal_length(system: LensSystem, target_wLprime: float, branch: str = "auto") -> LensSolution:
    """
    Focal length producing ``target_wLprime`` at the output lens.

    Bracketed root search of :func:`propagate_q` on one monotone branch. With
    ``branch="auto"`` the diverging branch is tried first, then the
    converging one.

    Args:
        system (LensSystem): optical train.
        target_wLprime (float): requested beam radius at the output lens, meters.
        branch (str): ``auto``, ``diverging`` or ``converging``.

    Returns:
        LensSolution: focal length, round-trip residual and, for comparison,
        the older closed-form value.

    Raises:
        InfeasibleTargetError: the target is below the smallest radius the
            focal range can produce.
        FocalRangeError: the root lies outside the focal range.
    """
    if branch not in BRANCHES:
        raise DomainError(f"Unknown branch {branch}; expected one of {BRANCHES}.")
    if not target_wLprime > 0:
        raise DomainError(f"Target beam radius must be positive, got {target_wLprime}.")
    smallest, largest = achievable_radii(system)
    if target_wLprime < smallest:
        raise InfeasibleTargetError(
            f"Target {target_wLprime:.6g} m is below the smallest achievable radius {smallest:.6g} m.",
            achievable=(smallest, largest))

    order = ("diverging", "converging") if branch == "auto" else (branch, )
    failures = []
    for name in order:
        try:
            focal = _solve_on_branch(system, target_wLprime, name)
        except FocalRangeError as err:
            logger.debug("No root on the %s branch: %s", name, err)
            failures.append(str(err))
            continue
        radius, _ = propagate_q(system, focal)
        residual = abs(radius - target_wLprime) / target_wLprime
        return LensSolution(focal_length_F=float(focal),
                            target_wLprime=target_wLprime,
                            target_divergence=system.wavelength / (math.pi * target_wLprime),
                            forward_residual=residual,
                            branch=name,
                            closed_form_F=closed_form_focal_length(system, target_wLprime))
    raise FocalRangeError(" ".join(failures))


def lens_for_link(system: LensSystem, wi_star: float, L: float, branch: str = "auto") -> LensSolution:
    """Focal length that sets the receiver beam width of a link to ``wi_star``."""
    theta = divergence_for_target(wi_star, L)
    return solve_focal_length(system, waist_for_divergence(theta, system.wavelength), branch)


class VoltageCalibration:
    """
    Monotone voltage to focal-length map of a liquid lens.

    Both directions use monotone piecewise-cubic (PCHIP) interpolation of a
    two-column table ``(volts, meters)``. Queries outside the table raise
    :class:`~ohlrelay.errors.FocalRangeError`.

    Example:
        >>> cal = VoltageCalibration.identity((0.015, 0.06))
        >>> round(cal.voltage(0.03), 6)
        0.03
    """
    def __init__(self, volts, focal_lengths):
        volts = np.asarray(volts, dtype=float)
        focal = np.asarray(focal_lengths, dtype=float)
        if volts.ndim != 1 or volts.shape != focal.shape or volts.size < 2:
            raise DomainError("Calibration needs two equally long columns with at least two rows.")
        if not np.all(np.diff(volts) > 0):
            raise DomainError("Calibration voltages must be strictly increasing.")
        steps = np.diff(focal)
        if not (np.all(steps > 0) or np.all(steps < 0)):
            raise DomainError("Calibration focal lengths must be strictly monotone in voltage.")
        self.volts = volts
        self.focal_lengths = focal
        self._forward = PchipInterpolator(volts, focal, extrapolate=False)
        order = np.argsort(focal)
        self._inverse = PchipInterpolator(focal[order], volts[order], extrapolate=False)

    @classmethod
    def from_file(cls, path) -> "VoltageCalibration":
        table = np.loadtxt(path, ndmin=2)
        if table.shape[1] != 2:
            raise DomainError(f"Calibration file {path} must have two columns, found {table.shape[1]}.")
        return cls(table[:, 0], table[:, 1])

    @classmethod
    def identity(cls, focal_range: Tuple[float, float] = (15e-3, 60e-3)) -> "VoltageCalibration":
        """Placeholder mapping one volt to one meter of focal length."""
        points = np.linspace(focal_range[0], focal_range[1], 4)
        return cls(points, points)

    def focal_length(self, volts: float) -> float:
        if not self.volts[0] <= volts <= self.volts[-1]:
            raise FocalRangeError(f"Voltage {volts} V outside the calibration table.")
        return float(self._forward(volts))

    def voltage(self, focal_length: float) -> float:
        lo, hi = sorted((self.focal_lengths[0], self.focal_lengths[-1]))
        if not lo <= focal_length <= hi:
            raise FocalRangeError(f"Focal length {focal_length} m outside the calibration table.")
        return float(self._inverse(focal_length))
