"""
Optimal OHL threshold, optimal beam width and their joint optimization.

The threshold stationarity condition of :func:`ohlrelay.error_analysis.pe_ohl_hop`
reads ``exp(-P_th**2 / (2 sigma**2)) = I(P_th)`` with
``I(P_th) = int_0^1 exp(-(P h_max u**(1/gamma) - P_th)**2 / (2 sigma**2)) du``.
It is iterated as ``P_th <- sigma * sqrt(-2 ln I(P_th))`` and ``ln I`` is
always evaluated in log domain.
"""

import logging
import math
import sys
import warnings
from dataclasses import dataclass, field
from functools import partial
from multiprocessing import Pool
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from ohlrelay.channel import FadingModel, LinkGeometry
from ohlrelay.error_analysis import HopErrorInputs, pe_ohl_hop
from ohlrelay.errors import (DomainError, NoInteriorOptimumError,
                             NoRealSolutionError, QuadratureAccuracyError,
                             StationarityInfeasibleError)
from ohlrelay.numerics import (QuadratureSpec, integrate, lambert_w,
                               log_integrate)
from ohlrelay.relay_chain import NoiseBudget

logger = logging.getLogger(__name__)
handler = logging.StreamHandler(sys.stdout)
formatter = logging.Formatter(
    '[%(asctime)s] %(module)s.%(funcName)s %(levelname)s: %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S')
handler.setFormatter(formatter)
logger.addHandler(handler)
logger.setLevel(logging.INFO)

LAMBERT_BRANCHES = ("principal", )
DEFAULT_INIT_BEAM_WIDTH = math.sqrt(200.0 * 600.0)
DEFAULT_INIT_THRESHOLD_SIGMAS = 5.0

# the stationarity integral needs more digits than the error probability
_STATIONARITY_SPEC = QuadratureSpec(abs_tol=1e-15, rel_tol=1e-11, max_subdivisions=400)
_POLISH_RTOL = 1e-13
_BRACKET_EXPANSIONS = 60


@dataclass(frozen=True)
class OptimizerSettings:
    """
    Tolerances and iteration caps of the nested optimization.

    Args:
        epsilon_rel (float): relative-change convergence tolerance.
        max_inner (int): threshold iterations per outer step.
        max_outer (int): beam-width/threshold alternations.
        lambert_branch (str): only ``principal`` gives the interior minimum.
    """
    epsilon_rel: float = 1e-3
    max_inner: int = 50
    max_outer: int = 50
    lambert_branch: str = "principal"

    def __post_init__(self):
        if not self.epsilon_rel > 0:
            raise DomainError(f"epsilon_rel must be positive, got {self.epsilon_rel}.")
        if int(self.max_inner) < 1 or int(self.max_outer) < 1:
            raise DomainError(f"Iteration caps must be >= 1, got {self.max_inner}, {self.max_outer}.")
        if self.lambert_branch not in LAMBERT_BRANCHES:
            raise DomainError(f"Unsupported Lambert branch {self.lambert_branch}.")
        object.__setattr__(self, "max_inner", int(self.max_inner))
        object.__setattr__(self, "max_outer", int(self.max_outer))


@dataclass(frozen=True)
class ThresholdOptimum:
    threshold: float
    iterations: int
    converged: bool
    residual: float


@dataclass(frozen=True)
class JointOptimum:
    """
    Output of :func:`joint_optimize` and :func:`exhaustive_joint_search`.

    ``achieved_pe`` is always recomputed with the exact hop error, never with
    the surrogate used for the beam-width update.
    """
    threshold_star: float
    beam_width_star: float
    achieved_pe: float
    outer_iterations: int
    inner_iterations_total: int
    converged: bool
    history: List[Tuple[float, float, float]] = field(default_factory=list, compare=False)


def log_stationarity_integral(inputs: HopErrorInputs, p_th: float, spec: QuadratureSpec = None) -> float:
    """
    ``ln I(P_th)``, the log of the right-hand side of the stationarity condition.

    The integrand is shifted by its largest value before integrating; if the
    shifted integral still underflows the Gauss-Legendre log-domain rule takes
    over.
    """
    spec = spec or _STATIONARITY_SPEC
    sigma2 = 2.0 * inputs.sigma_bg**2
    peak = inputs.peak_power
    gamma = inputs.fading.gamma_shape
    inv_gamma = 1.0 / gamma
    shift = max(0.0, p_th - peak)**2 / sigma2

    def shifted(u):
        return math.exp(shift - (peak * u**inv_gamma - p_th)**2 / sigma2)

    points = [(p_th / peak)**gamma] if 0 < p_th < peak else None
    try:
        value = integrate(shifted, 0.0, 1.0, spec, points=points)
    except QuadratureAccuracyError as err:
        logger.debug("Stationarity quadrature kept its best estimate: %s", err)
        value = err.estimate

    if value > 0 and math.isfinite(value):
        return math.log(value) - shift

    def log_integrand(u):
        return -(peak * u**inv_gamma - p_th)**2 / sigma2

    return log_integrate(log_integrand, 0.0, 1.0)


def _log_stationarity_gap(inputs: HopErrorInputs, p_th: float, spec: QuadratureSpec = None) -> float:
    return -p_th**2 / (2.0 * inputs.sigma_bg**2) - log_stationarity_integral(inputs, p_th, spec)


def stationarity_residual(inputs: HopErrorInputs, p_th: float, spec: QuadratureSpec = None) -> float:
    """Relative residual ``|exp(-P_th**2/(2 sigma**2)) - I| / I``."""
    return abs(math.expm1(_log_stationarity_gap(inputs, p_th, spec)))


def threshold_fixed_point_step(inputs: HopErrorInputs, p_th_current: float, spec: QuadratureSpec = None) -> float:
    """
    One fixed-point update of the OHL threshold.

    Args:
        inputs (HopErrorInputs): hop parameters; its own threshold is ignored.
        p_th_current (float): current threshold, watts.
        spec (QuadratureSpec): tolerances of the stationarity integral.

    Returns:
        float: ``sigma * sqrt(-2 ln I(p_th_current))``.

    Raises:
        StationarityInfeasibleError: when ``I >= 1``.
    """
    if not p_th_current > 0:
        raise DomainError(f"Threshold must be positive, got {p_th_current}.")
    log_i = log_stationarity_integral(inputs, p_th_current, spec)
    if log_i >= 0:
        raise StationarityInfeasibleError(
            f"Stationarity integral {math.exp(log_i):.6g} >= 1 at P_th = {p_th_current:.4e} W; "
            "noise is comparable to the signal.")
    return inputs.sigma_bg * math.sqrt(-2.0 * log_i)


def threshold_trace(inputs: HopErrorInputs,
                    p_th0: float,
                    settings: OptimizerSettings = None,
                    spec: QuadratureSpec = None) -> List[float]:
    """Raw fixed-point iterates starting at ``p_th0``, without polishing."""
    settings = settings or OptimizerSettings()
    trace = [float(p_th0)]
    for _ in range(settings.max_inner):
        nxt = threshold_fixed_point_step(inputs, trace[-1], spec)
        trace.append(nxt)
        if abs(nxt - trace[-2]) < settings.epsilon_rel * trace[-2]:
            break
    return trace


def _polish_threshold(inputs: HopErrorInputs, p_th: float, spec: QuadratureSpec = None) -> Optional[float]:
    gap = partial(_log_stationarity_gap, inputs, spec=spec)
    lo, hi = p_th, p_th
    g_lo = g_hi = gap(p_th)
    if g_lo == 0:
        return p_th
    for _ in range(_BRACKET_EXPANSIONS):
        if g_lo > 0 > g_hi or g_lo < 0 < g_hi:
            break
        if g_lo < 0:
            lo *= 0.5
            g_lo = gap(lo)
        if g_hi > 0:
            hi *= 2.0
            g_hi = gap(hi)
    else:
        logger.debug("No sign change of the stationarity gap around %.4e W.", p_th)
        return None
    if not (g_lo > 0 > g_hi or g_lo < 0 < g_hi):
        return None
    try:
        return brentq(gap, lo, hi, xtol=1e-30, rtol=_POLISH_RTOL, maxiter=200)
    except (ValueError, RuntimeError) as err:
        logger.debug("Threshold polish failed: %s", err)
        return None


def _pe_at(inputs: HopErrorInputs, p_th: float, spec: QuadratureSpec = None) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return pe_ohl_hop(inputs.with_threshold(p_th), spec)


def threshold_optimize(inputs: HopErrorInputs,
                       settings: OptimizerSettings = None,
                       spec: QuadratureSpec = None,
                       p_th0: Optional[float] = None) -> ThresholdOptimum:
    """
    Optimal OHL threshold by fixed-point iteration.

    Iterates :func:`threshold_fixed_point_step` from ``p_th0`` (the threshold
    carried by ``inputs`` when omitted) until the relative change drops below
    ``settings.epsilon_rel``, then solves the log-stationarity equation with
    a bracketed Brent search around the last iterate.

    Returns:
        ThresholdOptimum: threshold, inner iteration count, convergence flag
        of the fixed-point loop, and the final stationarity residual. When
        the loop does not converge the iterate with the lowest hop error is
        returned.
    """
    settings = settings or OptimizerSettings()
    current = float(p_th0 if p_th0 is not None else inputs.threshold)
    iterates = [current]
    converged = False
    for _ in range(settings.max_inner):
        nxt = threshold_fixed_point_step(inputs, current, spec)
        iterates.append(nxt)
        change = abs(nxt - current) / current
        current = nxt
        if change < settings.epsilon_rel:
            converged = True
            break
    iterations = len(iterates) - 1

    polished = _polish_threshold(inputs, current)
    if converged:
        threshold = polished if polished is not None else current
    else:
        warnings.warn(
            f"Threshold iteration did not converge in {settings.max_inner} steps; "
            "returning the best iterate.", RuntimeWarning)
        candidates = iterates[1:] + ([polished] if polished is not None else [])
        errors = [_pe_at(inputs, p, spec) for p in candidates]
        threshold = candidates[int(np.argmin(errors))]

    residual = stationarity_residual(inputs, threshold)
    logger.debug("Threshold %.6e W after %i iterations (residual %.2e).", threshold, iterations, residual)
    return ThresholdOptimum(threshold=float(threshold), iterations=iterations, converged=converged, residual=residual)


def beamwidth_closed_form(inputs: HopErrorInputs, geom: LinkGeometry, branch: str = "principal") -> float:
    """
    Stationary beam width of the power-law surrogate error.

    With ``c = P_th / (P ra**2)`` and ``x = -c e / alpha`` the squared width is
    ``W* = exp(W(x) - 1) / c``, which equals ``-1 / (alpha W(x))`` but stays
    finite as ``x -> 0``.

    Args:
        inputs (HopErrorInputs): supplies ``P_th`` and the transmit power.
        geom (LinkGeometry): supplies ``alpha`` and the aperture radius.
        branch (str): Lambert branch; ``minus_one`` yields the surrogate's
            local maximum and is exposed for diagnostics only.

    Returns:
        float: beam width at the receiver, meters.

    Raises:
        NoInteriorOptimumError: for ``x < -1/e``.
    """
    c = inputs.threshold / (inputs.tx_power_prev * geom.aperture_radius_ra**2)
    x = -c * math.e / geom.alpha
    try:
        w_lambert = lambert_w(x, branch)
    except NoRealSolutionError as err:
        raise NoInteriorOptimumError(
            f"Lambert argument {x:.6g} < -1/e; no stationary beam width for P_th = {inputs.threshold:.4e} W."
        ) from err
    return math.sqrt(math.exp(w_lambert - 1.0) / c)


def _golden_refine(f: Callable[[float], float], grid: Sequence[float], index: int,
                   value: float) -> Tuple[float, float]:
    # golden-section search inside the two grid cells around ``index``
    if index == 0 or index == len(grid) - 1:
        return float(grid[index]), value
    lo, mid, hi = float(grid[index - 1]), float(grid[index]), float(grid[index + 1])
    try:
        res = minimize_scalar(f, bracket=(lo, mid, hi), method="golden", options={"xtol": 1e-6})
    except (ValueError, RuntimeError):
        return mid, value
    if lo <= res.x <= hi and res.fun < value:
        return float(res.x), float(res.fun)
    return mid, value


def _inputs_at(geom: LinkGeometry, noise: NoiseBudget, tx_power: float, w: float, p_th: float) -> HopErrorInputs:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return HopErrorInputs.from_link(geom, w, tx_power, p_th, noise)


def beamwidth_exact_argmin(inputs: HopErrorInputs,
                           geom: LinkGeometry,
                           w_grid: Sequence[float],
                           spec: QuadratureSpec = None) -> float:
    """
    Beam width minimizing the exact hop error at the threshold of ``inputs``.

    Grid search over ``w_grid`` followed by golden-section refinement.
    """
    grid = np.asarray(w_grid, dtype=float)

    def error_at(w):
        if w <= geom.aperture_radius_ra:
            return 1.0
        fading = FadingModel.from_beam(geom, w)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            hop = HopErrorInputs(fading, inputs.tx_power_prev, inputs.threshold, inputs.sigma_bg, inputs.sigma_prime)
            return pe_ohl_hop(hop, spec)

    errors = np.array([error_at(w) for w in grid])
    index = int(np.argmin(errors))
    w_best, _ = _golden_refine(error_at, grid, index, float(errors[index]))
    return w_best


def _pe_for(geom: LinkGeometry, noise: NoiseBudget, tx_power: float, w: float, p_th: float,
            spec: QuadratureSpec = None) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return pe_ohl_hop(HopErrorInputs.from_link(geom, w, tx_power, p_th, noise), spec)


def joint_optimize(geom: LinkGeometry,
                   noise: NoiseBudget,
                   tx_power: float,
                   settings: OptimizerSettings = None,
                   init: Optional[Tuple[float, float]] = None,
                   spec: QuadratureSpec = None) -> JointOptimum:
    """
    Alternating optimization of the beam width and the OHL threshold.

    Each outer step sets the beam width from the Lambert closed form at the
    current threshold, then re-optimizes the threshold at that width warm
    started from the previous threshold. Exits when both relative changes
    are below ``settings.epsilon_rel``.

    Args:
        geom (LinkGeometry): link.
        noise (NoiseBudget): noise at the receiving node.
        tx_power (float): on-level transmit power of the hop, watts.
        settings (OptimizerSettings): tolerances.
        init (Tuple[float, float]): initial ``(P_th, w)``; defaults to
            ``(5 sigma_bg, sqrt(200 * 600))``.
        spec (QuadratureSpec): tolerances of the hop error.

    Returns:
        JointOptimum: the lowest-error pair visited, never worse than the
        initial point.

    Example:
        >>> geom = LinkGeometry(1000e3, 150e-6, 0.1)
        >>> opt = joint_optimize(geom, NoiseBudget(), 4.0)
        >>> opt.achieved_pe < 1e-3
        True
    """
    settings = settings or OptimizerSettings()
    p_th, w = init if init is not None else (DEFAULT_INIT_THRESHOLD_SIGMAS * noise.background_sigma,
                                             DEFAULT_INIT_BEAM_WIDTH)
    p_th, w = float(p_th), float(w)
    best = (_pe_for(geom, noise, tx_power, w, p_th, spec), p_th, w)
    history = [(p_th, w, best[0])]
    inner_total = 0
    converged = False
    outer = 0
    for outer in range(1, settings.max_outer + 1):
        try:
            w_new = beamwidth_closed_form(_inputs_at(geom, noise, tx_power, w, p_th), geom)
            inner = threshold_optimize(_inputs_at(geom, noise, tx_power, w_new, p_th), settings, spec)
        except (StationarityInfeasibleError, NoInteriorOptimumError) as err:
            logger.error("Joint optimization stopped at outer iteration %i (P_th=%.4e W, w=%.2f m): %s", outer,
                         p_th, w, err)
            raise
        inner_total += inner.iterations
        p_new = inner.threshold
        pe_new = _pe_for(geom, noise, tx_power, w_new, p_new, spec)
        history.append((p_new, w_new, pe_new))
        if pe_new < best[0]:
            best = (pe_new, p_new, w_new)
        change_p = abs(p_new - p_th) / p_th
        change_w = abs(w_new - w) / w
        p_th, w = p_new, w_new
        if change_p < settings.epsilon_rel and change_w < settings.epsilon_rel:
            converged = True
            break

    if not converged:
        warnings.warn(f"Joint optimization did not converge in {settings.max_outer} outer iterations.",
                      RuntimeWarning)
    logger.debug("Joint optimum P_th=%.6e W, w=%.3f m, pe=%.4e after %i outer iterations.", best[1], best[2],
                 best[0], outer)
    return JointOptimum(threshold_star=best[1],
                        beam_width_star=best[2],
                        achieved_pe=best[0],
                        outer_iterations=outer,
                        inner_iterations_total=inner_total,
                        converged=converged,
                        history=history)


def _grid_row(w: float, geom: LinkGeometry, noise: NoiseBudget, tx_power: float, p_points: Sequence[float],
              spec: QuadratureSpec = None) -> List[float]:
    return [_pe_for(geom, noise, tx_power, w, p, spec) for p in p_points]


def search_grid(noise: NoiseBudget,
                n_threshold: int = 256,
                n_width: int = 256,
                threshold_sigmas: Tuple[float, float] = (1.0, 12.0),
                width_range: Tuple[float, float] = (100.0, 2000.0)) -> Tuple[np.ndarray, np.ndarray]:
    """Default exhaustive-search grid: thresholds in units of ``sigma_bg`` and widths in meters."""
    p_points = np.linspace(threshold_sigmas[0], threshold_sigmas[1], n_threshold) * noise.background_sigma
    w_points = np.linspace(width_range[0], width_range[1], n_width)
    return p_points, w_points


def exhaustive_joint_search(geom: LinkGeometry,
                            noise: NoiseBudget,
                            tx_power: float,
                            grid: Tuple[Sequence[float], Sequence[float]],
                            spec: QuadratureSpec = None,
                            threads: int = 1) -> JointOptimum:
    """
    Brute-force argmin of the exact hop error over a ``(P_th, w)`` grid.

    The grid argmin is refined once along the threshold axis and once along
    the width axis by golden-section search.

    Args:
        grid (Tuple[Sequence[float], Sequence[float]]): threshold points
            (watts) and beam-width points (meters), at least 32 of each.
        threads (int): worker processes for the grid rows.

    Returns:
        JointOptimum: with zero iteration counts and ``converged=True``.
    """
    p_points = np.asarray(grid[0], dtype=float)
    w_points = np.asarray(grid[1], dtype=float)
    if p_points.size < 32 or w_points.size < 32:
        raise DomainError(f"Exhaustive grid must be at least 32x32, got {p_points.size}x{w_points.size}.")
    if np.any(w_points <= geom.aperture_radius_ra):
        raise DomainError("Every grid beam width must exceed the aperture radius.")

    row = partial(_grid_row, geom=geom, noise=noise, tx_power=tx_power, p_points=p_points, spec=spec)
    if threads > 1:
        with Pool(threads) as p:
            rows = p.map(row, w_points)
    else:
        rows = [row(w) for w in w_points]
    errors = np.array(rows)
    i_w, i_p = np.unravel_index(int(np.argmin(errors)), errors.shape)
    value = float(errors[i_w, i_p])

    w_star = float(w_points[i_w])
    p_star, value = _golden_refine(lambda p: _pe_for(geom, noise, tx_power, w_star, p, spec), p_points, i_p, value)
    w_star, value = _golden_refine(lambda w: _pe_for(geom, noise, tx_power, w, p_star, spec), w_points, i_w, value)
    return JointOptimum(threshold_star=p_star,
                        beam_width_star=w_star,
                        achieved_pe=value,
                        outer_iterations=0,
                        inner_iterations_total=0,
                        converged=True)


def joint_optimize_links(links: Sequence[LinkGeometry],
                         noise: NoiseBudget,
                         tx_power: float,
                         settings: OptimizerSettings = None,
                         threads: int = 1,
                         spec: QuadratureSpec = None) -> List[JointOptimum]:
    """Optimize every link of a path independently, in parallel when ``threads > 1``."""
    solve = partial(joint_optimize, noise=noise, tx_power=tx_power, settings=settings, spec=spec)
    if threads > 1 and len(links) > 1:
        with Pool(threads) as p:
            return p.map(solve, links)
    return [solve(link) for link in links]
