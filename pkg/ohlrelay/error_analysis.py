"""
Analytical hop and end-to-end error probabilities.

All hop integrals are taken over the fading law in the variable
``u = (h / h_max)**gamma``, which maps the density ``gamma h**(gamma-1)
h_max**(-gamma) dh`` to ``du`` on ``[0, 1]`` and removes the endpoint
singularity for ``gamma < 1``.
"""

import math
import warnings
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ohlrelay.channel import FadingModel, LinkGeometry
from ohlrelay.errors import DomainError, SurrogateRegimeError
from ohlrelay.numerics import (Q_APPROX_A, Q_APPROX_B, QuadratureSpec,
                               integrate, log_lower_incomplete_gamma,
                               q_approx3, q_exact)
from ohlrelay.relay_chain import NoiseBudget

COMPOSITIONS = ("ohl_chain", "df_chain")


@dataclass(frozen=True)
class HopErrorInputs:
    """
    Everything a hop error probability depends on.

    Args:
        fading (FadingModel): channel-gain law of the hop.
        tx_power_prev (float): on-level power of the transmitting node, watts.
        threshold (float): OHL decision threshold, watts.
        sigma_bg (float): background noise std, watts.
        sigma_prime (float): combined noise std at an electrical decision, watts.
    """
    fading: FadingModel
    tx_power_prev: float
    threshold: float
    sigma_bg: float
    sigma_prime: float

    def __post_init__(self):
        for name in ("tx_power_prev", "threshold", "sigma_bg", "sigma_prime"):
            value = getattr(self, name)
            if not value > 0:
                raise DomainError(f"{name} must be positive, got {value}.")
        if self.threshold >= self.peak_power:
            warnings.warn(
                f"Threshold {self.threshold:.3e} W is not below the peak received power "
                f"{self.peak_power:.3e} W.", RuntimeWarning)

    @property
    def peak_power(self) -> float:
        """Received power at zero pointing error, ``P * h_max``."""
        return self.tx_power_prev * self.fading.h_max

    def with_threshold(self, threshold: float) -> "HopErrorInputs":
        return HopErrorInputs(self.fading, self.tx_power_prev, threshold, self.sigma_bg, self.sigma_prime)

    @classmethod
    def from_link(cls, geom: LinkGeometry, wi: float, tx_power: float, threshold: float,
                  noise: NoiseBudget) -> "HopErrorInputs":
        return cls(fading=FadingModel.from_beam(geom, wi),
                   tx_power_prev=tx_power,
                   threshold=threshold,
                   sigma_bg=noise.background_sigma,
                   sigma_prime=noise.sigma_prime)


@dataclass(frozen=True)
class EndToEndResult:
    per_hop_pe: List[float]
    e2e_pe: float
    composition: str


def _transition(level: float, peak: float, gamma: float) -> List[float]:
    # u at which the received power crosses ``level``
    if 0 < level < peak:
        return [(level / peak)**gamma]
    return []


def pe_ohl_hop_components(inputs: HopErrorInputs, spec: QuadratureSpec = None) -> Tuple[float, float]:
    """
    False-alarm and miss probabilities of one OHL hop.

    Returns:
        Tuple[float, float]: ``Q(P_th / sigma)`` for a sent 0 and
        ``E_h[Q((P h - P_th) / sigma)]`` for a sent 1.
    """
    sigma = inputs.sigma_bg
    peak = inputs.peak_power
    inv_gamma = 1.0 / inputs.fading.gamma_shape
    threshold = inputs.threshold

    def miss(u):
        return q_exact((peak * u**inv_gamma - threshold) / sigma)

    false_alarm = q_exact(threshold / sigma)
    miss_probability = integrate(miss, 0.0, 1.0, spec,
                                 points=_transition(threshold, peak, inputs.fading.gamma_shape))
    return false_alarm, miss_probability


def pe_ohl_hop(inputs: HopErrorInputs, spec: QuadratureSpec = None) -> float:
    """
    Error probability of one OHL hop with equiprobable bits.

    Args:
        inputs (HopErrorInputs): hop parameters.
        spec (QuadratureSpec): quadrature tolerances.

    Returns:
        float: ``0.5 * Q(P_th/sigma) + 0.5 * E_h[Q((P h - P_th)/sigma)]``.

    Example:
        >>> fading = FadingModel(gamma_shape=1.7778, h_max=6.25e-8)
        >>> inputs = HopErrorInputs(fading, 4.0, 18e-9, 6e-9, 6.13e-9)
        >>> 1e-3 < pe_ohl_hop(inputs) < 1e-2
        True
    """
    false_alarm, miss = pe_ohl_hop_components(inputs, spec)
    return 0.5 * (false_alarm + miss)


def pe_df_hop_quadrature(inputs: HopErrorInputs, spec: QuadratureSpec = None, q_function: str = "exact") -> float:
    """
    Error probability of a DF hop with a half-level threshold.

    Args:
        inputs (HopErrorInputs): hop parameters; ``sigma_prime`` is used.
        spec (QuadratureSpec): quadrature tolerances.
        q_function (str): ``exact`` or ``approx3`` tail function inside the
            integral.

    Returns:
        float: ``E_h[Q(P h / (2 sigma'))]``.
    """
    if q_function not in ("exact", "approx3"):
        raise DomainError(f"Unknown q_function {q_function}.")
    tail = q_exact if q_function == "exact" else q_approx3
    peak = inputs.peak_power
    scale = 2.0 * inputs.sigma_prime
    inv_gamma = 1.0 / inputs.fading.gamma_shape

    def integrand(u):
        return tail(peak * u**inv_gamma / scale)

    return integrate(integrand, 0.0, 1.0, spec, points=_transition(scale, peak, inputs.fading.gamma_shape))


def pe_df_hop_closed(inputs: HopErrorInputs) -> float:
    """
    Closed-form DF hop error with the three-term Q approximation.

    Each term ``(gamma/2) a_j k_j**(-gamma/2) h_max**(-gamma)
    lower_gamma(gamma/2, k_j h_max**2)`` is evaluated in log domain as
    ``(gamma/2) a_j exp(-s log x_j + log lower_gamma(s, x_j))`` with
    ``s = gamma/2`` and ``x_j = k_j h_max**2``, so it inherits the accuracy
    limits of :func:`ohlrelay.numerics.q_approx3`.
    """
    gamma = inputs.fading.gamma_shape
    s = 0.5 * gamma
    total = 0.0
    for a, b in zip(Q_APPROX_A, Q_APPROX_B):
        k = b * inputs.tx_power_prev**2 / (4.0 * inputs.sigma_prime**2)
        x = k * inputs.fading.h_max**2
        if x == 0:
            total += a
            continue
        total += s * a * math.exp(-s * math.log(x) + log_lower_incomplete_gamma(s, x))
    return total


def pe_e2e(per_hop: Sequence[float], composition: str = "ohl_chain") -> float:
    """
    End-to-end error of independent hops, ``1 - prod(1 - p_i)``.

    For ``ohl_chain`` the last entry is the destination's DF-type hop; for
    ``df_chain`` every entry is a DF hop. Evaluated as
    ``-expm1(sum(log1p(-p_i)))``.
    """
    if composition not in COMPOSITIONS:
        raise DomainError(f"Unknown composition {composition}; expected one of {COMPOSITIONS}.")
    probs = np.asarray(per_hop, dtype=float)
    if probs.size == 0:
        return 0.0
    if np.any((probs < 0) | (probs > 1)):
        raise DomainError("Hop error probabilities must lie in [0, 1].")
    with np.errstate(divide="ignore"):
        log_success = float(np.sum(np.log1p(-probs)))
    return float(-math.expm1(log_success))


def compose_end_to_end(per_hop: Sequence[float], composition: str = "ohl_chain") -> EndToEndResult:
    return EndToEndResult(per_hop_pe=[float(p) for p in per_hop],
                          e2e_pe=pe_e2e(per_hop, composition),
                          composition=composition)


def pe_chain_markov(components: Sequence[Tuple[float, float]], destination_pe: float) -> float:
    """
    Exact BER of cascaded OHL hops followed by a symmetric destination.

    Each OHL hop is a binary asymmetric channel with flip probabilities
    ``(false_alarm, miss)``; unlike :func:`pe_e2e` this accounts for an even
    number of flips restoring the bit.
    """
    ber = 0.0
    for sent in (0, 1):
        prob_one = float(sent)
        for false_alarm, miss in components:
            prob_one = prob_one * (1.0 - miss) + (1.0 - prob_one) * false_alarm
        decide_one = prob_one * (1.0 - destination_pe) + (1.0 - prob_one) * destination_pe
        ber += 0.5 * (decide_one if sent == 0 else 1.0 - decide_one)
    return ber


def pe_ohl_approx(inputs: HopErrorInputs) -> float:
    """
    Power-law surrogate ``(P_th / (P h_max))**(gamma + 1)`` of the OHL hop error.

    Tracks the trend of :func:`pe_ohl_hop` in the beam width, not its value.

    Raises:
        SurrogateRegimeError: when ``P_th >= P h_max``.
    """
    base = inputs.threshold / inputs.peak_power
    if base >= 1:
        raise SurrogateRegimeError(f"Surrogate base {base:.4g} >= 1; threshold above the peak received power.")
    return base**(inputs.fading.gamma_shape + 1.0)
