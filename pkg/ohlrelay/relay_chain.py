import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ohlrelay.channel import BeamConfig, FadingModel, LinkGeometry
from ohlrelay.errors import DomainError

RELAY_TYPES = ("AF", "OHL", "DF")
AF_GAIN_MODES = ("average", "instantaneous")

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class NoiseBudget:
    """
    Noise and photodetection parameters shared by every node.

    ``background_sigma`` is the std of the additive background term in the
    optical-power decision variable, in watts. Thermal noise is given in
    amperes and referred to the optical domain through the responsivity.
    """
    background_sigma: float = 6e-9
    n_sp: float = 1.1
    planck_h: float = 6.6e-34
    optical_freq_f: float = 1.9e14
    bandwidth_B0: float = 2e8
    responsivity_R: float = 0.8
    thermal_sigma: float = 1e-9

    def __post_init__(self):
        for name in ("planck_h", "optical_freq_f", "bandwidth_B0", "responsivity_R"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)}.")
        # zero noise is allowed for noiseless sanity runs
        for name in ("background_sigma", "n_sp", "thermal_sigma"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be non-negative, got {getattr(self, name)}.")

    @property
    def thermal_equiv(self) -> float:
        return self.thermal_sigma / self.responsivity_R

    @property
    def sigma_prime(self) -> float:
        """Combined thermal + background std at an electrical decision, in watts."""
        return float(np.hypot(self.thermal_equiv, self.background_sigma))


@dataclass(frozen=True)
class RelayNodeConfig:
    """
    One relay (or the destination descriptor closing a chain).

    For OHL nodes ``edfa_gain`` defaults to ``target_tx_power / ohl_output_level``;
    AF nodes leave it ``None`` (automatic gain control).
    """
    relay_type: str
    target_tx_power: float = 4.0
    ohl_threshold: Optional[float] = None
    ohl_output_level: Optional[float] = None
    edfa_gain: Optional[float] = None

    def __post_init__(self):
        if self.relay_type not in RELAY_TYPES:
            raise DomainError(f"Unknown relay type {self.relay_type}; expected one of {RELAY_TYPES}.")
        if not self.target_tx_power > 0:
            raise DomainError(f"target_tx_power must be positive, got {self.target_tx_power}.")
        if self.relay_type != "OHL":
            return
        if self.ohl_threshold is None or not self.ohl_threshold > 0:
            raise DomainError(f"OHL threshold must be positive, got {self.ohl_threshold}.")
        if self.ohl_output_level is None or not self.ohl_output_level > 0:
            raise DomainError(f"OHL output level must be positive, got {self.ohl_output_level}.")
        if self.edfa_gain is None:
            object.__setattr__(self, "edfa_gain", self.target_tx_power / self.ohl_output_level)
        elif not np.isclose(self.edfa_gain * self.ohl_output_level, self.target_tx_power, rtol=1e-9):
            raise DomainError("OHL node must satisfy edfa_gain * ohl_output_level == target_tx_power.")

    def with_threshold(self, threshold: float) -> "RelayNodeConfig":
        return RelayNodeConfig(self.relay_type, self.target_tx_power, threshold, self.ohl_output_level,
                               self.edfa_gain)


@dataclass
class RelayChainConfig:
    """
    Source, ``N_r`` relays and destination joined by ``N_r + 1`` hops.

    ``nodes[i]`` receives hop ``i``; the last node is the destination
    descriptor.
    """
    hops: List[Tuple[LinkGeometry, BeamConfig]]
    nodes: List[RelayNodeConfig]
    source_power: float = 4.0
    fadings: List[FadingModel] = field(init=False, repr=False)

    def __post_init__(self):
        self.hops = list(self.hops)
        self.nodes = list(self.nodes)
        if not self.hops:
            raise DomainError("A relay chain needs at least one hop.")
        if len(self.nodes) != len(self.hops):
            raise DomainError(
                f"Chain with {len(self.hops)} hops needs {len(self.hops)} nodes "
                f"(relays plus destination), got {len(self.nodes)}.")
        if not self.source_power > 0:
            raise DomainError(f"source_power must be positive, got {self.source_power}.")
        self.fadings = [FadingModel.from_beam(geom, beam.receiver_beam_radius_wi) for geom, beam in self.hops]

    @property
    def hop_count(self) -> int:
        return len(self.hops)

    @property
    def relay_count(self) -> int:
        return len(self.hops) - 1

    @property
    def relays(self) -> List[RelayNodeConfig]:
        return self.nodes[:-1]

    def tx_power_into(self, hop: int) -> float:
        """On-level transmit power feeding hop ``hop``."""
        return self.source_power if hop == 0 else self.nodes[hop - 1].target_tx_power

    @classmethod
    def uniform(cls,
                geoms: Sequence[LinkGeometry],
                beam_widths: Sequence[float],
                relay_type: str,
                source_power: float = 4.0,
                target_tx_power: float = 4.0,
                thresholds: Optional[Sequence[float]] = None,
                ohl_output_level: float = 1e-6) -> "RelayChainConfig":
        """
        Chain of identical relays with a DF destination.

        Args:
            geoms (Sequence[LinkGeometry]): hop geometries.
            beam_widths (Sequence[float]): receiver beam radius per hop.
            relay_type (str): ``AF``, ``OHL`` or ``DF``.
            thresholds (Sequence[float]): OHL threshold per relay.

        Returns:
            RelayChainConfig: the chain.
        """
        if len(geoms) != len(beam_widths):
            raise DomainError("One beam width per hop is required.")
        hops = [(geom, BeamConfig.from_receiver_radius(geom, wi)) for geom, wi in zip(geoms, beam_widths)]
        nodes = []
        for i in range(len(geoms) - 1):
            if relay_type == "OHL":
                if thresholds is None:
                    raise DomainError("OHL chains need one threshold per relay.")
                nodes.append(RelayNodeConfig("OHL", target_tx_power, thresholds[i], ohl_output_level))
            else:
                nodes.append(RelayNodeConfig(relay_type, target_tx_power))
        nodes.append(RelayNodeConfig("DF", target_tx_power))
        return cls(hops=hops, nodes=nodes, source_power=source_power)


def ase_power(noise: NoiseBudget, gain: ArrayLike) -> ArrayLike:
    """
    Amplified spontaneous emission power of an EDFA.

    Args:
        noise (NoiseBudget): supplies ``n_sp``, ``h``, ``f`` and ``B0``.
        gain (float | np.ndarray): amplifier gain, at least 1.

    Returns:
        float | np.ndarray: ``n_sp * h * f * B0 * G`` in watts.
    """
    gain_arr = np.asarray(gain, dtype=float)
    if np.any(gain_arr < 1):
        raise DomainError(f"EDFA gain must be >= 1, got {gain}.")
    value = noise.n_sp * noise.planck_h * noise.optical_freq_f * noise.bandwidth_B0 * gain_arr
    return float(value) if value.ndim == 0 else value


def af_average_gains(cfg: RelayChainConfig, noise: NoiseBudget) -> List[float]:
    """
    Automatic-gain-control gains of an AF chain.

    Each relay scales its mean input, taken over equiprobable bits and the
    mean channel gain, to its target output power.
    """
    gains = []
    mean_tx = 0.5 * cfg.source_power
    for i, node in enumerate(cfg.relays):
        mean_in = mean_tx * cfg.fadings[i].mean()
        gain = node.target_tx_power / mean_in
        gains.append(gain)
        mean_tx = node.target_tx_power + ase_power(noise, max(gain, 1.0))
    return gains


def af_chain_output(cfg: RelayChainConfig,
                    gains_realized: Sequence[ArrayLike],
                    h_realized: Sequence[ArrayLike],
                    bg_draws: Sequence[ArrayLike],
                    noise: Optional[NoiseBudget] = None,
                    bit: ArrayLike = 1,
                    clamp: bool = True) -> ArrayLike:
    """
    Optical power reaching the destination of an AF chain.

    Applies ``P_in,i = (G_{i-1} P_in,{i-1} + P_ASE,{i-1}) h_i + P_bg,i`` hop by
    hop, starting from ``source_power * bit``. ASE is added only when a
    noise budget is supplied. Per-hop entries may be arrays of equal shape,
    one element per transmitted bit.

    Args:
        cfg (RelayChainConfig): chain description.
        gains_realized (Sequence): one gain per relay.
        h_realized (Sequence): one channel gain per hop.
        bg_draws (Sequence): one background draw per hop, in watts.
        noise (NoiseBudget): enables ASE when given.
        bit (int | np.ndarray): transmitted bit(s).
        clamp (bool): clip negative powers to zero with a warning. The
            Gaussian decision statistics of the bit-level simulation keep
            them unclipped.

    Returns:
        float | np.ndarray: destination power.
    """
    if len(gains_realized) != cfg.relay_count:
        raise DomainError(f"Expected {cfg.relay_count} relay gains, got {len(gains_realized)}.")
    if len(h_realized) != cfg.hop_count or len(bg_draws) != cfg.hop_count:
        raise DomainError(f"Expected {cfg.hop_count} channel gains and background draws.")

    p_tx = cfg.source_power * np.asarray(bit, dtype=float)
    p_in = np.zeros_like(p_tx)
    for i in range(cfg.hop_count):
        p_in = p_tx * np.asarray(h_realized[i]) + np.asarray(bg_draws[i])
        if i < cfg.relay_count:
            gain = np.asarray(gains_realized[i], dtype=float)
            p_tx = gain * p_in
            if noise is not None:
                p_tx = p_tx + ase_power(noise, np.maximum(gain, 1.0))
    if clamp and np.any(p_in < 0):
        warnings.warn(f"Negative destination power (min {np.min(p_in):.3e} W) clamped to 0.", RuntimeWarning)
        p_in = np.maximum(p_in, 0.0)
    return float(p_in) if np.ndim(p_in) == 0 else p_in


def photodetect(noise: NoiseBudget, p_optical: ArrayLike, thermal_draw: ArrayLike) -> ArrayLike:
    """Photocurrent ``R * P + n_th`` in amperes."""
    return noise.responsivity_R * p_optical + thermal_draw


def _require_ohl(node: RelayNodeConfig) -> None:
    if node.relay_type != "OHL":
        raise DomainError(f"Expected an OHL node, got {node.relay_type}.")


def ohl_decide(node: RelayNodeConfig, p_in: ArrayLike) -> ArrayLike:
    """Hard limiter: ``P_o`` when ``p_in >= P_th``, otherwise 0."""
    _require_ohl(node)
    value = np.where(np.asarray(p_in) >= node.ohl_threshold, node.ohl_output_level, 0.0)
    return float(value) if value.ndim == 0 else value


def ohl_chain_step(node: RelayNodeConfig,
                   noise: NoiseBudget,
                   p_prev_tx: ArrayLike,
                   h: ArrayLike,
                   bg_draw: ArrayLike,
                   use_ase_approx: bool = True) -> Tuple[ArrayLike, ArrayLike]:
    """
    Receive, hard-limit and re-amplify at one OHL relay.

    The input is ``p_prev_tx * h + bg_draw``; when the previous node ran in
    exact mode its ``p_prev_tx`` already carries its ASE power, so the ASE
    contribution at this input is ``P_ASE * h``.

    Returns:
        Tuple: ``(p_tx_next, decided_bit)``; ``p_tx_next = G * P_OHL`` plus
        ``P_ASE`` unless ``use_ase_approx``.
    """
    _require_ohl(node)
    p_in = np.asarray(p_prev_tx) * h + bg_draw
    limited = ohl_decide(node, p_in)
    decided = (np.asarray(limited) > 0).astype(int)
    p_tx_next = node.edfa_gain * np.asarray(limited)
    if not use_ase_approx:
        p_tx_next = p_tx_next + ase_power(noise, node.edfa_gain)
    if np.ndim(p_tx_next) == 0:
        return float(p_tx_next), int(decided)
    return p_tx_next, decided


def df_decide(noise: NoiseBudget, p_rx_signal_level: ArrayLike, p_in: ArrayLike) -> ArrayLike:
    """
    Decode-and-forward decision at half the known received on-level.

    A tie at exactly half the level decides 1.
    """
    decided = (np.asarray(p_in) >= 0.5 * np.asarray(p_rx_signal_level)).astype(int)
    return int(decided) if decided.ndim == 0 else decided
