"""
Bit-level Monte-Carlo simulation of relay chains.

Every batch draws, in a fixed order, the transmitted bits, one pointing error
per hop and bit, one background sample per hop and bit and one thermal
sample per hop and bit from ``plan.rng.child(batch_index)``. Chains with the
same hops therefore see the same realizations whatever their relay type, and
results do not depend on how batches are spread over processes.
"""

import json
import logging
import math
import sys
import warnings
from dataclasses import asdict, dataclass, field
from functools import partial
from multiprocessing import Pool
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from ohlrelay import BAR_FORMAT
from ohlrelay.channel import (PointingError, channel_gain_exact_batch,
                              channel_gain_farfield, sample_pointing_batch)
from ohlrelay.errors import DomainError
from ohlrelay.numerics import RngStream
from ohlrelay.relay_chain import (AF_GAIN_MODES, NoiseBudget, RelayChainConfig,
                                  af_average_gains, af_chain_output,
                                  df_decide, ohl_chain_step, photodetect)

logger = logging.getLogger(__name__)
handler = logging.StreamHandler(sys.stdout)
formatter = logging.Formatter(
    '[%(asctime)s] %(module)s.%(funcName)s %(levelname)s: %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S')
handler.setFormatter(formatter)
logger.addHandler(handler)
logger.setLevel(logging.INFO)

CHANNEL_MODES = ("farfield", "exact_integral")
AF_THRESHOLD_RULES = ("mean_eye", "genie_midpoint")
MIN_TRIALS = 10_000
APPROX_MODEL_TOLERANCE = 0.1


@dataclass(frozen=True)
class McPlan:
    """
    How many bits to simulate and where the randomness comes from.

    Args:
        trials (int): transmitted bits, at least 10 000.
        batch_size (int): bits per batch; must divide ``trials``.
        rng (RngStream): parent stream, batch ``k`` uses ``rng.child(k)``.
        channel_mode (str): ``farfield`` or ``exact_integral``.
        confidence_z (float): acceptance band in standard errors.
        threads (int): worker processes.
    """
    trials: int
    batch_size: int
    rng: RngStream
    channel_mode: str = "farfield"
    confidence_z: float = 3.0
    threads: int = 1

    def __post_init__(self):
        if int(self.trials) < MIN_TRIALS:
            raise DomainError(f"At least {MIN_TRIALS} trials are required, got {self.trials}.")
        if int(self.batch_size) < 1 or int(self.trials) % int(self.batch_size):
            raise DomainError(f"batch_size {self.batch_size} must divide trials {self.trials}.")
        if self.channel_mode not in CHANNEL_MODES:
            raise DomainError(f"Unknown channel mode {self.channel_mode}; expected one of {CHANNEL_MODES}.")
        if not self.confidence_z > 0:
            raise DomainError(f"confidence_z must be positive, got {self.confidence_z}.")
        object.__setattr__(self, "trials", int(self.trials))
        object.__setattr__(self, "batch_size", int(self.batch_size))
        object.__setattr__(self, "threads", max(1, int(self.threads)))

    @property
    def n_batches(self) -> int:
        return self.trials // self.batch_size


@dataclass
class McResult:
    ber_estimate: float
    std_error: float
    trials_run: int
    per_hop_flip_counts: List[int]
    error_count: int = 0
    label: str = ""

    @classmethod
    def from_counts(cls, errors: int, trials: int, flips: Sequence[int], label: str = "") -> "McResult":
        p = errors / trials
        return cls(ber_estimate=p,
                   std_error=math.sqrt(p * (1.0 - p) / trials),
                   trials_run=trials,
                   per_hop_flip_counts=[int(f) for f in flips],
                   error_count=int(errors),
                   label=label)


@dataclass(frozen=True)
class BatchDraws:
    bits: np.ndarray
    h: np.ndarray
    bg: np.ndarray
    thermal: np.ndarray


@dataclass(frozen=True)
class ValidationCheck:
    name: str
    analytic_pe: float
    mc_pe: float
    std_error: float
    z_margin: float
    verdict: str
    trials: int = 0
    notes: str = field(default="", compare=False)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


def draw_batch(cfg: RelayChainConfig, noise: NoiseBudget, rng: RngStream, n: int,
               channel_mode: str = "farfield") -> BatchDraws:
    """Random inputs of ``n`` bits through every hop of ``cfg``."""
    gen = rng.generator
    bits = gen.integers(0, 2, size=n)
    gains = np.empty((cfg.hop_count, n))
    for i, ((geom, beam), fading) in enumerate(zip(cfg.hops, cfg.fadings)):
        theta_x, theta_y = sample_pointing_batch(geom, rng, n)
        wi = beam.receiver_beam_radius_wi
        if channel_mode == "exact_integral":
            gains[i] = channel_gain_exact_batch(geom, wi, theta_x, theta_y)
        else:
            gains[i] = channel_gain_farfield(fading, geom, wi, PointingError(theta_x, theta_y))
    bg = gen.normal(0.0, noise.background_sigma, size=(cfg.hop_count, n))
    thermal = gen.normal(0.0, noise.thermal_sigma, size=(cfg.hop_count, n))
    return BatchDraws(bits=bits, h=gains, bg=bg, thermal=thermal)


def _electrical(noise: NoiseBudget, p_optical: np.ndarray, thermal: np.ndarray) -> np.ndarray:
    # photocurrent referred back to optical watts
    return photodetect(noise, p_optical, thermal) / noise.responsivity_R


def count_chain_errors(cfg: RelayChainConfig, noise: NoiseBudget, draws: BatchDraws,
                       use_ase_approx: bool = True) -> Tuple[int, List[int]]:
    """
    Push one batch through an OHL or DF chain.

    Returns:
        Tuple[int, List[int]]: end-to-end bit errors and, per hop, the number
        of decisions that differ from the bit the hop received.
    """
    bits = draws.bits
    p_tx = cfg.source_power * bits.astype(float)
    carried = bits
    flips = []
    for i, node in enumerate(cfg.relays):
        h = draws.h[i]
        if node.relay_type == "OHL":
            p_tx, decided = ohl_chain_step(node, noise, p_tx, h, draws.bg[i], use_ase_approx)
        elif node.relay_type == "DF":
            statistic = _electrical(noise, p_tx * h + draws.bg[i], draws.thermal[i])
            decided = df_decide(noise, cfg.tx_power_into(i) * h, statistic)
            p_tx = node.target_tx_power * decided.astype(float)
        else:
            raise DomainError("AF relays carry no decisions; use simulate_af_ber.")
        flips.append(int(np.count_nonzero(decided != carried)))
        carried = decided

    last = cfg.hop_count - 1
    h = draws.h[last]
    statistic = _electrical(noise, p_tx * h + draws.bg[last], draws.thermal[last])
    decided = df_decide(noise, cfg.tx_power_into(last) * h, statistic)
    flips.append(int(np.count_nonzero(decided != carried)))
    return int(np.count_nonzero(decided != bits)), flips


def _chain_batch(batch_index: int, cfg: RelayChainConfig, noise: NoiseBudget, plan: McPlan,
                 use_ase_approx: bool) -> Tuple[int, List[int]]:
    draws = draw_batch(cfg, noise, plan.rng.child(batch_index), plan.batch_size, plan.channel_mode)
    return count_chain_errors(cfg, noise, draws, use_ase_approx)


def mean_eye_threshold(cfg: RelayChainConfig, noise: NoiseBudget, gain_mode: str = "average") -> float:
    """
    Fixed AF destination threshold: midpoint of the noise-free on and off
    levels when every hop sits at its mean channel gain.

    The gains follow ``gain_mode`` evaluated at the mean channel, so the
    threshold is the same for every transmitted bit.
    """
    means = [fading.mean() for fading in cfg.fadings]
    if gain_mode == "instantaneous":
        gains = [node.target_tx_power / (cfg.tx_power_into(i) * means[i]) for i, node in enumerate(cfg.relays)]
    else:
        gains = af_average_gains(cfg, noise)
    silent = [0.0] * cfg.hop_count
    level_one = af_chain_output(cfg, gains, means, silent, noise, bit=1, clamp=False)
    level_zero = af_chain_output(cfg, gains, means, silent, noise, bit=0, clamp=False)
    return 0.5 * (level_one + level_zero)


def _af_batch(batch_index: int, cfg: RelayChainConfig, noise: NoiseBudget, plan: McPlan,
              dest_threshold: Optional[float], gain_mode: str) -> Tuple[int, List[int]]:
    # dest_threshold None selects the per-trial midpoint on the realized gains
    draws = draw_batch(cfg, noise, plan.rng.child(batch_index), plan.batch_size, plan.channel_mode)
    if gain_mode == "instantaneous":
        gains = [node.target_tx_power / (cfg.tx_power_into(i) * draws.h[i]) for i, node in enumerate(cfg.relays)]
    else:
        gains = af_average_gains(cfg, noise)
    last = cfg.hop_count - 1
    p_dest = af_chain_output(cfg, gains, draws.h, draws.bg, noise, bit=draws.bits, clamp=False)
    statistic = _electrical(noise, p_dest, draws.thermal[last])
    if dest_threshold is None:
        silent = np.zeros_like(draws.bg)
        level_one = af_chain_output(cfg, gains, draws.h, silent, noise, bit=1, clamp=False)
        level_zero = af_chain_output(cfg, gains, draws.h, silent, noise, bit=0, clamp=False)
        threshold = (level_one + level_zero) / 2.0
    else:
        threshold = dest_threshold
    decided = (statistic >= threshold).astype(int)
    errors = int(np.count_nonzero(decided != draws.bits))
    return errors, [0] * cfg.relay_count + [errors]


def _run_batches(worker: Callable[[int], Tuple[int, List[int]]], plan: McPlan, hops: int) -> Tuple[int, np.ndarray]:
    indices = range(plan.n_batches)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if plan.threads > 1:
            with Pool(plan.threads) as p:
                results = list(tqdm(p.imap(worker, indices), total=plan.n_batches, bar_format=BAR_FORMAT))
        else:
            results = [worker(k) for k in tqdm(indices, total=plan.n_batches, bar_format=BAR_FORMAT)]
    errors = sum(r[0] for r in results)
    flips = np.sum([r[1] for r in results], axis=0) if results else np.zeros(hops, dtype=int)
    return errors, flips


def simulate_chain_ber(cfg: RelayChainConfig,
                       noise: NoiseBudget,
                       plan: McPlan,
                       use_ase_approx: bool = True,
                       label: str = "") -> McResult:
    """
    Monte-Carlo bit error rate of an OHL or DF relay chain.

    Args:
        cfg (RelayChainConfig): chain; every relay is OHL or DF and the
            destination decides at half its received on-level.
        noise (NoiseBudget): noise at every node.
        plan (McPlan): trials, batching and randomness.
        use_ase_approx (bool): drop the ASE term of OHL relays.
        label (str): carried into the result.

    Returns:
        McResult: estimate, standard error and per-hop flip counts.
    """
    worker = partial(_chain_batch, cfg=cfg, noise=noise, plan=plan, use_ase_approx=use_ase_approx)
    errors, flips = _run_batches(worker, plan, cfg.hop_count)
    if not label:
        label = cfg.relays[0].relay_type if cfg.relays else "single_hop"
    result = McResult.from_counts(errors, plan.trials, flips, label)
    logger.debug("Chain BER %.4e +- %.1e over %i bits.", result.ber_estimate, result.std_error, plan.trials)
    return result


def simulate_af_ber(cfg: RelayChainConfig,
                    noise: NoiseBudget,
                    plan: McPlan,
                    dest_threshold: Optional[float] = None,
                    gain_mode: str = "average",
                    threshold_rule: str = "mean_eye") -> McResult:
    """
    Monte-Carlo bit error rate of an amplify-and-forward chain.

    The destination compares its photocurrent with a threshold that does not
    depend on the trial: ``dest_threshold`` when given, otherwise
    :func:`mean_eye_threshold`. ``threshold_rule="genie_midpoint"`` instead
    decides each bit at the midpoint of the noise-free levels for its own
    realized channel gains. The result label names the rule.

    Args:
        gain_mode (str): ``average`` sets each AGC gain from mean powers,
            ``instantaneous`` from the realized on-level of its input.
        threshold_rule (str): ``mean_eye`` or ``genie_midpoint``; ignored
            when ``dest_threshold`` is given.
    """
    if gain_mode not in AF_GAIN_MODES:
        raise DomainError(f"Unknown AF gain mode {gain_mode}; expected one of {AF_GAIN_MODES}.")
    if threshold_rule not in AF_THRESHOLD_RULES:
        raise DomainError(f"Unknown AF threshold rule {threshold_rule}; expected one of {AF_THRESHOLD_RULES}.")
    if any(node.relay_type != "AF" for node in cfg.relays):
        raise DomainError("simulate_af_ber needs AF relays only.")
    if dest_threshold is not None and not dest_threshold > 0:
        raise DomainError(f"Destination threshold must be positive, got {dest_threshold}.")
    if dest_threshold is not None:
        threshold, label = dest_threshold, f"fixed_threshold={dest_threshold:.6g}"
    elif threshold_rule == "mean_eye":
        threshold, label = mean_eye_threshold(cfg, noise, gain_mode), "mean_eye"
    else:
        threshold, label = None, "genie_midpoint"
    worker = partial(_af_batch, cfg=cfg, noise=noise, plan=plan, dest_threshold=threshold, gain_mode=gain_mode)
    errors, flips = _run_batches(worker, plan, cfg.hop_count)
    return McResult.from_counts(errors, plan.trials, flips, f"AF/{gain_mode}/{label}")


def validate_report(analytic: float, mc: McResult, confidence_z: float = 3.0, approximate_model: bool = False,
                    name: str = "") -> ValidationCheck:
    """
    Compare an analytic error probability with a Monte-Carlo estimate.

    Passes iff ``|analytic - estimate| <= z * std_error``, widened by 10 % of
    ``analytic`` when the analytic path uses the three-term Q approximation.
    ``z_margin`` is the signed distance ``(analytic - estimate) / std_error``.
    """
    diff = analytic - mc.ber_estimate
    band = confidence_z * mc.std_error
    if approximate_model:
        band += APPROX_MODEL_TOLERANCE * abs(analytic)
    if mc.std_error > 0:
        margin = diff / mc.std_error
    else:
        margin = 0.0 if diff == 0 else math.copysign(math.inf, diff)
    return ValidationCheck(name=name,
                           analytic_pe=float(analytic),
                           mc_pe=mc.ber_estimate,
                           std_error=mc.std_error,
                           z_margin=margin,
                           verdict="pass" if abs(diff) <= band else "fail",
                           trials=mc.trials_run,
                           notes=mc.label)


def format_report(checks: Sequence[ValidationCheck]) -> str:
    """Deterministic JSON rendering of validation checks."""
    return json.dumps([asdict(check) for check in checks], indent=4, sort_keys=True)
