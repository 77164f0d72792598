import logging
import math
import sys
import time
import warnings
from dataclasses import replace
from functools import partial
from multiprocessing import Pool
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from scipy.special import gamma as gamma_function
from scipy.special import gammainc
from tqdm import tqdm

from ohlrelay import (BAR_FORMAT, BEAM_OPTIMUM_HEADER, BEAM_SWEEP_HEADER,
                      PATH_HEADER, RELAY_SWEEP_HEADER, SNAPSHOT_HEADER,
                      THRESHOLD_SWEEP_HEADER, TRACE_HEADER)
from ohlrelay.channel import (FadingModel, LinkGeometry, PointingError,
                              channel_gain_exact, channel_gain_farfield,
                              fading_pdf, sample_pointing_batch)
from ohlrelay.config import (MC_STREAM, VALIDATION_STREAM, ExperimentConfig,
                             config_hash)
from ohlrelay.constellation import (HopErrorTable, RoutePath, load_route,
                                    load_snapshot, save_route, save_snapshot,
                                    scenario_route)
from ohlrelay.error_analysis import (EndToEndResult, HopErrorInputs,
                                     compose_end_to_end, pe_chain_markov,
                                     pe_df_hop_closed, pe_df_hop_quadrature,
                                     pe_e2e, pe_ohl_approx, pe_ohl_hop,
                                     pe_ohl_hop_components)
from ohlrelay.errors import (DomainError, FocalRangeError,
                             InfeasibleTargetError, NoInteriorOptimumError,
                             SurrogateRegimeError)
from ohlrelay.lens import (divergence_for_target, lens_for_link,
                           solve_focal_length, waist_for_divergence)
from ohlrelay.montecarlo import (McResult, ValidationCheck, simulate_af_ber,
                                 simulate_chain_ber, validate_report)
from ohlrelay.numerics import (RngStream, integrate, lambert_w,
                               lower_incomplete_gamma, q_approx3_relative_error)
from ohlrelay.optimizer import (DEFAULT_INIT_THRESHOLD_SIGMAS, JointOptimum,
                                beamwidth_closed_form, beamwidth_exact_argmin,
                                exhaustive_joint_search, joint_optimize,
                                joint_optimize_links, search_grid,
                                stationarity_residual, threshold_optimize,
                                threshold_trace)
from ohlrelay.relay_chain import RelayChainConfig
from ohlrelay.utils import CsvTable

logger = logging.getLogger(__name__)
handler = logging.StreamHandler(sys.stdout)
formatter = logging.Formatter(
    '[%(asctime)s] %(module)s.%(funcName)s %(levelname)s: %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S')
handler.setFormatter(formatter)
logger.addHandler(handler)
logger.setLevel(logging.INFO)

VALIDATION_SUITES = ("numerics", "channel", "hop", "chain", "optimizer")
LENS_REPORT_KEYS = ("target_beam_width_m", "link_length_m", "divergence_rad", "target_wLprime_m", "focal_length_m",
                    "focal_length_closed_form_m", "closed_form_rel_diff", "forward_residual", "branch", "voltage_v")
# q_approx3 overestimates Q by up to about 24 % between x = 3 and x = 4
Q_APPROX_ENVELOPE = 0.25
VALIDATION_CHAIN_HOPS = 10


def _table(header: Sequence[str], command: str, cfg: ExperimentConfig) -> CsvTable:
    return CsvTable(header=list(header),
                    provenance={
                        "command": command,
                        "config_sha256": config_hash(cfg),
                        "seed": cfg.seed
                    })


def _map(func: Callable, items: Iterable, threads: int = 1) -> list:
    """Ordered map over ``items``, in a process pool when ``threads > 1``."""
    items = list(items)
    if threads > 1 and len(items) > 1:
        with Pool(threads) as p:
            return list(tqdm(p.imap(func, items), total=len(items), bar_format=BAR_FORMAT))
    return [func(item) for item in tqdm(items, bar_format=BAR_FORMAT)]


def _hop_inputs(cfg: ExperimentConfig, geom: LinkGeometry, wi: float, threshold: Optional[float] = None,
                tx_power: Optional[float] = None) -> HopErrorInputs:
    noise = cfg.noise_budget()
    if threshold is None:
        threshold = DEFAULT_INIT_THRESHOLD_SIGMAS * noise.background_sigma
    return HopErrorInputs.from_link(geom, wi, cfg.tx_power_w if tx_power is None else tx_power, threshold, noise)


def _af_estimate(cfg: ExperimentConfig, geoms: Sequence[LinkGeometry], widths: Sequence[float], threads: int,
                 child: int) -> McResult:
    chain = RelayChainConfig.uniform(geoms, widths, "AF", source_power=cfg.tx_power_w, target_tx_power=cfg.tx_power_w)
    plan = cfg.mc_plan(threads, stream_id=MC_STREAM)
    plan = replace(plan, rng=plan.rng.child(child))
    return simulate_af_ber(chain, cfg.noise_budget(), plan, gain_mode=cfg.af_gain_mode,
                           threshold_rule=cfg.af_threshold_rule)


def _ohl_error_at(p_th: float, inputs: HopErrorInputs, spec) -> float:
    return pe_ohl_hop(inputs.with_threshold(p_th), spec)


def sweep_threshold(cfg: ExperimentConfig,
                    length: Optional[float] = None,
                    sigma_theta: Optional[float] = None,
                    link_class: Optional[str] = None,
                    with_af: bool = False,
                    threads: int = 1) -> CsvTable:
    """
    Error probability of a single-relay system against the OHL threshold.

    Both hops share the same geometry. The OHL column is the relay hop
    followed by the DF destination; the DF and AF columns do not depend on
    the threshold and repeat on every row.

    Args:
        cfg (ExperimentConfig): experiment parameters.
        length (float): hop length override, meters.
        sigma_theta (float): pointing jitter override, radians.
        link_class (str): link class override.
        with_af (bool): add the Monte-Carlo AF columns.
        threads (int): worker processes.

    Returns:
        CsvTable: ``THRESHOLD_SWEEP_HEADER`` rows.
    """
    geom = cfg.link_geometry(length, link_class, sigma_theta)
    wi = cfg.beam_width_for(geom.length_L)
    spec = cfg.quadrature_spec()
    inputs = _hop_inputs(cfg, geom, wi, threshold=cfg.threshold_min_w)
    pe_dest = pe_df_hop_quadrature(inputs, spec)
    pe_df = pe_e2e([pe_dest, pe_dest], "df_chain")

    af_pe, af_se = math.nan, math.nan
    if with_af:
        result = _af_estimate(cfg, [geom, geom], [wi, wi], threads, child=1)
        af_pe, af_se = result.ber_estimate, result.std_error

    thresholds = np.linspace(cfg.threshold_min_w, cfg.threshold_max_w, cfg.threshold_points)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        hop_errors = _map(partial(_ohl_error_at, inputs=inputs, spec=spec), thresholds, threads)

    table = _table(THRESHOLD_SWEEP_HEADER, "sweep-threshold", cfg)
    for p_th, pe_hop in zip(thresholds, hop_errors):
        table.append([float(p_th), pe_e2e([pe_hop, pe_dest], "ohl_chain"), pe_df, af_pe, af_se])
    best = int(np.argmin(table.column("pe_ohl")))
    logger.info("Lowest OHL error %.4e at %.4e W.", table.rows[best][1], table.rows[best][0])
    return table


def hop_length_for(cfg: ExperimentConfig, n_relays: int, hop_mode: str) -> float:
    """Hop length of an ``n_relays`` chain under the given hop mode."""
    if hop_mode == "fixed-total":
        return cfg.total_distance_m / (n_relays + 1)
    if hop_mode == "fixed-hop":
        return cfg.link_length_m
    raise DomainError(f"Unknown hop mode {hop_mode}.")


def _relay_row(n_relays: int, cfg: ExperimentConfig, hop_mode: str) -> Tuple[float, float]:
    hop = hop_length_for(cfg, n_relays, hop_mode)
    geom = cfg.link_geometry(hop)
    spec = cfg.quadrature_spec()
    inputs = _hop_inputs(cfg, geom, cfg.beam_width_for(hop))
    optimum = threshold_optimize(inputs, cfg.optimizer_settings(), spec)
    pe_ohl = pe_ohl_hop(inputs.with_threshold(optimum.threshold), spec)
    pe_df = pe_df_hop_quadrature(inputs, spec)
    return (pe_e2e([pe_ohl] * n_relays + [pe_df], "ohl_chain"), pe_e2e([pe_df] * (n_relays + 1), "df_chain"))


def sweep_relays(cfg: ExperimentConfig,
                 hop_mode: Optional[str] = None,
                 relay_range: Optional[Tuple[int, int]] = None,
                 with_af: bool = True,
                 threads: int = 1) -> CsvTable:
    """
    End-to-end error of OHL, DF and AF chains against the number of relays.

    OHL relays use the optimal threshold of their hop. With ``fixed-total``
    the configured total distance is split evenly over ``N_r + 1`` hops;
    with ``fixed-hop`` every hop has the configured link length.
    """
    hop_mode = hop_mode or cfg.hop_mode
    low, high = relay_range or (cfg.relays_min, cfg.relays_max)
    if not 1 <= low <= high:
        raise DomainError(f"Relay range must satisfy 1 <= min <= max, got {low}..{high}.")
    counts = list(range(low, high + 1))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        analytic = _map(partial(_relay_row, cfg=cfg, hop_mode=hop_mode), counts, threads)

    table = _table(RELAY_SWEEP_HEADER, "sweep-relays", cfg)
    for n_relays, (pe_ohl, pe_df) in zip(counts, analytic):
        af_pe, af_se = math.nan, math.nan
        if with_af:
            hop = hop_length_for(cfg, n_relays, hop_mode)
            geoms = [cfg.link_geometry(hop)] * (n_relays + 1)
            result = _af_estimate(cfg, geoms, [cfg.beam_width_for(hop)] * len(geoms), threads, child=n_relays)
            af_pe, af_se = result.ber_estimate, result.std_error
        table.append([n_relays, pe_ohl, pe_df, af_pe, af_se])
    return table


def trace_threshold(cfg: ExperimentConfig,
                    beam_widths: Sequence[float] = (400.0, 600.0),
                    initial_threshold: float = 10e-9,
                    length: Optional[float] = None) -> CsvTable:
    """Raw fixed-point iterates of the OHL threshold for each beam width."""
    geom = cfg.link_geometry(length)
    spec = cfg.quadrature_spec()
    table = _table(TRACE_HEADER, "trace-threshold", cfg)
    for w in beam_widths:
        inputs = _hop_inputs(cfg, geom, w, threshold=initial_threshold)
        trace = threshold_trace(inputs, initial_threshold, cfg.optimizer_settings(), spec)
        logger.info("Beam width %.1f m: %i fixed-point steps.", w, len(trace) - 1)
        for iteration, p_th in enumerate(trace):
            table.append([float(w), iteration, p_th, pe_ohl_hop(inputs.with_threshold(p_th), spec)])
    return table


def _beam_row(w: float, cfg: ExperimentConfig, geom: LinkGeometry, threshold: float) -> Tuple[float, float]:
    inputs = _hop_inputs(cfg, geom, w, threshold=threshold)
    try:
        approx = pe_ohl_approx(inputs)
    except SurrogateRegimeError:
        approx = math.nan
    return pe_ohl_hop(inputs, cfg.quadrature_spec()), approx


def sweep_beam(cfg: ExperimentConfig,
               thresholds: Sequence[float] = (10e-9, ),
               length: Optional[float] = None,
               threads: int = 1) -> CsvTable:
    """OHL hop error and its power-law surrogate against the receiver beam width."""
    geom = cfg.link_geometry(length)
    widths = np.linspace(cfg.beam_min_m, cfg.beam_max_m, cfg.beam_points)
    table = _table(BEAM_SWEEP_HEADER, "sweep-beam", cfg)
    for threshold in thresholds:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            rows = _map(partial(_beam_row, cfg=cfg, geom=geom, threshold=threshold), widths, threads)
        for w, (pe, approx) in zip(widths, rows):
            table.append([float(w), float(threshold), pe, approx])
    return table


def _beam_optimum_row(pair: Tuple[float, float], cfg: ExperimentConfig) -> Tuple[float, float]:
    threshold, length = pair
    geom = cfg.link_geometry(length)
    inputs = _hop_inputs(cfg, geom, cfg.beam_width_for(length), threshold=threshold)
    try:
        closed = beamwidth_closed_form(inputs, geom)
    except NoInteriorOptimumError as err:
        logger.debug("No interior optimum at %.3e W, %.0f m: %s", threshold, length, err)
        closed = math.nan
    # widths scale with the link length so every length sees the same divergence range
    scale = length / cfg.link_length_m
    grid = np.linspace(cfg.grid_width_min_m * scale, cfg.grid_width_max_m * scale, cfg.grid_widths)
    exact = beamwidth_exact_argmin(inputs, geom, grid, cfg.quadrature_spec())
    return closed, exact


def compare_beam_optimum(cfg: ExperimentConfig,
                         thresholds: Sequence[float] = (10e-9, 20e-9, 40e-9),
                         lengths: Sequence[float] = (500e3, 1000e3, 1500e3),
                         threads: int = 1) -> CsvTable:
    """Closed-form Lambert beam width against the exact-error argmin."""
    pairs = [(float(p), float(L)) for p in thresholds for L in lengths]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rows = _map(partial(_beam_optimum_row, cfg=cfg), pairs, threads)
    table = _table(BEAM_OPTIMUM_HEADER, "compare-beam-optimum", cfg)
    for (p_th, length), (closed, exact) in zip(pairs, rows):
        table.append([p_th, length, closed, exact, abs(closed - exact) / exact])
    return table


def route_scenario(cfg: ExperimentConfig,
                   output_dir: str,
                   snapshot_index: int = 0,
                   objective: str = "min_total_length") -> Tuple[Path, Path]:
    """
    Route the ground scenario on one snapshot and save both documents.

    Returns:
        Tuple[Path, Path]: paths of ``snapshot.json`` and ``route.json``.
    """
    snap, path = _scenario(cfg, snapshot_index, objective)
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    digest = config_hash(cfg)
    snapshot_file = output_dir / "snapshot.json"
    route_file = output_dir / "route.json"
    save_snapshot(snap, snapshot_file, seed=cfg.seed, config_sha256=digest)
    save_route(path, route_file, epoch_tag=snap.epoch_tag, config_sha256=digest)
    logger.info("Route over %i links (%i relays), %.0f km.", len(path.links), path.relay_count,
                path.total_length / 1e3)
    return snapshot_file, route_file


def _scenario(cfg: ExperimentConfig, snapshot_index: int, objective: str = "min_total_length"):
    hop_error = None
    if objective == "min_e2e_pe":
        hop_error = HopErrorTable.from_optimizer(cfg.noise_budget(),
                                                 cfg.tx_power_w,
                                                 cfg.aperture_radius_m,
                                                 cfg.link_limits(),
                                                 cfg.wavelength_m,
                                                 settings=cfg.optimizer_settings())
    return scenario_route(cfg.constellation_config(), cfg.ground_scenario(), cfg.link_limits(), snapshot_index,
                          objective, hop_error)


def _exhaustive_grid(cfg: ExperimentConfig, grid_size: Optional[int] = None):
    n_threshold = grid_size or cfg.grid_thresholds
    n_width = grid_size or cfg.grid_widths
    return search_grid(cfg.noise_budget(), n_threshold, n_width,
                       (cfg.grid_threshold_min_sigmas, cfg.grid_threshold_max_sigmas),
                       (cfg.grid_width_min_m, cfg.grid_width_max_m))


def _optimize_route(
        cfg: ExperimentConfig, path: RoutePath, threads: int, grid_size: Optional[int]
) -> Tuple[List[LinkGeometry], List[JointOptimum], List[JointOptimum], float, float]:
    geoms = path.link_geometries(cfg.aperture_radius_m, cfg.wavelength_m)
    noise = cfg.noise_budget()
    spec = cfg.quadrature_spec()
    grid = _exhaustive_grid(cfg, grid_size)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        start = time.perf_counter()
        proposed = joint_optimize_links(geoms, noise, cfg.tx_power_w, cfg.optimizer_settings(), threads, spec)
        runtime_proposed = time.perf_counter() - start
        start = time.perf_counter()
        exhaustive = [
            exhaustive_joint_search(geom, noise, cfg.tx_power_w, grid, spec, threads)
            for geom in tqdm(geoms, bar_format=BAR_FORMAT)
        ]
        runtime_exhaustive = time.perf_counter() - start
    return geoms, proposed, exhaustive, runtime_proposed, runtime_exhaustive


def path_end_to_end(cfg: ExperimentConfig, geoms: Sequence[LinkGeometry],
                    optima: Sequence[JointOptimum]) -> EndToEndResult:
    """
    End-to-end error of a routed path whose links run at their optima.

    Every link but the last ends at an OHL relay and contributes its
    optimized hop error. The last link ends at the DF destination, which is
    scored with the DF error at that link's optimized beam width.

    Raises:
        DomainError: no links, or one optimum per link is missing.
    """
    if not optima or len(geoms) != len(optima):
        raise DomainError(f"Need one optimum per link, got {len(optima)} for {len(geoms)} links.")
    last = optima[-1]
    inputs = _hop_inputs(cfg, geoms[-1], last.beam_width_star, threshold=last.threshold_star)
    pe_dest = pe_df_hop_quadrature(inputs, cfg.quadrature_spec())
    return compose_end_to_end([o.achieved_pe for o in optima[:-1]] + [pe_dest], "ohl_chain")


def _focal_length(cfg: ExperimentConfig, wi: float, length: float) -> float:
    try:
        return lens_for_link(cfg.lens_system(), wi, length).focal_length_F
    except (FocalRangeError, InfeasibleTargetError) as err:
        warnings.warn(f"No lens setting for a {wi:.1f} m beam over {length / 1e3:.0f} km: {err}", RuntimeWarning)
        return math.nan


def optimize_path(cfg: ExperimentConfig,
                  snapshot_file: str,
                  route_file: str,
                  threads: int = 1,
                  grid_size: Optional[int] = None) -> CsvTable:
    """
    Optimize every link of a saved route and compare with exhaustive search.

    The route is re-validated against the snapshot before anything runs.
    The last row holds the end-to-end error of both methods.

    Raises:
        IntegrityError: the route does not belong to the snapshot or breaks
            a link constraint.
    """
    snap = load_snapshot(snapshot_file)
    path = load_route(route_file, snap, cfg.link_limits())
    geoms, proposed, exhaustive, _, _ = _optimize_route(cfg, path, threads, grid_size)

    table = _table(PATH_HEADER, "optimize-path", cfg)
    for index, (link, best, reference) in enumerate(zip(path.links, proposed, exhaustive)):
        table.append([
            index, link.link_class, link.length, link.sigma_theta_assigned, best.threshold_star, best.beam_width_star,
            _focal_length(cfg, best.beam_width_star, link.length), best.achieved_pe, reference.achieved_pe,
            (best.achieved_pe - reference.achieved_pe) / reference.achieved_pe
        ])
    e2e = path_end_to_end(cfg, geoms, proposed).e2e_pe
    e2e_reference = path_end_to_end(cfg, geoms, exhaustive).e2e_pe
    table.append(["e2e_pe", "", path.total_length, math.nan, math.nan, math.nan, math.nan, e2e, e2e_reference,
                  (e2e - e2e_reference) / e2e_reference])
    logger.info("End-to-end error %.4e (exhaustive %.4e) over %i relays.", e2e, e2e_reference, path.relay_count)
    return table


def snapshot_study(cfg: ExperimentConfig,
                   num_snapshots: Optional[int] = None,
                   timing: bool = True,
                   threads: int = 1,
                   grid_size: Optional[int] = None) -> CsvTable:
    """
    End-to-end error over several snapshots, proposed against exhaustive.

    With ``timing=False`` the runtime columns are ``nan`` so the table is
    reproducible byte for byte.
    """
    num_snapshots = num_snapshots or cfg.num_snapshots
    table = _table(SNAPSHOT_HEADER, "snapshot-study", cfg)
    for index in range(num_snapshots):
        snap, path = _scenario(cfg, index)
        optimized = _optimize_route(cfg, path, threads, grid_size)
        geoms, proposed, exhaustive, runtime_proposed, runtime_exhaustive = optimized
        table.append([
            index, path.relay_count,
            path_end_to_end(cfg, geoms, proposed).e2e_pe,
            path_end_to_end(cfg, geoms, exhaustive).e2e_pe, runtime_proposed if timing else math.nan,
            runtime_exhaustive if timing else math.nan
        ])
        logger.info("Snapshot %s done: %i relays.", snap.epoch_tag, path.relay_count)
    return table


def lens_report(cfg: ExperimentConfig,
                target_beam_width: Optional[float] = None,
                length: Optional[float] = None,
                branch: str = "auto") -> Dict[str, object]:
    """
    Lens setting that produces a receiver beam width on a link.

    Reports the divergence, the beam radius needed at the output lens, the
    root-found focal length, the older closed form for comparison and the
    drive voltage from the calibration table (``None`` outside the table).
    """
    length = cfg.link_length_m if length is None else length
    target_beam_width = cfg.beam_width_for(length) if target_beam_width is None else target_beam_width
    system = cfg.lens_system()
    theta = divergence_for_target(target_beam_width, length)
    target = waist_for_divergence(theta, system.wavelength)
    solution = solve_focal_length(system, target, branch)
    try:
        voltage = cfg.voltage_calibration().voltage(solution.focal_length_F)
    except FocalRangeError:
        voltage = None
    closed = solution.closed_form_F
    return {
        "target_beam_width_m": target_beam_width,
        "link_length_m": length,
        "divergence_rad": theta,
        "target_wLprime_m": target,
        "focal_length_m": solution.focal_length_F,
        "focal_length_closed_form_m": None if math.isnan(closed) else closed,
        "closed_form_rel_diff": None if math.isnan(closed) else abs(closed - solution.focal_length_F) /
        solution.focal_length_F,
        "forward_residual": solution.forward_residual,
        "branch": solution.branch,
        "voltage_v": voltage,
    }


def tolerance_check(name: str, reference: float, value: float, tolerance: float, notes: str = "") -> ValidationCheck:
    """Deterministic check passing iff ``|value - reference| <= tolerance``."""
    diff = value - reference
    return ValidationCheck(name=name,
                           analytic_pe=float(reference),
                           mc_pe=float(value),
                           std_error=float(tolerance),
                           z_margin=float(diff / tolerance),
                           verdict="pass" if abs(diff) <= tolerance else "fail",
                           trials=0,
                           notes=notes or "tolerance")


def _validation_plan(cfg: ExperimentConfig, threads: int, child: int, trials: Optional[int]):
    plan = cfg.mc_plan(threads, stream_id=VALIDATION_STREAM, trials=trials)
    return replace(plan, rng=plan.rng.child(child))


def _numerics_checks(cfg: ExperimentConfig) -> List[ValidationCheck]:
    checks = []
    envelope = max(q_approx3_relative_error(x) for x in np.linspace(0.5, 5.0, 91))
    checks.append(tolerance_check("q_approx3_envelope", 0.0, envelope, Q_APPROX_ENVELOPE, "max relative error"))

    worst = 0.0
    for x, branch in ((-0.3, "principal"), (-0.1, "principal"), (0.5, "principal"), (10.0, "principal"),
                      (1e3, "principal"), (-0.3, "minus_one"), (-1e-3, "minus_one")):
        w = lambert_w(x, branch)
        worst = max(worst, abs(w * math.exp(w) - x) / abs(x))
    checks.append(tolerance_check("lambert_w_residual", 0.0, worst, 1e-12))

    worst = 0.0
    for s, x in ((0.5, 0.1), (1.7778, 1.0), (3.0, 7.5), (12.0, 4.0)):
        value = lower_incomplete_gamma(s, x)
        reference = gammainc(s, x) * gamma_function(s)
        recurrence = s * value - x**s * math.exp(-x)
        worst = max(worst,
                    abs(value - reference) / reference,
                    abs(lower_incomplete_gamma(s + 1.0, x) - recurrence) / recurrence)
    checks.append(tolerance_check("incomplete_gamma_identities", 0.0, worst, 1e-10))

    geom = cfg.link_geometry()
    fm = FadingModel.from_beam(geom, cfg.beam_width_for(geom.length_L))
    mass = integrate(lambda h: float(fading_pdf(fm, h)), 0.0, fm.h_max, cfg.quadrature_spec(),
                     singular_power=fm.gamma_shape)
    checks.append(tolerance_check("fading_pdf_normalization", 1.0, mass, 1e-9))
    return checks


def _channel_checks(cfg: ExperimentConfig) -> List[ValidationCheck]:
    checks = []
    geom = cfg.link_geometry()
    wi = cfg.beam_width_for(geom.length_L)
    fm = FadingModel.from_beam(geom, wi)
    worst = 0.0
    for theta in (0.0, geom.jitter_sigma_theta, 2.0 * geom.jitter_sigma_theta):
        err = PointingError(theta, 0.0)
        exact = channel_gain_exact(geom, wi, err, cfg.quadrature_spec())
        worst = max(worst, abs(exact - float(channel_gain_farfield(fm, geom, wi, err))) / exact)
    checks.append(tolerance_check("farfield_vs_exact_gain", 0.0, worst, 1e-3))

    rng = RngStream(cfg.seed, VALIDATION_STREAM).child(0)
    theta_x, theta_y = sample_pointing_batch(geom, rng, 200_000)
    gains = channel_gain_farfield(fm, geom, wi, PointingError(theta_x, theta_y))
    statistic = stats.kstest(gains, fm.cdf).statistic
    checks.append(tolerance_check("fading_ks_statistic", 0.0, float(statistic), 0.005))
    return checks


def _hop_checks(cfg: ExperimentConfig, threads: int, trials: Optional[int]) -> List[ValidationCheck]:
    checks = []
    geom = cfg.link_geometry()
    wi = cfg.beam_width_for(geom.length_L)
    noise = cfg.noise_budget()
    spec = cfg.quadrature_spec()
    inputs = _hop_inputs(cfg, geom, wi)

    pe_quad = pe_df_hop_quadrature(inputs, spec)
    single = RelayChainConfig.uniform([geom], [wi], "DF", source_power=cfg.tx_power_w)
    mc = simulate_chain_ber(single, noise, _validation_plan(cfg, threads, 1, trials), label="DF/single_hop")
    checks.append(validate_report(pe_quad, mc, cfg.confidence_z, name="df_hop_quadrature_vs_mc"))

    closed = pe_df_hop_closed(inputs)
    approx_quad = pe_df_hop_quadrature(inputs, spec, q_function="approx3")
    checks.append(tolerance_check("df_closed_vs_approx_quadrature", 0.0, abs(closed - approx_quad) / approx_quad, 1e-6))
    checks.append(tolerance_check("df_closed_vs_exact_quadrature", 0.0, abs(closed - pe_quad) / pe_quad,
                                  Q_APPROX_ENVELOPE))

    optimum = threshold_optimize(inputs, cfg.optimizer_settings(), spec)
    tuned = inputs.with_threshold(optimum.threshold)
    chain = RelayChainConfig.uniform([geom, geom], [wi, wi],
                                     "OHL",
                                     source_power=cfg.tx_power_w,
                                     target_tx_power=cfg.tx_power_w,
                                     thresholds=[optimum.threshold],
                                     ohl_output_level=cfg.ohl_output_w)
    mc = simulate_chain_ber(chain, noise, _validation_plan(cfg, threads, 2, trials), label="OHL/single_relay")
    analytic = pe_chain_markov([pe_ohl_hop_components(tuned, spec)], pe_quad)
    checks.append(validate_report(analytic, mc, cfg.confidence_z, name="ohl_relay_analytic_vs_mc"))
    return checks


def _chain_checks(cfg: ExperimentConfig, threads: int, trials: Optional[int]) -> List[ValidationCheck]:
    checks = []
    geom = cfg.link_geometry()
    wi = cfg.beam_width_for(geom.length_L)
    noise = cfg.noise_budget()
    spec = cfg.quadrature_spec()
    inputs = _hop_inputs(cfg, geom, wi)
    hops = VALIDATION_CHAIN_HOPS
    pe_df = pe_df_hop_quadrature(inputs, spec)

    optimum = threshold_optimize(inputs, cfg.optimizer_settings(), spec)
    components = pe_ohl_hop_components(inputs.with_threshold(optimum.threshold), spec)
    chain = RelayChainConfig.uniform([geom] * hops, [wi] * hops,
                                     "OHL",
                                     source_power=cfg.tx_power_w,
                                     target_tx_power=cfg.tx_power_w,
                                     thresholds=[optimum.threshold] * (hops - 1),
                                     ohl_output_level=cfg.ohl_output_w)
    mc = simulate_chain_ber(chain, noise, _validation_plan(cfg, threads, 3, trials), label="OHL/chain")
    analytic = pe_chain_markov([components] * (hops - 1), pe_df)
    checks.append(validate_report(analytic, mc, cfg.confidence_z, name="ohl_chain_analytic_vs_mc"))

    chain = RelayChainConfig.uniform([geom] * hops, [wi] * hops, "DF", source_power=cfg.tx_power_w,
                                     target_tx_power=cfg.tx_power_w)
    mc = simulate_chain_ber(chain, noise, _validation_plan(cfg, threads, 4, trials), label="DF/chain")
    analytic = pe_chain_markov([(pe_df, pe_df)] * (hops - 1), pe_df)
    checks.append(validate_report(analytic, mc, cfg.confidence_z, name="df_chain_analytic_vs_mc"))
    return checks


def _optimizer_checks(cfg: ExperimentConfig, threads: int) -> List[ValidationCheck]:
    checks = []
    geom = cfg.link_geometry()
    wi = cfg.beam_width_for(geom.length_L)
    noise = cfg.noise_budget()
    spec = cfg.quadrature_spec()
    inputs = _hop_inputs(cfg, geom, wi)

    optimum = threshold_optimize(inputs, cfg.optimizer_settings(), spec)
    checks.append(tolerance_check("threshold_stationarity_residual", 0.0,
                                  stationarity_residual(inputs, optimum.threshold, spec), 1e-9))

    grid = np.linspace(noise.background_sigma, 0.99 * inputs.peak_power, 10_000)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        errors = _map(partial(_ohl_error_at, inputs=inputs, spec=spec), grid, threads)
    grid_best = float(grid[int(np.argmin(errors))])
    cell = float(grid[1] - grid[0])
    checks.append(tolerance_check("threshold_vs_grid_argmin", grid_best, optimum.threshold, cell))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        joint = joint_optimize(geom, noise, cfg.tx_power_w, cfg.optimizer_settings(), spec=spec)
        reference = exhaustive_joint_search(geom, noise, cfg.tx_power_w, _exhaustive_grid(cfg), spec, threads)
    gap = (joint.achieved_pe - reference.achieved_pe) / reference.achieved_pe
    checks.append(tolerance_check("joint_vs_exhaustive_gap", 0.0, max(gap, 0.0), 0.05))
    return checks


def run_validation(cfg: ExperimentConfig,
                   suites: Sequence[str] = VALIDATION_SUITES,
                   threads: int = 1,
                   trials: Optional[int] = None) -> List[ValidationCheck]:
    """
    Compare analytic results with closed forms, identities and Monte-Carlo.

    Args:
        cfg (ExperimentConfig): experiment parameters.
        suites (Sequence[str]): any of ``VALIDATION_SUITES``.
        threads (int): worker processes.
        trials (int): Monte-Carlo trials per check; ``cfg.mc_trials`` when omitted.

    Returns:
        List[ValidationCheck]: one record per check, in suite order.
    """
    unknown = sorted(set(suites) - set(VALIDATION_SUITES))
    if unknown:
        raise DomainError(f"Unknown validation suites {unknown}; expected any of {VALIDATION_SUITES}.")
    runners = {
        "numerics": lambda: _numerics_checks(cfg),
        "channel": lambda: _channel_checks(cfg),
        "hop": lambda: _hop_checks(cfg, threads, trials),
        "chain": lambda: _chain_checks(cfg, threads, trials),
        "optimizer": lambda: _optimizer_checks(cfg, threads),
    }
    checks = []
    for suite in VALIDATION_SUITES:
        if suite not in suites:
            continue
        logger.info("Running %s checks.", suite)
        for check in runners[suite]():
            logger.info("%-36s %s (margin %.3g)", check.name, check.verdict, check.z_margin)
            checks.append(check)
    return checks
