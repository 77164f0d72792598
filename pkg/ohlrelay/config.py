import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

from ohlrelay.channel import LINK_CLASSES, LinkGeometry
from ohlrelay.constellation import (ConstellationConfig, GroundScenario,
                                    LinkLimits)
from ohlrelay.errors import ConfigError, DomainError
from ohlrelay.lens import IDENTITY_CALIBRATION, LensSystem, VoltageCalibration
from ohlrelay.montecarlo import AF_THRESHOLD_RULES, CHANNEL_MODES, McPlan
from ohlrelay.numerics import QuadratureSpec, RngStream
from ohlrelay.optimizer import OptimizerSettings
from ohlrelay.relay_chain import AF_GAIN_MODES, NoiseBudget

logger = logging.getLogger(__name__)
handler = logging.StreamHandler(sys.stdout)
formatter = logging.Formatter(
    '[%(asctime)s] %(module)s.%(funcName)s %(levelname)s: %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S')
handler.setFormatter(formatter)
logger.addHandler(handler)
logger.setLevel(logging.INFO)

DEFAULTS_PATH = Path(__file__).parent / "defaults.json"
HOP_MODES = ("fixed-total", "fixed-hop")

# random stream ids; snapshots use ohlrelay.constellation.SNAPSHOT_STREAM
MC_STREAM = 2
VALIDATION_STREAM = 3

_POSITIVE = (
    "tx_power_w", "sigma_theta_intra_rad", "sigma_theta_inter_rad", "aperture_radius_m", "divergence_rad",
    "wavelength_m", "planck_h", "optical_freq_hz", "bandwidth_hz", "responsivity_a_per_w", "ohl_output_w",
    "altitude_m", "earth_radius_m", "max_inter_orbit_m", "max_intra_orbit_m", "separation_m",
    "corridor_half_angle_deg", "lens_w0_m", "lens_spacing_m", "focal_min_m", "focal_max_m", "lens_response_s",
    "link_length_m", "threshold_min_w", "threshold_max_w", "beam_min_m", "beam_max_m", "total_distance_m",
    "epsilon_rel", "quad_abs_tol", "quad_rel_tol", "grid_threshold_min_sigmas", "grid_threshold_max_sigmas",
    "grid_width_min_m", "grid_width_max_m", "confidence_z")
_NON_NEGATIVE = ("n_sp", "p_bg_w", "sigma_thermal", "perturbation_deg", "min_clearance_m", "seed")


@dataclass
class ExperimentConfig:
    """
    Every parameter of an experiment, flat, with the canonical defaults.

    The defaults mirror ``ohlrelay/defaults.json``. Types are coerced on
    construction so values read from JSON (e.g. ``1e5`` for an integer
    count) are accepted.
    """
    # transmitter, channel and receiver
    tx_power_w: float = 4.0
    sigma_theta_intra_rad: float = 50e-6
    sigma_theta_inter_rad: float = 150e-6
    aperture_radius_m: float = 0.1
    divergence_rad: float = 400e-6
    wavelength_m: float = 1550e-9
    planck_h: float = 6.6e-34
    optical_freq_hz: float = 1.9e14
    bandwidth_hz: float = 2e8
    n_sp: float = 1.1
    p_bg_w: float = 6e-9
    responsivity_a_per_w: float = 0.8
    sigma_thermal: float = 1e-9
    ohl_output_w: float = 1e-6
    # constellation
    altitude_m: float = 600e3
    inclination_deg: float = 53.0
    planes: int = 20
    sats_per_plane: int = 25
    perturbation_deg: float = 1.0
    earth_radius_m: float = 6371e3
    max_inter_orbit_m: float = 1e6
    max_intra_orbit_m: float = 2e6
    min_clearance_m: float = 100e3
    # ground scenario
    source_lat_deg: float = 20.0
    source_lon_deg: float = 0.0
    bearing_deg: float = 90.0
    separation_m: float = 14125e3
    corridor_half_angle_deg: float = 15.0
    # liquid lens
    lens_w0_m: float = 2e-3
    lens_spacing_m: float = 40e-3
    focal_min_m: float = 15e-3
    focal_max_m: float = 60e-3
    lens_response_s: float = 5e-3
    lens_calibration: str = ""
    # sweeps
    link_length_m: float = 1000e3
    link_class: str = "inter_orbit"
    threshold_min_w: float = 1e-9
    threshold_max_w: float = 100e-9
    threshold_points: int = 200
    beam_min_m: float = 100.0
    beam_max_m: float = 1000.0
    beam_points: int = 46
    relays_min: int = 1
    relays_max: int = 14
    total_distance_m: float = 5000e3
    hop_mode: str = "fixed-total"
    num_snapshots: int = 4
    # solvers
    epsilon_rel: float = 1e-3
    max_inner: int = 50
    max_outer: int = 50
    quad_abs_tol: float = 1e-12
    quad_rel_tol: float = 1e-9
    quad_max_subdivisions: int = 200
    grid_thresholds: int = 256
    grid_widths: int = 256
    grid_threshold_min_sigmas: float = 1.0
    grid_threshold_max_sigmas: float = 12.0
    grid_width_min_m: float = 100.0
    grid_width_max_m: float = 2000.0
    # Monte Carlo
    mc_trials: int = 100000
    mc_batch_size: int = 10000
    mc_channel_mode: str = "farfield"
    confidence_z: float = 3.0
    af_gain_mode: str = "average"
    af_threshold_rule: str = "mean_eye"
    seed: int = 7

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            try:
                if f.type in (int, "int"):
                    coerced = int(value)
                    if coerced != value:
                        raise ValueError(f"{value} is not an integer")
                elif f.type in (float, "float"):
                    coerced = float(value)
                else:
                    coerced = str(value)
            except (TypeError, ValueError) as err:
                raise ConfigError(f"Config value {f.name}={value!r} has the wrong type: {err}") from err
            setattr(self, f.name, coerced)

        for name in _POSITIVE:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}.")
        for name in _NON_NEGATIVE:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}.")
        if self.link_class not in LINK_CLASSES:
            raise ConfigError(f"link_class must be one of {LINK_CLASSES}, got {self.link_class}.")
        if self.hop_mode not in HOP_MODES:
            raise ConfigError(f"hop_mode must be one of {HOP_MODES}, got {self.hop_mode}.")
        if self.mc_channel_mode not in CHANNEL_MODES:
            raise ConfigError(f"mc_channel_mode must be one of {CHANNEL_MODES}, got {self.mc_channel_mode}.")
        if self.af_gain_mode not in AF_GAIN_MODES:
            raise ConfigError(f"af_gain_mode must be one of {AF_GAIN_MODES}, got {self.af_gain_mode}.")
        if self.af_threshold_rule not in AF_THRESHOLD_RULES:
            raise ConfigError(f"af_threshold_rule must be one of {AF_THRESHOLD_RULES}, got {self.af_threshold_rule}.")
        if not 1 <= self.relays_min <= self.relays_max:
            raise ConfigError(f"Relay range {self.relays_min}..{self.relays_max} is empty.")
        if not self.threshold_min_w < self.threshold_max_w:
            raise ConfigError("threshold_min_w must be below threshold_max_w.")
        if not self.beam_min_m < self.beam_max_m:
            raise ConfigError("beam_min_m must be below beam_max_m.")
        for name in ("threshold_points", "beam_points", "num_snapshots", "planes", "sats_per_plane",
                     "max_inner", "max_outer", "quad_max_subdivisions", "grid_thresholds", "grid_widths"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}.")

    def noise_budget(self) -> NoiseBudget:
        return NoiseBudget(background_sigma=self.p_bg_w,
                           n_sp=self.n_sp,
                           planck_h=self.planck_h,
                           optical_freq_f=self.optical_freq_hz,
                           bandwidth_B0=self.bandwidth_hz,
                           responsivity_R=self.responsivity_a_per_w,
                           thermal_sigma=self.sigma_thermal)

    def optimizer_settings(self) -> OptimizerSettings:
        return OptimizerSettings(epsilon_rel=self.epsilon_rel, max_inner=self.max_inner, max_outer=self.max_outer)

    def quadrature_spec(self) -> QuadratureSpec:
        return QuadratureSpec(abs_tol=self.quad_abs_tol,
                              rel_tol=self.quad_rel_tol,
                              max_subdivisions=self.quad_max_subdivisions)

    def constellation_config(self) -> ConstellationConfig:
        return ConstellationConfig(num_planes=self.planes,
                                   sats_per_plane=self.sats_per_plane,
                                   altitude=self.altitude_m,
                                   inclination=self.inclination_deg,
                                   perturbation_max=self.perturbation_deg,
                                   earth_radius=self.earth_radius_m,
                                   seed=self.seed)

    def link_limits(self) -> LinkLimits:
        return LinkLimits(max_inter_orbit=self.max_inter_orbit_m,
                          max_intra_orbit=self.max_intra_orbit_m,
                          min_altitude_clearance=self.min_clearance_m,
                          sigma_intra=self.sigma_theta_intra_rad,
                          sigma_inter=self.sigma_theta_inter_rad)

    def ground_scenario(self) -> GroundScenario:
        return GroundScenario(source_lat=self.source_lat_deg,
                              source_lon=self.source_lon_deg,
                              bearing=self.bearing_deg,
                              separation=self.separation_m,
                              corridor_half_angle=self.corridor_half_angle_deg)

    def lens_system(self) -> LensSystem:
        return LensSystem(input_waist_w0=self.lens_w0_m,
                          spacing_Lprime=self.lens_spacing_m,
                          focal_range=(self.focal_min_m, self.focal_max_m),
                          wavelength=self.wavelength_m,
                          response_time=self.lens_response_s)

    def voltage_calibration(self) -> VoltageCalibration:
        return VoltageCalibration.from_file(self.lens_calibration or IDENTITY_CALIBRATION)

    def link_geometry(self, length: Optional[float] = None, link_class: Optional[str] = None,
                      sigma_theta: Optional[float] = None) -> LinkGeometry:
        """Link of the configured (or given) class; tracking accuracy follows the class."""
        link_class = link_class or self.link_class
        if sigma_theta is None:
            sigma_theta = self.sigma_theta_intra_rad if link_class == "intra_orbit" else self.sigma_theta_inter_rad
        return LinkGeometry(length_L=self.link_length_m if length is None else length,
                            jitter_sigma_theta=sigma_theta,
                            aperture_radius_ra=self.aperture_radius_m,
                            wavelength_lambda=self.wavelength_m,
                            link_class=link_class)

    def beam_width_for(self, length: float) -> float:
        """Receiver beam width produced by the configured divergence."""
        return self.divergence_rad * length

    def mc_plan(self, threads: int = 1, stream_id: int = MC_STREAM, trials: Optional[int] = None) -> McPlan:
        try:
            return McPlan(trials=trials or self.mc_trials,
                          batch_size=self.mc_batch_size,
                          rng=RngStream(self.seed, stream_id),
                          channel_mode=self.mc_channel_mode,
                          confidence_z=self.confidence_z,
                          threads=threads)
        except DomainError as err:
            raise ConfigError(f"Invalid Monte-Carlo settings: {err}") from err


def _read_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except json.JSONDecodeError as err:
        raise ConfigError(f"Config file {path} is not valid JSON: {err}") from err
    if not isinstance(document, dict):
        raise ConfigError(f"Config file {path} must hold a flat JSON object.")
    return document


def load_config(path: Optional[str] = None) -> ExperimentConfig:
    """
    Load an experiment config, user values over the packaged defaults.

    Args:
        path (str): JSON file with any subset of the config keys.

    Returns:
        ExperimentConfig: merged configuration.

    Raises:
        ConfigError: unknown keys, wrong types or out-of-range values.
    """
    values = _read_json(DEFAULTS_PATH)
    if path is not None:
        user = _read_json(path)
        known = {f.name for f in fields(ExperimentConfig)}
        unknown = sorted(set(user) - known)
        if unknown:
            raise ConfigError(f"Unknown config keys in {path}: {', '.join(unknown)}.")
        values.update(user)
        logger.debug("Loaded %i config overrides from %s.", len(user), path)
    return ExperimentConfig(**values)


def write_config(cfg: ExperimentConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(asdict(cfg), f, indent=4, sort_keys=True)


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON rendering of ``cfg``."""
    canonical = json.dumps(asdict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
