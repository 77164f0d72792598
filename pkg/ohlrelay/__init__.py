from ohlrelay.channel import (LINK_CLASSES, BeamConfig, FadingModel,
                              LinkGeometry, PointingError)
from ohlrelay.error_analysis import (HopErrorInputs, pe_df_hop_closed,
                                     pe_df_hop_quadrature, pe_e2e,
                                     pe_ohl_hop)
from ohlrelay.numerics import QuadratureSpec, RngStream
from ohlrelay.optimizer import (JointOptimum, OptimizerSettings,
                                joint_optimize)
from ohlrelay.relay_chain import (RELAY_TYPES, NoiseBudget, RelayChainConfig,
                                  RelayNodeConfig)

__version__ = "0.3.0"
__author__ = "ohlrelay developers"
__license__ = "BSD-3-Clause"

BAR_FORMAT = "{l_bar}{bar}| {n_fmt}/{total_fmt} [{elapsed}], {rate_fmt}{postfix}"

# CSV schemas; column order is part of the public interface
THRESHOLD_SWEEP_HEADER = ["p_th_w", "pe_ohl", "pe_df", "pe_af_mc", "pe_af_stderr"]
RELAY_SWEEP_HEADER = ["n_relays", "pe_ohl_e2e", "pe_df_e2e", "pe_af_e2e_mc", "pe_af_stderr"]
PATH_HEADER = [
    "link_index", "link_class", "length_m", "sigma_theta", "p_th_star_w",
    "w_star_m", "focal_len_m", "pe_hop", "pe_hop_exhaustive", "rel_gap"
]
SNAPSHOT_HEADER = [
    "snapshot_id", "n_relays", "e2e_pe_proposed", "e2e_pe_exhaustive",
    "runtime_proposed_s", "runtime_exhaustive_s"
]
TRACE_HEADER = ["beam_width_m", "iteration", "p_th_w", "pe_ohl"]
BEAM_SWEEP_HEADER = ["beam_width_m", "p_th_w", "pe_ohl", "pe_ohl_approx"]
BEAM_OPTIMUM_HEADER = ["p_th_w", "length_m", "w_star_closed_m", "w_star_exact_m", "rel_dev"]

__all__ = [
    "BeamConfig",
    "FadingModel",
    "HopErrorInputs",
    "JointOptimum",
    "LinkGeometry",
    "NoiseBudget",
    "OptimizerSettings",
    "PointingError",
    "QuadratureSpec",
    "RelayChainConfig",
    "RelayNodeConfig",
    "RngStream",
    "joint_optimize",
    "pe_df_hop_closed",
    "pe_df_hop_quadrature",
    "pe_e2e",
    "pe_ohl_hop",
]
