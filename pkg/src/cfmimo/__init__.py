"""Uplink cell-free massive MIMO: correlation-based AP selection and
pilot/data power allocation, with a batch experiment harness and CLI."""

__version__ = "0.1.0"

from .channel import (ChannelRealization, PilotPlan, TrainingState,
                      assign_pilots, mmse_estimate, pilot_gram, received_pilot,
                      sample_channels)
from .clustering import (ApDistance, Association, Partition,
                         ap_correlation_matrix, associate_users,
                         baseline_association, hierarchical_cluster)
from .config import ExperimentConfig, apply_scheme, load_config
from .errors import (CapacityError, ConfigError, NumericalError,
                     UnsupportedModeError)
from .harness import (RunResult, calibrate_kappa, emit_outputs, run_batch,
                      run_experiment, sweep)
from .performance import (SinrReport, StatSummary, aggregate_stats,
                          closed_form_sinr, empirical_sinr, spectral_efficiency)
from .power_control import (DataSolveState, PilotSolveState, PosynomialCoeffs,
                            SinrCoefficients, build_sinr_coefficients,
                            feasibility_fixed_point, maximize_surrogate,
                            maxmin_data_powers, maxmin_data_powers_general,
                            posynomial_coefficients, posynomial_sinr,
                            sinr_ratio_parts, update_auxiliary,
                            wsrm_pilot_powers)
from .propagation import (LargeScale, LargeScaleModel, large_scale_gains,
                          noise_power_w, pathloss_three_slope, pathloss_umi,
                          psd_sqrt, sample_shadowing, with_covariance)
from .topology import (Point2D, Topology, ap_ue_3d, ap_ue_horizontal,
                       distance_3d, place_network, wrap_distance,
                       wrap_distance_matrix)

__all__ = [name for name in dir() if not name.startswith("_")]
