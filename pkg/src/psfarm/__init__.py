"""Performance toolkit for balanced load balancing over finite-buffer
processor-sharing server farms.

Exact finite-farm analysis (reversible stationary measure, blocking,
generating-function transform), the mean-field limit and its fixed point,
large-farm asymptotics of blocking and occupancy fluctuations in the three
load regimes, a staffing rule for the critical window, and a discrete-event
simulator that validates all of it under arbitrary unit-mean job sizes.
"""

from .asymptotics import (AsymptoticEstimate, CltResult, blocking_asymptotic,
                          blocking_qed, blocking_subcritical,
                          blocking_supercritical, clt_covariance,
                          geometric_law, ld_rate, md_tail, staffing)
from .meanfield import (TrajectoryPoint, drift, fixed_point_mean,
                        fixed_point_residual, integrate, level_distribution,
                        mean_sojourn_meanfield, psi,
                        stationary_level_distribution)
from .model import (LevelDistribution, OccupancyVector, QuadratureError,
                    SingularDriftError, StaffingRangeError,
                    StateSpaceTooLarge, SystemConfig)
from .rng import RandomStream, stream_state
from .simulate import (BLOCKED, ExperimentReport, JobSizeDist, PolicyKind,
                       SimReport, insensitive_probabilities,
                       occupancy_snapshot_stream, route, run_experiment,
                       run_replication, state_code, state_time_histogram)
from .special import (RateFunctionData, adaptive_simpson, erlang_b,
                      erlang_b_inverse, gamma_alpha,
                      log_truncexp_expansion_residual, phi_hat, phi_hat_log,
                      rate_function, truncated_exp_sum)
from .stationary import (HeteroConfig, ServerClass, StationaryResult,
                         balance_function, blocking_via_integral,
                         dump_stationary_csv, enumerate_states,
                         exact_blocking_enumeration, generator_matrix,
                         hetero_routing_rates, hetero_stationary_from_generator,
                         hetero_stationary_log_prob, hetero_stationary_table,
                         routing_rates, state_count, stationary_from_generator,
                         stationary_log_prob, stationary_table, tasks_mgf)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
