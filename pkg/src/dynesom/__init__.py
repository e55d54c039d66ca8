"""Decentralized tracking of time-varying consensus optima with dynamic ESOM-K."""

__version__ = "0.1.0"

from .baselines import BaselineConfig, BaselineState, baseline_step, extra_step, nn0_step
from .esom import (EsomConfig, SolverState, build_split_operators, dense_truncated_inverse,
                   descent_recursion_round, esom_init, esom_step, load_checkpoint,
                   local_gradient, save_checkpoint, truncated_direction)
from .harness import (ExperimentConfig, TrajectoryRecord, export_csv, emit_plot_data,
                      run_experiment, sweep, write_outputs)
from .metrics import (drift_metric, error_metric, fit_contraction, lyapunov_metric,
                      primal_distance, steady_state_bound)
from .network import CommLog, SyncNetwork
from .objective import (DynamicLeastSquares, FrozenObjective, FunctionObjective,
                        estimate_bounds, make_dynamic_least_squares)
from .oracle import (DenseConsensus, exact_esom_step, kkt_solution, optimal_dual, pmm_step,
                     solve_instantaneous_optimum, sqrt_psd)
from .topology import (NetworkTopology, WeightMatrix, gamma_smallest_nonzero_eig,
                       generate_random_graph, metropolis_weights, read_edge_list,
                       validate_weight_matrix, write_edge_list)
