"""Toolkit for heterogeneous interacting-object continuous-time Markov
chains: per-object state probabilities via stochastic simulation, the
mean-field ODE, its 1/n-corrected (refined) version, and exact small-instance
analysis, plus model builders for list-based caches and two-choice load
balancing."""

__version__ = "0.1.0"

from .cache import (CacheConfig, build_random_m, cache_config, cache_error,
                    default_assignment, exact_steady_state, list_popularity,
                    zipf_popularities)
from .dynamics import (compile_dynamics, drift, drift_hessian, drift_jacobian,
                       move_subspace, q_matrix)
from .errors import (BudgetError, ConvergenceError, HetmfError, IntegrationError,
                     ModelError, ModelFormatError, MultipleEquilibriaWarning,
                     NonHurwitzError, ReducibleChainError, StateSpaceCapError)
from .loadbalance import (LBConfig, average_queue_length, build_two_choice,
                          homogeneous_baseline, lb_config, paper_mix_rates,
                          tail_distribution)
from .meanfield import Trajectory, fixed_point, integrate
from .model import (ModelSpec, TransitionRule, ValidationReport, add_rule, decode,
                    encode, load_model, new_model, rule, save_model, validate)
from .oracle import (FullChain, build_full_chain, stationary_marginals,
                     transient_marginals)
from .refined import (RefinedTrajectory, RefinementState, integrate_refined,
                      refined_integral_form, refined_steady_state)
from .simulator import (EventLog, SimEstimate, simulate_path, steady_state_mean,
                        transient_mean)

__all__ = [name for name in dir() if not name.startswith("_")]
