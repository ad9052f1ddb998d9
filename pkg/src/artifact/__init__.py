"""Off-policy TD, TDC and variance-reduced TDC with linear function approximation."""

from .algorithms import (AlgoParams, BoundMonitor, project, pseudo_gradients, run_baseline,
                         run_vrtd, run_vrtdc_iid, run_vrtdc_markov)
from .diagnostics import (RunTrace, aggregate_envelope, convergence_error, mc_update_variance,
                          tracking_error_sq)
from .env import (IIDSampler, generate_garnet, induced_chain, make_cycle2, make_features_gaussian,
                  make_frozen_lake, make_policy, sample_iid, sample_trajectory, stationary_distribution,
                  estimate_mixing)
from .stats import (Problem, compute_radii, exact_moments, hat_bar_transform, importance_ratio,
                    optimal_theta, sample_stats, spectral_constants)
from .theory import (check_conditions, constants_iid, constants_markov, rates_iid, rates_markov,
                     schedule_from_epsilon, vr_bounds)

__version__ = "0.1.0"
