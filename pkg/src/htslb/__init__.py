"""Simulation and verification of load balancing in the many-server heavy-traffic regime."""
from ._accel import USE_NUMBA
from .analysis import (check_identities, convergence_sweep, empirical_wasserstein,
                       estimate_cross_term)
from .engine import QueueState, SteadyStateSample, replicate, run, step, transition
from .geometry import cone_generators, in_cone, project_to_cone, ssc_moments
from .model import Regime, SystemConfig, build_config, predict_limit
from .policies import (certify_pi1, dispatch, dispatching_preference, make_policy,
                       position_probabilities)
from .processes import (ProcessSpec, build_arrival_process, build_service_process, sample,
                        solve_three_point)

__version__ = "0.1.0"
