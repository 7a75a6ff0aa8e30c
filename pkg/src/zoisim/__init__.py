"""Spatial plant population simulator with zone-of-influence competition.

Exact event-driven Monte Carlo for the individual-based dynamics, a
deterministic solver pair for the large-population limit, and validation
harnesses tying the two together.
"""

from .engine import (BIRTH, COMPETITION_DEATH, NATURAL_DEATH, EngineState,
                     EventRecord, GlobalRates, SimulationAbort, Trajectory,
                     flow, global_rates, run, step)
from .geometry import SpatialGrid, lens_area, torus_delta
from .kernels import (birth_rate, competition_u, growth_drift, island_cx_exact,
                      lambda_c, psi, richards_R, sample_dispersal)
from .meanfield import (ConvergenceRow, ScaledParams, WeightedMeasure,
                        convergence_experiment, scale_for_k, solve_particle,
                        solve_radius_grid)
from .observables import (QVReport, TestFunction, generator_l, pair,
                          predicted_qv, tf_one, tf_radius, tf_radius_sq)
from .params import ModelParams, ParameterError
from .population import Individual, Population, new_population
from .rng import make_stream, replica_seed, splitmix64

__version__ = "0.1.0"
