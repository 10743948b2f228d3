"""Simulation and distance-bound verification for spatial random graphs."""
from .boolean import BooleanConfig, sample_boolean_pair, sample_boolean_percolation
from .bounds import (BoundReport, boolean_bound, coupling_bound_bstar, discretisation_bound,
                     glauber_expected_coupling_time, pip_coupling_constants, pip_epsilon,
                     soft_rgg_bound, stein_factor_edge, stein_factor_vertex)
from .core import (BaseMetricParams, NumericalError, QuadratureSpec, RngStream,
                   ValidationError, Window, integrate)
from .experiments import (ResultsTable, run_boolean_experiment, run_discretisation_experiment,
                          run_soft_rgg_experiment, simulate_glauber_coupling)
from .gbdp import (coupling_times, generator_apply, graph_difference, run_coupled_gbdp,
                   run_gbdp)
from .gospa import GospaParams, gospa, gospa_bruteforce, gospa_matrix
from .graph import EdgeModel, SpatialGraph, empty_graph, sample_rgg, sample_rgg_batch
from .lattice import DiscretisationGrid, coupled_continuous_lattice, discretise_model
from .point_process import (GibbsModel, PointPattern, conditional_intensity, gnz_residual,
                            sample_gibbs, sample_poisson)
from .transport import WassersteinEstimate, empirical_wasserstein, null_calibration

__version__ = "0.1.0"

__all__ = [
    "BooleanConfig", "sample_boolean_pair", "sample_boolean_percolation",
    "BoundReport", "boolean_bound", "coupling_bound_bstar", "discretisation_bound",
    "glauber_expected_coupling_time", "pip_coupling_constants", "pip_epsilon",
    "soft_rgg_bound", "stein_factor_edge", "stein_factor_vertex",
    "BaseMetricParams", "NumericalError", "QuadratureSpec", "RngStream", "ValidationError",
    "Window", "integrate",
    "ResultsTable", "run_boolean_experiment", "run_discretisation_experiment",
    "run_soft_rgg_experiment", "simulate_glauber_coupling",
    "coupling_times", "generator_apply", "graph_difference", "run_coupled_gbdp", "run_gbdp",
    "GospaParams", "gospa", "gospa_bruteforce", "gospa_matrix",
    "EdgeModel", "SpatialGraph", "empty_graph", "sample_rgg", "sample_rgg_batch",
    "DiscretisationGrid", "coupled_continuous_lattice", "discretise_model",
    "GibbsModel", "PointPattern", "conditional_intensity", "gnz_residual", "sample_gibbs",
    "sample_poisson",
    "WassersteinEstimate", "empirical_wasserstein", "null_calibration",
]
