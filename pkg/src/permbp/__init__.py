"""Belief propagation over permutations: linear-extension counting,
position marginals, ranking and model fitting for comparison graphs."""

from .bp import BPResult, MessageSet, posterior_arrival_times, run_bp
from .cheb import ChebSeries
from .graph import (
    ComparisonGraph,
    GroundTruth,
    gen_btl_comparisons,
    gen_grown_network,
    gen_random_directed,
    gen_random_partial_order,
    gen_step_comparisons,
    load_graph,
    parse_edge_list,
)
from .kernels import Kernel
from .oracle import count_le_exact, marginal_density_exact, partition_function_exact, rank_distribution_exact
from .popdyn import population_dynamics
from .rankings import greedy_decimation, violations
from .thermo import (
    annealed_entropy,
    count_linear_extensions,
    evaluate_kernel,
    fit_beta,
    log_likelihood,
    model_select,
)

__version__ = "0.1.0"
