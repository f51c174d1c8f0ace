"""Regression Monte Carlo for optimal stopping.

Interchangeable stochastic simulators, simulation designs and regression
emulators around one backward dynamic-emulation loop, with out-of-sample
policy evaluation, swing-option (multiple stopping) support and a benchmark
registry.
"""

__version__ = "0.1.0"

from .model import (
    ModelSpec,
    PathSet,
    discounted_reward,
    make_path_set,
    payoff,
    sim_step,
    simulate_paths,
)
from .sampling import RandomStream, halton, lhs, sobol, standard_normals
from .designs import (
    BatchedResponse,
    Design,
    batch_stats,
    path_design,
    pilot_bounding_box,
    spacefill_design,
)
from .emulators import (
    BasisSet,
    GPFit,
    GPHyper,
    fit_gp,
    fit_kernel,
    fit_lm,
    fit_piecewise_bw,
    monomial_bases,
    polynomial_bases,
    predict,
)
from .solvers import (
    PolicyFit,
    SolverConfig,
    acquisition_smcu,
    pathwise_stop,
    solve_fixed,
    solve_ls,
    solve_piecewise_bw,
    solve_seq,
    solve_seq_batch,
    solve_tvr,
)
from .policy import EvalResult, cv_adjust, european_value, forward_eval
from .swing import SwingPolicyFit, SwingSpec, solve_swing_fixed, swing_eval
from .bench import (
    INSTANCES,
    build_instance,
    make_test_set,
    reference_band,
    run_benchmark,
    run_preset,
)

__all__ = [
    "__version__",
    "ModelSpec", "PathSet", "sim_step", "payoff", "discounted_reward",
    "simulate_paths", "make_path_set",
    "RandomStream", "standard_normals", "sobol", "halton", "lhs",
    "Design", "BatchedResponse", "pilot_bounding_box", "spacefill_design",
    "path_design", "batch_stats",
    "BasisSet", "polynomial_bases", "monomial_bases", "fit_lm",
    "fit_piecewise_bw", "fit_kernel", "fit_gp", "GPFit", "GPHyper", "predict",
    "PolicyFit", "SolverConfig", "pathwise_stop", "solve_ls", "solve_tvr",
    "solve_fixed", "solve_piecewise_bw", "solve_seq", "solve_seq_batch",
    "acquisition_smcu",
    "EvalResult", "forward_eval", "european_value", "cv_adjust",
    "SwingSpec", "SwingPolicyFit", "solve_swing_fixed", "swing_eval",
    "INSTANCES", "build_instance", "make_test_set", "run_benchmark",
    "run_preset", "reference_band",
]
