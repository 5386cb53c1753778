"""Simulation and EM estimation for regime-switching mean-reverting SDEs
driven by Normal Inverse Gaussian Levy noise.

The observed process follows dX_t = lam*(b(alpha_t) - X_t) dt + dZ_t with a
hidden finite-state Markov regime alpha and NIG noise Z.  The package
simulates paths on a refined Euler grid and recovers theta = (b(1..N), lam,
delta) from discrete observations by an EM scheme built on a Cauchy
quasi-likelihood, forward regime filtering and backward smoothing.
"""

from .ctmc import (
    ChainPath,
    GeneratorMatrix,
    simulate_chain,
    transition_matrix_approx,
    transition_prob_approx,
    validate_generator,
)
from .em import (
    EmConfig,
    EmResult,
    IterationRecord,
    em_fit,
    first_order_step,
    newton_step,
    quadratic_error,
    random_theta0,
    sort_regimes,
    termination_stat,
    update_generator,
)
from .errors import ConfigError, EvaluationError, NumericalFailure
from .likelihood import (
    ObservationSeries,
    SmoothedPairProbs,
    Theta,
    H_n,
    cauchy_transition_density,
    grad_H,
    grad_H_q,
    hessian_H,
    mu_prev,
)
from .nig import (
    NigParams,
    UnderflowWarning,
    bessel_k1,
    nig_density,
    sample_nig,
    std_cauchy_density,
    std_cauchy_limit_check,
)
from .sde import (
    ConvergenceReport,
    SimulationConfig,
    euler_path,
    self_convergence_test,
    simulate_path,
)
from .smoother import (
    FilterState,
    backward_smooth,
    forward_filter,
    smooth_regimes,
    smoothed_marginals,
)

__version__ = "0.1.0"

__all__ = [
    "ChainPath",
    "ConfigError",
    "ConvergenceReport",
    "EmConfig",
    "EmResult",
    "EvaluationError",
    "FilterState",
    "GeneratorMatrix",
    "H_n",
    "IterationRecord",
    "NigParams",
    "NumericalFailure",
    "ObservationSeries",
    "SimulationConfig",
    "SmoothedPairProbs",
    "Theta",
    "UnderflowWarning",
    "backward_smooth",
    "bessel_k1",
    "cauchy_transition_density",
    "em_fit",
    "euler_path",
    "first_order_step",
    "forward_filter",
    "grad_H",
    "grad_H_q",
    "hessian_H",
    "mu_prev",
    "newton_step",
    "nig_density",
    "quadratic_error",
    "random_theta0",
    "sample_nig",
    "self_convergence_test",
    "simulate_chain",
    "simulate_path",
    "smooth_regimes",
    "smoothed_marginals",
    "sort_regimes",
    "std_cauchy_density",
    "std_cauchy_limit_check",
    "termination_stat",
    "transition_matrix_approx",
    "transition_prob_approx",
    "update_generator",
    "validate_generator",
]
