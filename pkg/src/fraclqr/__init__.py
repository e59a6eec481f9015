"""Discounted linear-quadratic control of Caputo fractional stochastic delay
equations, via resolvents of a two-sided Fredholm kernel."""

from .model import (
    AdmissibilityConstants,
    LqModel,
    admissibility_constants,
    k_constant,
    rho_alpha,
    rho_tilde_alpha,
    validate,
)
from .kernels import (
    KernelEvaluator,
    QuadratureError,
    f_lambda,
    frac_kernel,
    g_lambda,
    k_lambda,
    m_mu_norm_bound,
)
from .fredholm import (
    ContractionError,
    DiscretizedKernel,
    ResolventMatrix,
    TimeGrid,
    direct_resolvent,
    discretize,
    neumann_resolvent,
    phi_hat,
    psi_hat,
    solve_fie,
)
from .simulate import (
    BrownianPath,
    DivergenceError,
    SamplePath,
    SdvieCoefficients,
    fractional_variance,
    lift_and_simulate,
    sample_brownian,
    simulate_frac_sdde,
    simulate_sdvie,
    stochastic_convolution,
)
from .synthesis import (
    CostEstimate,
    FeedbackLaw,
    OptimalPath,
    cost_estimate,
    default_horizon,
    inverse_T,
    make_grid,
    optimal_paths,
    synthesize,
    transform_T,
)
from .verify import (
    DominanceReport,
    ResidualReport,
    RiccatiSolution,
    adjoint_identity,
    cost_dominance,
    oc1_residual,
    refinement_study,
    riccati_oracle,
    sfie_residual,
)

__version__ = "0.1.0"
