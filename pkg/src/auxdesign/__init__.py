"""Bayesian experimental design for simulable models with intractable likelihoods.

Workflow: build emulated auxiliary models off-line from model simulations,
check their adequacy, then search the design space by approximate coordinate
exchange over Monte Carlo expected-utility estimates in which the likelihood
and the copula-coupled marginal likelihood are both tractable.
"""

from .ace import AceConfig, ace_optimize, acceptance_binary, acceptance_normal
from .coupled import (
    AdequacyError,
    ConditionalAux,
    MarginalAux,
    TCopulaFit,
    aux_loglik,
    aux_loglik_batch,
    aux_marginal_loglik,
    build_conditional,
    build_marginal,
    build_marginal_modelset,
    copula_logdensity,
    copula_sample,
    fit_copula,
    fit_copula_from_sample,
    fit_copula_from_u,
    sample_coupled,
)
from .design_space import (
    Design,
    DesignSpace,
    MinSpacing,
    check_constraints,
    equally_spaced,
    latin_hypercube,
    load_design_csv,
    maximin_lhd,
    save_design_csv,
)
from .diagnostics import AdequacyReport, assess_conditional, assess_coupled, assess_marginal
from .emulator import MgpFit, Standardizer, fit_mgp, kernel_eval, load_mgp, save_mgp
from .families import AuxiliaryFamily, AuxParams, get_family
from .models import (
    DirectModel,
    MarkovJumpModel,
    ModelSet,
    compartmental_loglik,
    compartmental_mean,
    compartmental_sample,
    compartmental_variance,
    conjugate_normal_toy,
    epidemic_model_set,
    get_model,
    gillespie_simulate,
    simulate_response_matrix,
    simulate_rows,
    simulate_trajectories,
)
from .priors import (
    GammaMeanVar,
    LogNormalIndependent,
    MultivariateNormal,
    Prior,
    SqrtBivariateNormal,
    UniformBox,
)
from .utility import (
    AuxLikelihoodSource,
    EvalBudget,
    ExactLikelihoodSource,
    UtilityEvaluation,
    cost_benchmark,
    expected_utility_aux,
    expected_utility_models,
    expected_utility_nested,
)

__version__ = "0.1.0"
