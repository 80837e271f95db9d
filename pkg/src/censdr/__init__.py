"""censdr: distribution regression with a censored selection rule.

Three-step maximum-likelihood estimation of function-valued selection,
outcome, and sorting coefficients over (s, y) grids, with influence-function
based multiplier-bootstrap uniform confidence bands and counterfactual
distribution decompositions.
"""

from ._backend import backend_name, set_backend
from .errors import CensdrError
from .estimator import CoefficientPaths, GridSpec, fit, maximize
from .functionals import (
    GroupInputs,
    conditional_cdf_by_interval,
    counterfactual_cdf,
    generalized_quantile,
    hours_decomposition,
    joint_cdf,
    marginal_cdf_outcome,
    marginal_cdf_selection,
    wage_decomposition,
)
from .inference import (
    BandSet,
    InfluenceRecords,
    band,
    bootstrap_draws,
    influence,
    max_t_critical,
    sorting_function_band,
    variance_rho,
)
from .likelihood import (
    FloorConfig,
    ObservationTable,
    SortingLayout,
    StepParams,
    link,
    smooth_floor,
    step1_loglik,
    step2_loglik,
    step3_loglik,
)
from .lgr import ExclusionInputs, LgrPoint, local_correlation, solve_nu_rho0, solve_rho_s
from .simulate import BdrTruth, Design, HsmParams, simulate_bdr, simulate_hsm

__version__ = "0.1.0"

__all__ = [
    "BandSet",
    "BdrTruth",
    "CensdrError",
    "CoefficientPaths",
    "Design",
    "ExclusionInputs",
    "FloorConfig",
    "GridSpec",
    "GroupInputs",
    "HsmParams",
    "InfluenceRecords",
    "LgrPoint",
    "ObservationTable",
    "SortingLayout",
    "StepParams",
    "backend_name",
    "band",
    "bootstrap_draws",
    "conditional_cdf_by_interval",
    "counterfactual_cdf",
    "fit",
    "generalized_quantile",
    "hours_decomposition",
    "influence",
    "joint_cdf",
    "link",
    "local_correlation",
    "marginal_cdf_outcome",
    "marginal_cdf_selection",
    "max_t_critical",
    "maximize",
    "set_backend",
    "simulate_bdr",
    "simulate_hsm",
    "smooth_floor",
    "solve_nu_rho0",
    "solve_rho_s",
    "sorting_function_band",
    "step1_loglik",
    "step2_loglik",
    "step3_loglik",
    "variance_rho",
    "wage_decomposition",
    "__version__",
]
