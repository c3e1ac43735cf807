"""Survey-weighted Bayesian small area estimation with random-feature
logistic models: design-aware fitting, imputation, poststratification, and a
simulation-study harness."""

from .elm import ElmLayer, elm_init, elm_transform
from .errors import NumericalError, ValidationError
from .features import (
    SpatialBasis,
    Vocabulary,
    build_vocabulary,
    linear_covariates,
    spatial_basis,
    text_indicators,
)
from .model import (
    BudisSpec,
    DesignData,
    GibbsFit,
    VbFit,
    gibbs_fit,
    make_design,
    predict_proba,
    scale_weights,
    vb_fit,
)
from .multinomial import StickBreaking, fit_stick_breaking, sb_conditionals, sb_decompose, sb_reconstruct
from .polya_gamma import pg_identity_check, pg_mean, pg_sample
from .population import AreaEstimates, PopulationFrame, impute_cell_draw, posterior_predict_areas
from .sim import (
    ESTIMATORS,
    SimConfig,
    SimReport,
    make_synthetic_population,
    run_replicate,
    run_simulation,
    score,
)
from .survey import DesignDraw, direct_estimate, informative_size, poisson_pps_sample

__version__ = "0.1.0"

__all__ = [
    "AreaEstimates",
    "BudisSpec",
    "DesignData",
    "DesignDraw",
    "ESTIMATORS",
    "ElmLayer",
    "GibbsFit",
    "NumericalError",
    "PopulationFrame",
    "SimConfig",
    "SimReport",
    "SpatialBasis",
    "StickBreaking",
    "ValidationError",
    "VbFit",
    "Vocabulary",
    "build_vocabulary",
    "direct_estimate",
    "elm_init",
    "elm_transform",
    "fit_stick_breaking",
    "gibbs_fit",
    "impute_cell_draw",
    "informative_size",
    "linear_covariates",
    "make_design",
    "make_synthetic_population",
    "pg_identity_check",
    "pg_mean",
    "pg_sample",
    "poisson_pps_sample",
    "posterior_predict_areas",
    "predict_proba",
    "run_replicate",
    "run_simulation",
    "scale_weights",
    "score",
    "sb_conditionals",
    "sb_decompose",
    "sb_reconstruct",
    "spatial_basis",
    "text_indicators",
    "vb_fit",
]
