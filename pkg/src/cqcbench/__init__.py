"""Doubly robust estimation of the equal-quantile outcome map.

Given observational data (outcome, covariates, binary treatment), the
package estimates the function sending an untreated outcome to the treated
outcome occupying the same conditional quantile, along with derived
quantities (the signed outcome gap and quantile treatment effects), plus
baselines, simulation DGPs with closed-form truths, a Monte-Carlo benchmark
runner, and a CSV-based CLI.
"""

from .kernels import DegenerateMassError, KernelSpec, WeightVector, kernel_eval, nw_regress, nw_weights
from .isotonic import IsotonicResult, pava_project
from .nuisance import (
    CcdfEvaluator,
    Dataset,
    NuisanceModel,
    PropensityEvaluator,
    SingleArmError,
    SplitPlan,
    ccdf_generalised_inverse,
    fit_ccdf,
    fit_nuisance,
    fit_propensity,
    make_split,
)
from .pseudo import PseudoEvaluation, PseudoOutcomeKind, dr_pseudo, ipw_pseudo, oracle_pseudo
from .estimator import (
    ContrastFit,
    CqcEstimate,
    CqcFit,
    build_grid,
    cqc_to_cqte,
    cross_fit_contrast,
    estimate_cqc,
    estimate_cqc_many,
    fit_contrast,
    fit_oracle_contrast,
    quantile_diff,
    surface_eval,
)
from .baselines import (
    BaselineKind,
    DrEstimator,
    IpwEstimator,
    OracleEstimator,
    SeparateEstimator,
    ipw_cqc,
    oracle_dr_cqc,
    separate_plugin_cqc,
)
from .simlab import (
    DgpSpec,
    ErrorReport,
    EstimatorResult,
    TruthOracle,
    cv_bandwidth,
    run_experiment,
    sample_dgp,
    sample_holdout,
    truth,
)

__version__ = "0.1.0"
