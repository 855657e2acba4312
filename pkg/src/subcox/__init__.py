"""Weighted lasso Cox regression for heterogeneous patient subgroups."""

from .data import (
    SurvivalDataset,
    SurvivalObservation,
    from_observations,
    read_dataset_csv,
    write_dataset_csv,
)
from .survival import (
    KaplanMeierEstimate,
    WeibullParams,
    concordance_index,
    kaplan_meier,
    weibull_from_survival_points,
)
from .cox import (
    CoxCoefficients,
    CoxFitPath,
    PathConfig,
    cv_select_lambda,
    fit_cox_lasso_path,
    lambda_max,
    predict_risk,
    weighted_cox_gradient,
    weighted_cox_loglik,
)
from .weights import (
    ClassifierSpec,
    ProbabilityMatrix,
    WeightMatrix,
    build_classification_features,
    compute_weights,
    cross_validated_probabilities,
    fit_multinomial,
    fit_random_forest,
    fixed_weights,
    group_auc,
)
from .simulate import (
    GroupParams,
    SimulationScenario,
    default_group_params,
    effect_vectors,
    generate_scenario,
    mean_vector,
    simulate_covariates,
    simulate_survival,
)
from .pipeline import (
    ExperimentReport,
    ExperimentSettings,
    ModelSpec,
    RepetitionResult,
    aggregate,
    default_suite,
    run_experiment,
    run_repetition,
    stratified_subsample,
)

__version__ = "0.1.0"

__all__ = [
    "SurvivalDataset",
    "SurvivalObservation",
    "from_observations",
    "read_dataset_csv",
    "write_dataset_csv",
    "KaplanMeierEstimate",
    "WeibullParams",
    "concordance_index",
    "kaplan_meier",
    "weibull_from_survival_points",
    "CoxCoefficients",
    "CoxFitPath",
    "PathConfig",
    "cv_select_lambda",
    "fit_cox_lasso_path",
    "lambda_max",
    "predict_risk",
    "weighted_cox_gradient",
    "weighted_cox_loglik",
    "ClassifierSpec",
    "ProbabilityMatrix",
    "WeightMatrix",
    "build_classification_features",
    "compute_weights",
    "cross_validated_probabilities",
    "fit_multinomial",
    "fit_random_forest",
    "fixed_weights",
    "group_auc",
    "GroupParams",
    "SimulationScenario",
    "default_group_params",
    "effect_vectors",
    "generate_scenario",
    "mean_vector",
    "simulate_covariates",
    "simulate_survival",
    "ExperimentReport",
    "ExperimentSettings",
    "ModelSpec",
    "RepetitionResult",
    "aggregate",
    "default_suite",
    "run_experiment",
    "run_repetition",
    "stratified_subsample",
    "__version__",
]
