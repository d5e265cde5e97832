"""Adaptive tests for nonzero intercepts in high-dimensional factor models."""

__version__ = "0.1.0"

from .benchmarks import (
    CompetingResult,
    SharedCorrection,
    ThresholdedCovariance,
    com_test,
    fly_test,
    max_test,
    py_test,
    shared_corrections,
    thresholded_covariance,
)
from .errors import AlphaTestError
from .io import DataSetManifest, ReportDocument, RollingConfig, ingest, mimic_study, rolling_test
from .mclab import (
    AlphaScenario,
    CovarianceSpec,
    ErrorSpec,
    ExperimentDesign,
    FactorGarchSpec,
    RejectionReport,
    build_covariance,
    generate_panel,
    run_experiment,
    simulate_factors,
)
from .model import FactorFit, PanelData, TStatVector, fit_ols, t_statistics
from .nullsim import (
    NullTable,
    SeedSpec,
    TestOutcome,
    adaptive_null_draws,
    build_null_table,
    calibrate,
    simulate_z_star,
)
from .pipeline import DEFAULT_TESTS, TestConfig, run_panel_tests
from .precision import (
    PrecisionEstimate,
    ResidualCovariance,
    ScreeningSet,
    default_penalty,
    graphical_lasso,
    precision_matrix,
    screen,
    screened_covariance,
)
from .stats import (
    AdaptiveValue,
    StatisticValue,
    ZScores,
    adaptive_statistic,
    exact_statistic,
    modified_statistic,
    modified_statistic_curve,
    z_scores,
)

__all__ = [
    "__version__",
    "AlphaTestError",
    "PanelData",
    "FactorFit",
    "TStatVector",
    "fit_ols",
    "t_statistics",
    "ScreeningSet",
    "ResidualCovariance",
    "PrecisionEstimate",
    "screen",
    "screened_covariance",
    "graphical_lasso",
    "precision_matrix",
    "default_penalty",
    "ZScores",
    "StatisticValue",
    "AdaptiveValue",
    "z_scores",
    "modified_statistic",
    "modified_statistic_curve",
    "exact_statistic",
    "adaptive_statistic",
    "SeedSpec",
    "NullTable",
    "TestOutcome",
    "simulate_z_star",
    "build_null_table",
    "adaptive_null_draws",
    "calibrate",
    "SharedCorrection",
    "CompetingResult",
    "ThresholdedCovariance",
    "shared_corrections",
    "py_test",
    "max_test",
    "com_test",
    "fly_test",
    "thresholded_covariance",
    "TestConfig",
    "DEFAULT_TESTS",
    "run_panel_tests",
    "FactorGarchSpec",
    "ErrorSpec",
    "CovarianceSpec",
    "AlphaScenario",
    "ExperimentDesign",
    "RejectionReport",
    "simulate_factors",
    "build_covariance",
    "generate_panel",
    "run_experiment",
    "DataSetManifest",
    "RollingConfig",
    "ReportDocument",
    "ingest",
    "rolling_test",
    "mimic_study",
]
