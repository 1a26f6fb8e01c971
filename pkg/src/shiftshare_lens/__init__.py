"""Shift-share instruments, realized weight diagnostics, and
correlated-random-coefficient estimators with a built-in simulation oracle."""

from .dataset import (
    LoadOptions,
    ShiftShareDataset,
    ValidationReport,
    load_dataset,
    validate_dataset,
    write_dataset,
)
from .instrument import BartikPanel, build_bartik, demean_shocks, leave_one_out_shocks
from .regress import (
    ExogeneityTestResult,
    PlaceboResult,
    RegressionFit,
    TslsFit,
    fit_bartik_system,
    fit_linear,
    placebo,
    shock_exogeneity_test,
)
from .weights import (
    SignSummary,
    WeightDecomposition,
    WeightSummary,
    aggregate,
    akm_weights,
    fs_rf_cell_weights,
    tsls_weight_signs,
    tsls_weights_homogeneous_fs,
    weight_summary,
    weighted_effect_sum,
)
from .crc import (
    BootstrapResult,
    CrcEstimates,
    CrcOptions,
    DebiasedEstimates,
    PeriodEffectVariant,
    TrendEstimates,
    annihilators,
    bootstrap,
    debiased_estimators,
    estimate_avg_effects,
    estimate_trends,
    gmm_fit,
    period_effect_variant,
)
from .simulate import (
    McReport,
    OracleReport,
    SimConfig,
    SimTruth,
    decomposition_oracle,
    make_sign_reversal_dataset,
    monte_carlo,
    simulate,
)
from . import errors

__version__ = "0.1.0"

__all__ = [
    "LoadOptions", "ShiftShareDataset", "ValidationReport", "load_dataset",
    "validate_dataset", "write_dataset",
    "BartikPanel", "build_bartik", "demean_shocks", "leave_one_out_shocks",
    "ExogeneityTestResult", "PlaceboResult", "RegressionFit", "TslsFit",
    "fit_bartik_system", "fit_linear", "placebo", "shock_exogeneity_test",
    "SignSummary", "WeightDecomposition", "WeightSummary", "aggregate",
    "akm_weights", "fs_rf_cell_weights", "tsls_weight_signs",
    "tsls_weights_homogeneous_fs", "weight_summary", "weighted_effect_sum",
    "BootstrapResult", "CrcEstimates", "CrcOptions", "DebiasedEstimates",
    "PeriodEffectVariant", "TrendEstimates", "annihilators", "bootstrap",
    "debiased_estimators", "estimate_avg_effects", "estimate_trends",
    "gmm_fit", "period_effect_variant",
    "McReport", "OracleReport", "SimConfig", "SimTruth",
    "decomposition_oracle", "make_sign_reversal_dataset", "monte_carlo",
    "simulate",
    "errors",
]
