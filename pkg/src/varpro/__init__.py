"""Rule-based variable priority: model-independent variable selection."""

__version__ = "0.1.0"

from .data import (ClassIndicator, Dataset, FeatureKind, Identity, Schema, SurvIndicator,
                   TruncatedTime, g_value, g_values, load_csv, rng_stream, split_data, write_csv)
from .engine import (DegenerateRunError, Fixed, ImportanceReport, OutOfSample, VarProConfig,
                     delta_importance, permuted_theta_oracle, run_varpro, run_varpro_external,
                     run_varpro_multiclass, select_variables, theta_hat, theta_released)
from .rules import Interval, LevelSet, Region, Rule, contains, membership_count, release

__all__ = [
    "ClassIndicator", "Dataset", "DegenerateRunError", "FeatureKind", "Fixed", "Identity",
    "ImportanceReport", "Interval", "LevelSet", "OutOfSample", "Region", "Rule", "Schema",
    "SurvIndicator", "TruncatedTime", "VarProConfig", "contains", "delta_importance", "g_value",
    "g_values", "load_csv", "membership_count", "permuted_theta_oracle", "release", "rng_stream",
    "run_varpro", "run_varpro_external", "run_varpro_multiclass", "select_variables",
    "split_data", "theta_hat", "theta_released", "write_csv",
]
