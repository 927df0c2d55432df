"""Configuration-driven experiments and reports."""

from .config import (
    BUILTIN_CONFIGS,
    ConfigError,
    ExperimentConfig,
    config_from_dict,
    load_config,
    read_matrix,
    safe_eval,
    write_matrix,
)
from .pipeline import (
    AposterioriResult,
    RunReport,
    System,
    build_system,
    run_pipeline,
    run_point,
    standard_cutoff_baseline,
    translate_system,
    verify_aposteriori,
)
from .report import emit_report, read_report

__all__ = [
    "BUILTIN_CONFIGS",
    "ConfigError",
    "ExperimentConfig",
    "config_from_dict",
    "load_config",
    "read_matrix",
    "safe_eval",
    "write_matrix",
    "AposterioriResult",
    "RunReport",
    "System",
    "build_system",
    "run_pipeline",
    "run_point",
    "standard_cutoff_baseline",
    "translate_system",
    "verify_aposteriori",
    "emit_report",
    "read_report",
]
