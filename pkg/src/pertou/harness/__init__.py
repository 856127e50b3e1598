"""Configuration, experiment registry, CSV reports and the command line."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .experiments import REGISTRY, Check, ExperimentResult, registered_names, run_experiment
from .report import HEADER, ReportError, ReportRow, emit_report, parse_report, read_report

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "REGISTRY", "Check",
           "ExperimentResult", "registered_names", "run_experiment", "HEADER", "ReportError",
           "ReportRow", "emit_report", "parse_report", "read_report"]
