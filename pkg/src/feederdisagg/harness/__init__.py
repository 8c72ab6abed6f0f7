"""Scenario orchestration: configuration, artifacts, metrics and runs."""

from .config import CONFIG_KEYS, ScenarioConfig, format_config, parse_config, parse_config_text, parse_days
from .metrics import DayMetrics, Metrics, Summary, rmse
from .pipeline import (
    ScenarioResult,
    Study,
    build_model_sets,
    estimate_noise,
    fit_bundle,
    generate_study,
    kf_bkf_akf,
    run_kf,
    run_scenario,
    sweep_eta,
    sweep_lambda,
)

__all__ = [name for name in dir() if not name.startswith("_")]
