from .config import ConfigError, ExperimentConfig, expand_rule, load_config, parse_config
from .runner import (
    RateFit,
    compare_methods,
    contraction_preset_N,
    convergence_study,
    fit_rate,
    hjb_train,
    run_experiment,
    solve,
)

__all__ = [
    "ConfigError", "ExperimentConfig", "RateFit", "compare_methods", "contraction_preset_N",
    "convergence_study", "expand_rule", "fit_rate", "hjb_train", "load_config", "parse_config",
    "run_experiment", "solve",
]
