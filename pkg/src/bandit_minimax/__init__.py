"""Minimax strategies for the Gaussian one-armed bandit with batch processing."""
from .model import (
    REFERENCE_PRIOR,
    ConfigError,
    DegeneratePriorError,
    GPair,
    IntegrityError,
    ModelParams,
    PriorSpec,
    g_pair,
    load_config,
)
from .pde import (
    GridSpec,
    RiskField,
    ThresholdStrategy,
    UnstableGridError,
    ci_grid,
    extract_thresholds,
    production_grid,
    solve_limit_risk,
)

__version__ = "0.1.0"
