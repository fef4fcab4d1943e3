"""Configuration, presets, diagnostics, output and the run loop."""

from .config import RunConfig, load_config, parse_config
from .diagnostics import (
    FitError,
    TimeSeriesRecord,
    damping_rate_fit,
    potential_energy,
    reduced_moment_error,
    relaxation_error,
)
from .run import RunResult, StepEvent, run

__all__ = [
    "RunConfig",
    "load_config",
    "parse_config",
    "FitError",
    "TimeSeriesRecord",
    "damping_rate_fit",
    "potential_energy",
    "reduced_moment_error",
    "relaxation_error",
    "RunResult",
    "StepEvent",
    "run",
]
