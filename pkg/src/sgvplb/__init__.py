"""Adaptive sparse-grid DG solver for Vlasov-Poisson-Lenard-Bernstein kinetics."""

from .hiergrid import AdaptiveGrid, ElementKey, full_index_set, mixed_index_set, sparse_index_set
from .kronops import SeparableOperator, apply
from .krylov import SolveReport, gmres
from .timeint import StepConfig, StepResult, adapt_advance, backward_euler_step, imex_step
from .vplb import PhaseSpaceConfig, compute_moments

__version__ = "0.1.0"

__all__ = [
    "AdaptiveGrid",
    "ElementKey",
    "full_index_set",
    "mixed_index_set",
    "sparse_index_set",
    "SeparableOperator",
    "apply",
    "SolveReport",
    "gmres",
    "StepConfig",
    "StepResult",
    "adapt_advance",
    "backward_euler_step",
    "imex_step",
    "PhaseSpaceConfig",
    "compute_moments",
]
