"""IMEX and backward-Euler stepping with the adaptive refine-redo loop."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import hiergrid as hg
from .hiergrid import AdaptiveGrid
from .kronops import SeparableOperator, add_scaled, apply, identity_operator
from .krylov import SolveReport, block_jacobi, gmres
from .vplb import Discretization, ElectricField, PhaseSpaceConfig, discretization, project_initial

SCHEMES = ("imex2", "backward-euler")


class SolverError(RuntimeError):
    """An implicit stage failed to converge."""

    def __init__(self, message: str, report: SolveReport):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class GmresSettings:
    """Linear solver options for the implicit collision stages."""

    tol: float = 1e-8
    restart: int = 100
    maxiter: int = 2000
    precond: bool = False
    strict: bool = True


@dataclass(frozen=True)
class StepConfig:
    """Time step and adaptivity options.

    Attributes
    ----------
    dt : float
    scheme : {"imex2", "backward-euler"}
    tau : float
        Refinement threshold; 0 disables adaptivity.
    mu : float
        Coarsening factor.
    max_refine_passes : int
        Cap on refine-redo passes per step.
    norm : {"linf", "l2"}
    """

    dt: float
    scheme: str = "imex2"
    tau: float = 0.0
    mu: float = 0.1
    max_refine_passes: int = 10
    norm: str = "linf"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.tau > 0 and not 0.0 < self.mu < 1.0:
            raise ValueError("mu must lie in (0, 1)")
        if self.max_refine_passes < 0:
            raise ValueError("max_refine_passes must be nonnegative")

    @property
    def adaptive(self) -> bool:
        return self.tau > 0


@dataclass
class StepResult:
    """Outcome of one accepted step.

    Attributes
    ----------
    state, grid :
        Accepted state on the grid after coarsening.
    active_elements : int
        Element count after refinement, before coarsening.
    refined_grid, refined_state :
        Grid and state before coarsening.
    reports : list of SolveReport
        One per implicit solve (all refine passes).
    refine_passes : int
    cap_reached : bool
        The pass cap stopped refinement while children were still pending.
    efield : ElectricField or None
        Field of the accepted state.
    """

    state: np.ndarray
    grid: AdaptiveGrid
    active_elements: int
    refined_grid: AdaptiveGrid
    refined_state: np.ndarray
    reports: list = field(default_factory=list)
    refine_passes: int = 0
    cap_reached: bool = False
    efield: Optional[ElectricField] = None

    @property
    def gmres_iterations(self) -> int:
        return sum(r.iterations for r in self.reports)


class VPLBPhysics:
    """Operator evaluations and implicit solves for one phase-space setup."""

    def __init__(self, config: PhaseSpaceConfig, gmres_settings: GmresSettings = GmresSettings()):
        self.config = config
        self.disc: Discretization = discretization(config)
        self.gmres = gmres_settings

    @property
    def nu(self) -> float:
        return self.config.nu

    def field(self, state: np.ndarray, grid: AdaptiveGrid) -> Optional[ElectricField]:
        return self.disc.electric_field(state, grid)

    def vlasov(self, state: np.ndarray, grid: AdaptiveGrid) -> Optional[np.ndarray]:
        """``A_VP f`` with the field refreshed from ``f``; None in 0x3v."""
        if self.config.geometry != "1x3v":
            return None
        op = self.disc.assemble_vlasov(self.field(state, grid))
        return apply(op, grid, state)

    def collision_operator(self, moment_state: np.ndarray, grid: AdaptiveGrid) -> SeparableOperator:
        fluid = self.disc.compute_moments(moment_state, grid)
        return self.disc.assemble_lb(fluid)

    def solve_implicit(
        self,
        rhs: np.ndarray,
        grid: AdaptiveGrid,
        factor: float,
        moment_state: np.ndarray,
        x0: Optional[np.ndarray] = None,
        precond: Optional[bool] = None,
    ) -> tuple[np.ndarray, SolveReport]:
        """Solve ``(I - factor * nu * A_LB[rho(moment_state)]) x = rhs``."""
        if self.nu == 0.0 or factor == 0.0:
            return rhs.copy(), SolveReport(0, 0.0, True, 0, False, [])
        op = self.implicit_operator(moment_state, grid, factor)
        use_pc = self.gmres.precond if precond is None else precond
        pc = block_jacobi(op, grid) if use_pc else None
        x, rep = gmres(
            lambda v: apply(op, grid, v), rhs, x0=x0, tol=self.gmres.tol,
            restart=self.gmres.restart, maxiter=self.gmres.maxiter, precond=pc,
        )
        if not rep.converged and self.gmres.strict:
            raise SolverError(
                f"GMRES did not converge: residual {rep.final_residual:.3e} after {rep.iterations} iterations",
                rep,
            )
        return x, rep

    def implicit_operator(self, moment_state, grid, factor) -> SeparableOperator:
        """The operator ``I - factor * nu * A_LB`` as a separable sum."""
        L = self.collision_operator(moment_state, grid)
        ident = identity_operator(self.config.caps, self.config.k, self.config.periodic)
        return add_scaled(ident, L, 1.0, -factor * self.nu)


def imex_step(f_n: np.ndarray, grid: AdaptiveGrid, dt: float, physics: VPLBPhysics) -> tuple[np.ndarray, list]:
    """One second-order IMEX step.

    Returns
    -------
    f_next : ndarray
    reports : list of SolveReport
    """
    f_n = np.asarray(f_n, dtype=float)
    a0 = physics.vlasov(f_n, grid)
    f1s = f_n - dt * a0 if a0 is not None else f_n.copy()
    f1, r1 = physics.solve_implicit(f1s, grid, dt, f1s, x0=f_n)
    a1 = physics.vlasov(f1, grid)
    f2s = 0.5 * f_n + 0.5 * (f1 - dt * a1 if a1 is not None else f1)
    f2, r2 = physics.solve_implicit(f2s, grid, 0.5 * dt, f2s, x0=f1)
    return f2, [r1, r2]


def backward_euler_step(f_n: np.ndarray, grid: AdaptiveGrid, dt: float, physics: VPLBPhysics) -> tuple[np.ndarray, list]:
    """One backward-Euler collision step (no transport)."""
    f_n = np.asarray(f_n, dtype=float)
    f, rep = physics.solve_implicit(f_n, grid, dt, f_n, x0=f_n)
    return f, [rep]


def take_step(f_n, grid, step: StepConfig, physics) -> tuple[np.ndarray, list]:
    """Dispatch on ``step.scheme``."""
    if step.scheme == "imex2":
        return imex_step(f_n, grid, step.dt, physics)
    return backward_euler_step(f_n, grid, step.dt, physics)


def adapt_advance(f_n: np.ndarray, grid_n: AdaptiveGrid, step: StepConfig, physics) -> StepResult:
    """Advance one step with refine-redo and coarsening.

    On a non-adaptive configuration this is a plain step on ``grid_n``.
    """
    grid = grid_n
    f_start = np.asarray(f_n, dtype=float)
    reports: list = []
    passes = 0
    cap_reached = False
    while True:
        f_new, reps = take_step(f_start, grid, step, physics)
        reports.extend(reps)
        if not step.adaptive:
            break
        norms = hg.block_norms(grid, f_new)
        grid_ref, new_keys = hg.refine(grid, norms, step.tau, step.norm)
        if not new_keys:
            break
        if passes >= step.max_refine_passes:
            cap_reached = True
            break
        f_start = hg.reindex(grid, grid_ref, f_start)
        grid = grid_ref
        passes += 1
    active = grid.n_elements
    refined_grid, refined_state = grid, f_new
    if step.adaptive:
        norms = hg.block_norms(grid, f_new)
        grid_c = hg.coarsen(grid, norms, step.tau, step.mu, step.norm)
        f_new = hg.reindex(grid, grid_c, f_new)
        grid = grid_c
    efield = physics.field(f_new, grid) if hasattr(physics, "field") else None
    return StepResult(
        state=f_new, grid=grid, active_elements=active, refined_grid=refined_grid,
        refined_state=refined_state, reports=reports, refine_passes=passes,
        cap_reached=cap_reached, efield=efield,
    )


def adapt_initial(func, grid: AdaptiveGrid, tau: float, mu: float = 0.1, norm: str = "linf",
                  max_passes: int = 50, domains=None) -> tuple[np.ndarray, AdaptiveGrid]:
    """Adapt a grid to an initial condition by refine-then-coarsen thresholding."""
    if domains is None:
        raise ValueError("domains required")
    for _ in range(max_passes):
        state = project_initial(func, grid, domains)
        new_grid, new_keys = hg.refine(grid, hg.block_norms(grid, state), tau, norm)
        if not new_keys:
            break
        grid = new_grid
    state = project_initial(func, grid, domains)
    grid_c = hg.coarsen(grid, hg.block_norms(grid, state), tau, mu, norm)
    return hg.reindex(grid, grid_c, state), grid_c
