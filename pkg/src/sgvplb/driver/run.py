"""The time loop of a configured run."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .. import hiergrid as hg
from ..chu1d import ChuState, chu_imex_step, chu_totals
from ..hiergrid import AdaptiveGrid
from ..timeint import GmresSettings, StepConfig, StepResult, VPLBPhysics, adapt_advance, adapt_initial
from ..vplb import FluidError
from . import output, presets
from .config import RunConfig
from .diagnostics import TimeSeriesRecord

# physics and solver failures turn into a nonzero exit status
RUN_ERRORS = (FluidError, RuntimeError, FloatingPointError, np.linalg.LinAlgError)


@dataclass
class StepEvent:
    """Delivered to the per-step callback after every accepted step."""

    step: int
    t: float
    record: TimeSeriesRecord
    reports: list
    result: Optional[StepResult] = None
    chu_state: Optional[ChuState] = None


@dataclass
class RunResult:
    """Outcome of :func:`run`.

    Attributes
    ----------
    status : int
        0 on success, 2 on a physics or solver failure.
    """

    status: int
    config: RunConfig
    records: list = field(default_factory=list)
    steps: int = 0
    t: float = 0.0
    state: Optional[np.ndarray] = None
    grid: Optional[AdaptiveGrid] = None
    chu_state: Optional[ChuState] = None
    message: str = ""
    output_dir: Optional[Path] = None


def step_sizes(dt: float, t_final: float, max_steps: Optional[int] = None) -> list:
    """Steps of size ``dt`` ending exactly at ``t_final`` (last one shortened)."""
    if t_final <= 0:
        return []
    n = max(1, math.ceil(t_final / dt - 1e-9))
    sizes = [dt] * (n - 1) + [t_final - dt * (n - 1)]
    if max_steps is not None:
        sizes = sizes[:max_steps]
    return sizes


def initial_grid(cfg: RunConfig) -> AdaptiveGrid:
    """Starting index set; adaptive runs start from the sparse grid."""
    caps = cfg.resolved_caps()
    if cfg.grid == "full":
        return hg.full_index_set(caps, cfg.k)
    if cfg.grid == "mixed":
        return hg.mixed_index_set(cfg.levels[0], cfg.levels[1], cfg.k, caps)
    N = cfg.sparse_level if cfg.sparse_level is not None else max(cfg.levels)
    return hg.sparse_index_set(N, len(caps), cfg.k, caps)


def _record(t, active, iters, totals, ref) -> TimeSeriesRecord:
    return TimeSeriesRecord(
        t=float(t), active_elements=int(active), gmres_iters=int(iters),
        dn=totals["n"] - ref["n"],
        dmom=float(np.linalg.norm(np.atleast_1d(totals["mom_vec"]) - np.atleast_1d(ref["mom_vec"]))),
        denergy=totals["etotal"] - ref["etotal"],
        epot=totals["epot"], ekin=totals["ekin"], etotal=totals["etotal"],
    )


def run(config: RunConfig, on_step: Optional[Callable[[StepEvent], None]] = None,
        write: bool = True) -> RunResult:
    """Execute a run: initial projection, time loop, time series and snapshots.

    Parameters
    ----------
    config : RunConfig
    on_step : callable, optional
        Receives a :class:`StepEvent` after each accepted step.
    write : bool
        Emit files into ``config.output_dir``.
    """
    cfg = presets.resolve(config)
    out = Path(cfg.output_dir)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(cfg.to_text())
    if cfg.is_chu:
        return _run_chu(cfg, out, on_step, write)
    return _run_phase(cfg, out, on_step, write)


def _snap_due(cfg: RunConfig, step: int, last: bool) -> bool:
    return last or (cfg.snapshot_every > 0 and step % cfg.snapshot_every == 0)


def _run_phase(cfg, out, on_step, write) -> RunResult:
    pcfg = presets.phase_space_config(cfg)
    physics = VPLBPhysics(
        pcfg, GmresSettings(cfg.gmres_tol, cfg.gmres_restart, cfg.gmres_maxiter, cfg.gmres_precond)
    )
    func = presets.initial_condition(cfg)
    grid = initial_grid(cfg)
    adaptive = cfg.grid == "adaptive"
    if adaptive:
        state, grid = adapt_initial(func, grid, cfg.tau, cfg.mu, cfg.norm, domains=pcfg.domains)
    else:
        state = physics.disc.project(func, grid)
    scheme = "backward-euler" if cfg.problem == "relaxation" else "imex2"
    base = StepConfig(
        dt=cfg.dt, scheme=scheme, tau=cfg.tau if adaptive else 0.0, mu=cfg.mu,
        max_refine_passes=cfg.max_refine_passes, norm=cfg.norm,
    )
    ref = physics.disc.totals(state, grid, physics.field(state, grid))
    records = [_record(0.0, grid.n_elements, 0, ref, ref)]
    result = RunResult(0, cfg, records, 0, 0.0, state, grid, output_dir=out if write else None)
    sizes = step_sizes(cfg.dt, cfg.t_final, cfg.max_steps)
    full = len(sizes) == len(step_sizes(cfg.dt, cfg.t_final))

    def emit(step, last):
        if not write or not _snap_due(cfg, step, last):
            return
        output.write_phase_snapshot(out, step, result.state, result.grid, pcfg,
                                    cfg.snapshot_mode, cfg.snapshot_weights)
        if cfg.grid_dump:
            output.write_grid(out, step, result.grid)

    writer = output.TimeSeriesWriter(out / output.TIMESERIES_NAME) if write else None
    try:
        if writer:
            writer.write(records[0])
        emit(0, not sizes)
        t = 0.0
        for i, dt in enumerate(sizes, 1):
            step = base if dt == base.dt else dataclasses.replace(base, dt=dt)
            try:
                res = adapt_advance(result.state, result.grid, step, physics)
                if not np.all(np.isfinite(res.state)):
                    raise FloatingPointError("non-finite state")
            except RUN_ERRORS as exc:
                return _fail(result, out, write, i, t, exc)
            t = cfg.t_final if (full and i == len(sizes)) else t + dt
            totals = physics.disc.totals(res.state, res.grid, res.efield)
            rec = _record(t, res.active_elements, res.gmres_iterations, totals, ref)
            records.append(rec)
            result.state, result.grid, result.steps, result.t = res.state, res.grid, i, t
            if writer:
                writer.write(rec)
            if on_step is not None:
                on_step(StepEvent(i, t, rec, res.reports, result=res))
            emit(i, i == len(sizes))
    finally:
        if writer:
            writer.close()
    return result


def _run_chu(cfg, out, on_step, write) -> RunResult:
    ccfg = presets.chu_config(cfg)
    state = presets.chu_initial_state(cfg)
    ref = _chu_totals(state, ccfg)
    nel = (2 ** ccfg.levels[0]) * (2 ** ccfg.levels[1])
    records = [_record(0.0, nel, 0, ref, ref)]
    result = RunResult(0, cfg, records, 0, 0.0, chu_state=state, output_dir=out if write else None)
    sizes = step_sizes(cfg.dt, cfg.t_final, cfg.max_steps)
    full = len(sizes) == len(step_sizes(cfg.dt, cfg.t_final))

    def emit(step, last):
        if write and _snap_due(cfg, step, last):
            output.write_chu_snapshot(out, step, result.chu_state, ccfg, cfg.snapshot_weights)

    writer = output.TimeSeriesWriter(out / output.TIMESERIES_NAME) if write else None
    try:
        if writer:
            writer.write(records[0])
        emit(0, not sizes)
        t = 0.0
        for i, dt in enumerate(sizes, 1):
            try:
                new, info = chu_imex_step(result.chu_state, dt, ccfg)
                if not all(np.all(np.isfinite(g)) for g in (new.g1, new.g2, new.g3)):
                    raise FloatingPointError("non-finite state")
            except RUN_ERRORS as exc:
                return _fail(result, out, write, i, t, exc)
            t = cfg.t_final if (full and i == len(sizes)) else t + dt
            new.t = t
            totals = _chu_totals(new, ccfg)
            rec = _record(t, nel, info.iterations, totals, ref)
            records.append(rec)
            result.chu_state, result.steps, result.t = new, i, t
            if writer:
                writer.write(rec)
            if on_step is not None:
                on_step(StepEvent(i, t, rec, info.reports, chu_state=new))
            emit(i, i == len(sizes))
    finally:
        if writer:
            writer.close()
    return result


def _chu_totals(state: ChuState, ccfg) -> dict:
    tot = chu_totals(state, ccfg)
    tot["mom_vec"] = np.array([tot["mom"]])
    return tot


def _fail(result: RunResult, out, write, step, t, exc) -> RunResult:
    result.status = 2
    result.message = f"step {step} (t = {t:.6g}): {type(exc).__name__}: {exc}"
    if write:
        output.write_error(out, step, t, exc)
    return result


__all__ = ["RunResult", "StepEvent", "run", "step_sizes", "initial_grid"]
