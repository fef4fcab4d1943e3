import math

import numpy as np
import pytest
from scipy.sparse.linalg import expm_multiply

from oracles import restricted
from sgvplb import hiergrid as hg
from sgvplb.timeint import (
    GmresSettings,
    SolverError,
    StepConfig,
    VPLBPhysics,
    adapt_advance,
    adapt_initial,
    backward_euler_step,
    imex_step,
    take_step,
)
from sgvplb.vplb import PhaseSpaceConfig, maxwellian_function, project_initial

V3 = ((-8.0, 12.0),) * 3
X = (-2 * math.pi, 2 * math.pi)


def test_step_config_validation():
    with pytest.raises(ValueError):
        StepConfig(dt=0.0)
    with pytest.raises(ValueError):
        StepConfig(dt=1.0, scheme="rk4")
    with pytest.raises(ValueError):
        StepConfig(dt=1.0, tau=1e-4, mu=1.0)
    with pytest.raises(ValueError):
        StepConfig(dt=1.0, tau=-1.0)
    assert not StepConfig(dt=1.0).adaptive and StepConfig(dt=1.0, tau=1e-3).adaptive


def _slab(nu, caps, k=1, field=False, tol=1e-12):
    cfg = PhaseSpaceConfig("1x3v", ((-6.0, 6.0),) * 3, nu, k, caps, x_domain=X, electric_field=field)
    return cfg, VPLBPhysics(cfg, GmresSettings(tol=tol))


def test_uniform_state_without_collisions_is_fixed():
    cfg, phys = _slab(0.0, (2, 2, 1, 1))
    grid = hg.full_index_set(cfg.caps, cfg.k)
    f = project_initial(maxwellian_function(1.0, (0.3, 0, 0), 1.0, x_factor=lambda x: 1 + 0 * x), grid, cfg.domains)
    g, reps = imex_step(f, grid, 0.1, phys)
    assert np.abs(g - f).max() < 1e-14


def test_advection_is_second_order_in_time():
    cfg, phys = _slab(0.0, (3, 2, 0, 0))
    grid = hg.full_index_set(cfg.caps, cfg.k)
    f0 = project_initial(
        maxwellian_function(1.0, (0.5, 0, 0), 1.0, x_factor=lambda x: 1 + 0.5 * np.sin(0.5 * x)), grid, cfg.domains
    )
    A = restricted(phys.disc.assemble_vlasov(phys.disc.zero_field()), grid)
    T = 0.4
    exact = expm_multiply(-T * A, f0)
    errs = []
    for n in (8, 16, 32):
        f = f0
        for _ in range(n):
            f, _ = imex_step(f, grid, T / n, phys)
        errs.append(np.linalg.norm(f - exact))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.8), rates


def test_imex_conserves_number_with_field():
    cfg, phys = _slab(1.0, (3, 2, 1, 1), k=2, field=True, tol=1e-12)
    grid = hg.sparse_index_set(4, 4, cfg.k, caps=cfg.caps)
    f = project_initial(
        maxwellian_function(1.0, (0.0, 0, 0), 1.0, x_factor=lambda x: 1 + 0.05 * np.cos(0.5 * x)), grid, cfg.domains
    )
    t0 = phys.disc.totals(f, grid)
    g, reps = imex_step(f, grid, 0.05, phys)
    t1 = phys.disc.totals(g, grid)
    assert len(reps) == 2 and all(r.converged for r in reps)
    assert abs(t1["n"] - t0["n"]) < 1e-10
    assert abs(t1["mom"] - t0["mom"]) < 1e-10


def _relaxation(level=2, nu=1e3, tol=1e-10, precond=False):
    cfg = PhaseSpaceConfig("0x3v", V3, nu, 2, (level,) * 3)
    grid = hg.full_index_set(cfg.caps, 2)
    return cfg, grid, VPLBPhysics(cfg, GmresSettings(tol=tol, precond=precond))


def _three_maxwellians(cfg, grid):
    from sgvplb.vplb import SeparableFunction, maxwellian_1d

    sf = SeparableFunction()
    for m in range(3):
        u = [0.0, 0.0, 0.0]
        u[m] = 3.0
        sf.add(1.0 / 3.0, [maxwellian_1d(1.0, u[i], 0.5) for i in range(3)])
    return project_initial(sf, grid, cfg.domains)


def test_backward_euler_identity_without_collisions():
    cfg, grid, phys = _relaxation(nu=0.0)
    f = _three_maxwellians(cfg, grid)
    g, reps = backward_euler_step(f, grid, 1.0, phys)
    assert np.array_equal(f, g) and reps[0].iterations == 0


def test_backward_euler_conserves_moments():
    cfg, grid, phys = _relaxation()
    f = _three_maxwellians(cfg, grid)
    m0 = phys.disc.compute_moments(f, grid)
    for _ in range(3):
        f, _ = backward_euler_step(f, grid, 5e-4, phys)
    m1 = phys.disc.compute_moments(f, grid)
    assert abs(m1.n[0, 0] - m0.n[0, 0]) < 1e-8
    assert np.abs(m1.u - m0.u).max() < 1e-8
    assert abs(m1.theta[0, 0] - m0.theta[0, 0]) < 1e-8


def test_backward_euler_equilibrium_residual_shrinks():
    res = []
    for level in (2, 3):
        cfg, grid, phys = _relaxation(level, nu=1.0)
        f = project_initial(maxwellian_function(1.0, (1, 1, 1), 2.5), grid, cfg.domains)
        g, _ = backward_euler_step(f, grid, 0.1, phys)
        res.append(np.linalg.norm(g - f))
    assert res[1] < res[0]


def test_relaxation_is_monotone():
    cfg, grid, phys = _relaxation(2, nu=1.0)
    f = _three_maxwellians(cfg, grid)
    states = [f]
    for _ in range(12):
        f, _ = backward_euler_step(f, grid, 0.5, phys)
        states.append(f)
    # the long-time limit stands in for the discrete equilibrium
    for _ in range(40):
        f, _ = backward_euler_step(f, grid, 5.0, phys)
    d = [np.linalg.norm(s - f) for s in states]
    assert np.all(np.diff(d) <= 1e-12)


def test_solver_failure_is_raised():
    cfg, grid, _ = _relaxation()
    phys = VPLBPhysics(cfg, GmresSettings(tol=1e-14, maxiter=2, restart=2))
    f = _three_maxwellians(cfg, grid)
    with pytest.raises(SolverError) as info:
        backward_euler_step(f, grid, 5e-4, phys)
    assert not info.value.report.converged


def test_adapt_large_tau_does_not_refine():
    cfg, grid, phys = _relaxation(3, nu=1.0)
    start = hg.full_index_set((1, 1, 1), 2, caps=(3, 3, 3))
    f = project_initial(maxwellian_function(1.0, (1, 1, 1), 2.5), start, cfg.domains)
    res = adapt_advance(f, start, StepConfig(dt=0.01, scheme="backward-euler", tau=2.0), phys)
    assert res.refine_passes == 0 and res.refined_grid is start
    assert set(res.grid.keys()) <= set(start.keys())


def test_adapt_redo_matches_direct_step():
    cfg, _, phys = _relaxation(3, nu=1.0)
    start = hg.full_index_set((1, 1, 1), 2, caps=(3, 3, 3))
    f = project_initial(maxwellian_function(1.0, (1, 1, 1), 2.5), start, cfg.domains)
    step = StepConfig(dt=0.01, scheme="backward-euler", tau=1e-3)
    res = adapt_advance(f, start, step, phys)
    assert res.refine_passes >= 1
    assert res.active_elements == res.refined_grid.n_elements
    direct, _ = take_step(hg.reindex(start, res.refined_grid, f), res.refined_grid, step, phys)
    assert np.array_equal(direct, res.refined_state)
    assert set(res.grid.keys()) <= set(res.refined_grid.keys())
    assert np.array_equal(hg.reindex(res.refined_grid, res.grid, res.refined_state), res.state)


def test_adapt_initial_discards_only_small_candidates():
    cfg = PhaseSpaceConfig("0x3v", V3, 1.0, 2, (4, 4, 4))
    func = maxwellian_function(1.0, (1, 1, 1), 2.5)
    tau = 1e-4
    state, grid = adapt_initial(func, hg.sparse_index_set(2, 3, 2, caps=cfg.caps), tau, domains=cfg.domains)
    full = hg.full_index_set(cfg.caps, 2)
    ref = project_initial(func, full, cfg.domains)
    norms = hg.block_norms(full, ref).linf
    missing = full.lookup(grid.codes) < 0
    absent = np.ones(full.n_elements, bool)
    absent[full.lookup(grid.codes)] = False
    assert not missing.any()
    assert np.all(norms[absent] < tau * norms.max())
    assert np.allclose(hg.reindex(full, grid, ref), state, atol=1e-14)
