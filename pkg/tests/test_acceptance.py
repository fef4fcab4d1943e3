"""Acceptance criteria, one test per criterion.

Each test records a pass/fail line through the ``criterion`` fixture; the
lines are printed in the terminal summary.  Criteria 4 to 8 and 10 run full
simulations and are marked ``slow``.
"""

import itertools
import math

import numpy as np
import pytest

from oracles import (
    adaptivity_violations,
    exact_riemann,
    quadrature_l2,
    restricted,
    wavelet_gram,
)
from sgvplb import basis1d as b1
from sgvplb import hiergrid as hg
from sgvplb.chu1d import chu_moments
from sgvplb.driver import RunConfig, run
from sgvplb.driver.diagnostics import damping_rate_fit, relaxation_error
from sgvplb.driver.presets import (
    RELAX_EQUILIBRIUM,
    RIEMANN_INNER,
    RIEMANN_OUTER,
    chu_config,
    initial_condition,
    phase_space_config,
    resolve,
    riemann_interface,
)
from sgvplb.driver.run import initial_grid
from sgvplb.kronops import KronTerm, SeparableOperator, apply
from sgvplb.timeint import GmresSettings, StepConfig, VPLBPhysics, adapt_initial
from sgvplb.vplb import (
    ElectricField,
    PhaseSpaceConfig,
    SeparableFunction,
    discretization,
    maxwellian_function,
    project_initial,
)


def _brute_levels(d, accept):
    return [lev for lev in itertools.product(range(11), repeat=d) if accept(lev)]


def _brute_dofs(levels, k):
    total = 0
    for lev in levels:
        total += math.prod(1 if l == 0 else 2 ** (l - 1) for l in lev) * (k + 1) ** len(lev)
    return total


# -- 1 ------------------------------------------------------------------------


def test_c01_wavelet_correctness(criterion):
    with criterion(1, "wavelet Gram identity and printed k=2 wavelets") as rec:
        worst = 0.0
        for k in (0, 1, 2):
            G = wavelet_gram(k, 6)
            worst = max(worst, np.abs(G - np.eye(len(G))).max())
        fam = b1.build_alpert_basis(2)
        printed = [
            np.array([1.0, -24.0, 30.0]) / 3.0 * math.sqrt(0.5),
            np.array([3.0, -16.0, 15.0]) / 2.0 * math.sqrt(1.5),
            np.array([4.0, -15.0, 12.0]) / 3.0 * math.sqrt(2.5),
        ]
        coef = max(np.abs(fam.right[i] - printed[i]).max() for i in range(3))
        rec.detail = f"gram {worst:.1e}, coefficients {coef:.1e}"
        assert worst < 1e-12
        assert coef < 1e-12


# -- 2 ------------------------------------------------------------------------


def test_c02_grid_combinatorics(criterion):
    with criterion(2, "grid dimensions against enumeration") as rec:
        assert hg.sparse_index_set(9, 2, 0).ndof == 2816
        assert _brute_dofs(_brute_levels(2, lambda lev: sum(lev) <= 9), 0) == 2816
        for k in (0, 1, 2):
            for l in range(11):
                v = hg.full_index_set((l,), k).ndof
                w = v - (hg.full_index_set((l - 1,), k).ndof if l else 0)
                assert v == 2**l * (k + 1)
                assert w == (k + 1 if l == 0 else 2 ** (l - 1) * (k + 1))
        checked = 0
        for d in range(1, 5):
            for N in range(5):
                for k in (0, 1):
                    sparse = [lev for lev in itertools.product(range(N + 1), repeat=d) if sum(lev) <= N]
                    assert hg.sparse_index_set(N, d, k).ndof == _brute_dofs(sparse, k)
                    full = list(itertools.product(range(N + 1), repeat=d))
                    assert hg.full_index_set((N,) * d, k).ndof == _brute_dofs(full, k)
                    checked += 2
        for lx in range(5):
            for lv in range(5):
                mixed = [
                    (a,) + v for a in range(lx + 1) for v in itertools.product(range(lv + 1), repeat=3) if sum(v) <= lv
                ]
                assert hg.mixed_index_set(lx, lv, 0).ndof == _brute_dofs(mixed, 0)
                checked += 1
        rec.detail = f"{checked} enumerated sets"


# -- 3 ------------------------------------------------------------------------


def _random_subgrid(full, rng, frac=0.6):
    keep = rng.random(full.n_elements) < frac
    keep[np.all(full.cells == 0, axis=1)] = True
    return full.with_cells(rng.permutation(full.cells[keep]))


def _operator_cases(rng):
    """(name, operator, grids) for every operator family the solver applies."""
    cases = []

    # 1x3v slab, k = 1: Vlasov with field, collisions, implicit stage
    slab = PhaseSpaceConfig(
        "1x3v", ((-6.0, 6.0),) * 3, nu=1.0, k=1, caps=(2, 2, 2, 2),
        x_domain=(-2 * math.pi, 2 * math.pi), electric_field=True,
    )
    disc = discretization(slab)
    full4 = hg.full_index_set(slab.caps, 1)
    f4 = project_initial(
        maxwellian_function(1.0, (0.3, 0, 0), 1.2, x_factor=lambda x: 1 + 0.2 * np.cos(0.5 * x)), full4, slab.domains
    )
    ef = ElectricField(np.zeros(4), rng.standard_normal(4), slab.x_domain)
    vlasov = disc.assemble_vlasov(ef)
    grids4 = [full4, _random_subgrid(full4, rng)]
    cases.append(("vlasov 4d", vlasov, grids4))
    cases.append(("lb 4d", disc.assemble_lb(disc.compute_moments(f4, full4)), grids4))
    phys = VPLBPhysics(slab)
    cases.append(("implicit 4d", phys.implicit_operator(f4, full4, 1e-3), grids4))

    # the (x, v_x) part of the transport on its own
    assert all(all(f is None for f in t.factors[2:]) for t in vlasov.terms)
    red = SeparableOperator([KronTerm(t.scale, t.factors[:2]) for t in vlasov.terms], (2, 2), 1, (True, False))
    full2 = hg.full_index_set((2, 2), 1)
    cases.append(("vlasov 2d", red, [full2, _random_subgrid(full2, rng), hg.sparse_index_set(2, 2, 1)]))

    # 0x3v relaxation, k = 2
    relax = PhaseSpaceConfig("0x3v", ((-8.0, 12.0),) * 3, nu=1e3, k=2, caps=(2, 2, 2))
    disc3 = discretization(relax)
    full3 = hg.full_index_set(relax.caps, 2)
    f3 = project_initial(maxwellian_function(1.0, (1, 1, 1), 2.5), full3, relax.domains)
    grids3 = [full3, _random_subgrid(full3, rng), hg.sparse_index_set(2, 3, 2)]
    cases.append(("lb 3d", disc3.assemble_lb(disc3.compute_moments(f3, full3)), grids3))
    cases.append(("implicit 3d", VPLBPhysics(relax).implicit_operator(f3, full3, 5e-4), grids3))
    return cases


def test_c03_operator_oracle_equivalence(criterion):
    rng = np.random.default_rng(2024)
    with criterion(3, "separable operators equal dense Kronecker assembly") as rec:
        worst = 0.0
        count = 0
        for name, op, grids in _operator_cases(rng):
            for grid in grids:
                x = rng.standard_normal(grid.ndof)
                ref = restricted(op, grid) @ x
                err = np.abs(apply(op, grid, x) - ref).max() / max(1.0, np.abs(ref).max())
                worst = max(worst, err)
                count += 1
                assert err < 1e-11, name
        rec.detail = f"{count} operator/grid pairs, worst relative {worst:.1e}"


# -- 4 ------------------------------------------------------------------------


def _relaxation_moments(cfg):
    rcfg = resolve(cfg)
    pc = phase_space_config(rcfg)
    disc = discretization(pc)

    def moments(state, grid):
        fl = disc.compute_moments(state, grid)
        return float(np.ravel(fl.n)[0]), np.ravel(fl.u).astype(float), float(np.ravel(fl.theta)[0])

    f0 = project_initial(initial_condition(rcfg), initial_grid(rcfg), pc.domains)
    return moments, moments(f0, initial_grid(rcfg))


@pytest.mark.slow
def test_c04_collision_conservation(criterion):
    cfg = RunConfig(problem="relaxation", grid="full", levels=(3,))
    with criterion(4, "relaxation conserves n, u, theta") as rec:
        moments, (n0, u0, th0) = _relaxation_moments(cfg)
        drift = np.zeros(3)

        def on_step(ev):
            n, u, th = moments(ev.result.state, ev.result.grid)
            drift[:] = np.maximum(drift, [abs(n - n0), np.linalg.norm(u - u0), abs(th - th0)])

        res = run(cfg, on_step=on_step, write=False)
        rec.detail = f"{res.steps} steps, drift n {drift[0]:.1e}, u {drift[1]:.1e}, theta {drift[2]:.1e}"
        assert res.status == 0
        assert res.steps == 40
        assert np.all(drift < 1e-7)


# -- 5 ------------------------------------------------------------------------


@pytest.mark.slow
def test_c05_relaxation_accuracy_trend(criterion):
    n, u, th = RELAX_EQUILIBRIUM
    with criterion(5, "relaxation error trend, adaptive beats full level 3") as rec:
        errors, elements = {}, {}
        for name, cfg in [
            ("full2", RunConfig(problem="relaxation", grid="full", levels=(2,))),
            ("full3", RunConfig(problem="relaxation", grid="full", levels=(3,))),
            ("full4", RunConfig(problem="relaxation", grid="full", levels=(4,))),
            ("adaptive", RunConfig(problem="relaxation", grid="adaptive", levels=(3,), tau=1e-4)),
        ]:
            res = run(cfg, write=False)
            assert res.status == 0, res.message
            pc = phase_space_config(resolve(cfg))
            errors[name] = relaxation_error(res.state, res.grid, pc, n, u, th)
            elements[name] = max(r.active_elements for r in res.records)
        rec.detail = ", ".join(f"{k} {errors[k]:.6e} ({elements[k]} el)" for k in errors)
        assert errors["full2"] > errors["full3"] > errors["full4"]
        assert errors["adaptive"] <= errors["full3"]
        assert elements["adaptive"] < elements["full3"]


# -- 6 ------------------------------------------------------------------------


@pytest.mark.slow
def test_c06_landau_damping_rate(criterion):
    with criterion(6, "Landau damping rate of the reduced solver") as rec:
        gamma = {}
        for nu in (1e-2, 1.0):
            res = run(RunConfig(problem="chu-landau", levels=(5, 6), nu=nu), write=False)
            assert res.status == 0, res.message
            t = [r.t for r in res.records]
            e = [r.epot for r in res.records]
            gamma[nu] = damping_rate_fit(t, e)
        rec.detail = f"gamma(1e-2) {gamma[1e-2]:.4f}, gamma(1) {gamma[1.0]:.4f}"
        assert 0.277 <= gamma[1e-2] <= 0.337
        assert gamma[1.0] < gamma[1e-2]


# -- 7 ------------------------------------------------------------------------


def _clusters(mask):
    out, start = [], None
    for i, m in enumerate(np.append(mask, False)):
        if m and start is None:
            start = i
        elif not m and start is not None:
            out.append((start, i - 1))
            start = None
    return out


@pytest.mark.slow
def test_c07_riemann_conservation_and_structure(criterion):
    cfg = RunConfig(problem="chu-riemann", levels=(6, 5), nu=1e3, chu_solver="direct")
    with criterion(7, "Riemann problem conservation and wave structure") as rec:
        res = run(cfg, write=False)
        assert res.status == 0, res.message
        drift = max(max(abs(r.dn), abs(r.dmom), abs(r.denergy)) for r in res.records)

        rcfg = resolve(cfg)
        cc = chu_config(rcfg)
        nbar = chu_moments(res.chu_state, cc).cell_means("n")
        a, b = rcfg.x_domain
        h = (b - a) / len(nbar)
        centers = a + h * (np.arange(len(nbar)) + 0.5)
        symmetry = np.abs(nbar - nbar[::-1]).max()

        # right half: inner state on the left of the interface, outer on the right
        s = riemann_interface(rcfg)
        gamma = 5.0 / 3.0
        inner = (RIEMANN_INNER[0], RIEMANN_INNER[1], RIEMANN_INNER[0] * RIEMANN_INNER[2])
        outer = (RIEMANN_OUTER[0], RIEMANN_OUTER[1], RIEMANN_OUTER[0] * RIEMANN_OUTER[2])
        half = slice(len(nbar) // 2, None)
        xr, nr = centers[half], nbar[half]
        T = res.t
        xs = np.linspace(0.0, b, 4001)
        rho, waves = exact_riemann(inner, outer, gamma, (xs - s) / T)
        l1 = float(np.sum(np.abs(nr - np.interp(xr, xs, rho))) * h)
        shock = s + waves["left"]["speeds"][0] * T
        contact = s + waves["u_star"] * T
        fan = (s + waves["right"]["speeds"][1] * T, s + waves["right"]["speeds"][0] * T)

        # sign pattern of the density differences between neighbouring cells
        dn = np.diff(nr)
        faces = xr[:-1] + 0.5 * h
        delta = 0.02 * (outer[0] - inner[0])
        groups = _clusters(dn > delta)
        centroids = [float(np.sum(faces[i:j + 1] * dn[i:j + 1]) / np.sum(dn[i:j + 1])) for i, j in groups]
        in_fan = (xr >= fan[0]) & (xr <= fan[1])
        rec.detail = (
            f"drift {drift:.1e}, waves at {np.round(centroids, 4).tolist()} vs "
            f"{shock:.4f}/{contact:.4f}/{fan[0]:.4f}-{fan[1]:.4f}, L1 {l1:.4f}"
        )
        assert drift < 1e-8
        assert symmetry < 1e-10
        assert waves["left"]["kind"] == "shock" and waves["right"]["kind"] == "rarefaction"
        assert not np.any(dn < -delta)
        assert len(groups) == 3
        assert abs(centroids[0] - shock) < 2 * h
        assert abs(centroids[1] - contact) < 2 * h
        lo, hi = faces[groups[2][0]], faces[groups[2][1]]
        assert lo < fan[0] + 2 * h and hi > fan[1] - 2 * h
        assert np.all(np.diff(nr[in_fan]) > 0)
        assert l1 < 0.02


# -- 8 ------------------------------------------------------------------------


@pytest.mark.slow
def test_c08_adaptivity_contract(criterion):
    cfg = RunConfig(problem="riemann", grid="adaptive", levels=(5, 4), nu=1.0, tau=1e-4)
    with criterion(8, "adaptive refinement and coarsening contract") as rec:
        totals = dict(missing_children=0, kept_small=0, dropped_large=0, state_mismatch=0)
        capped = []

        def on_step(ev):
            r = ev.result
            v = adaptivity_violations(r.refined_grid, r.refined_state, r.grid, r.state, cfg.tau, cfg.mu)
            for key in totals:
                totals[key] += v[key]
            if r.cap_reached:
                capped.append(ev.step)

        res = run(cfg, on_step=on_step, write=False)
        rec.detail = f"{res.steps} steps, caps {res.grid.caps}, violations {sum(totals.values())}"
        assert res.status == 0, res.message
        assert res.grid.caps == (5, 4, 4, 4)
        assert not capped
        assert all(v == 0 for v in totals.values()), totals


# -- 9 ------------------------------------------------------------------------


def _thresholded_cases():
    step = lambda lo, hi: (lambda y: ((np.asarray(y) > lo) & (np.asarray(y) < hi)).astype(float))
    sf = SeparableFunction()
    sf.add(1.0, (step(-0.3, 0.45), lambda y: np.exp(-np.asarray(y) ** 2)), [(-0.3, 0.45), ()])
    sf.add(-0.5, (np.cos, step(0.1, 0.7)), [(), (0.1, 0.7)])
    disk = lambda x, y: ((x**2 + 2 * y**2) < 0.4).astype(float) * (1 + x)
    maxw = maxwellian_function(1.0, (1, 1, 1), 2.5)
    return [
        ("separable 2d", sf, (5, 5), 1, ((-1.0, 1.0), (-1.0, 1.0))),
        ("disk 2d", disk, (5, 5), 1, ((-1.0, 1.0), (-1.0, 1.0))),
        ("maxwellian 3d", maxw, (4, 4, 4), 2, ((-8.0, 12.0),) * 3),
    ]


def test_c09_projection_error_identity(criterion):
    with criterion(9, "thresholded projection error equals discarded norm") as rec:
        worst = 0.0
        count = 0
        for name, func, caps, k, domains in _thresholded_cases():
            full = hg.full_index_set(caps, k)
            ref = project_initial(func, full, domains)
            total = quadrature_l2(ref, full, domains)
            for tau in (1e-1, 1e-2, 1e-3, 1e-4):
                N = min(caps)
                state, grid = adapt_initial(func, hg.sparse_index_set(N - 2, len(caps), k, caps=caps), tau,
                                            domains=domains)
                err = quadrature_l2(ref - hg.reindex(grid, full, state), full, domains) / total
                kept = np.zeros(full.n_elements, bool)
                kept[full.lookup(grid.codes)] = True
                discarded = ref.reshape(full.n_elements, -1)[~kept]
                predicted = math.sqrt(float(np.sum(discarded**2))) / float(np.linalg.norm(ref))
                worst = max(worst, abs(err - predicted))
                count += 1
                assert abs(err - predicted) < 1e-12, (name, tau)
        rec.detail = f"{count} thresholdings, worst difference {worst:.1e}"


# -- 10 -----------------------------------------------------------------------


@pytest.mark.slow
def test_c10_block_jacobi(criterion):
    cfg = resolve(RunConfig(problem="relaxation", grid="full", levels=(3,)))
    with criterion(10, "block-Jacobi never needs more GMRES iterations") as rec:
        pc = phase_space_config(cfg)
        grid = initial_grid(cfg)
        f = project_initial(initial_condition(cfg), grid, pc.domains)
        tol = cfg.gmres_tol
        phys = VPLBPhysics(pc, GmresSettings(tol=tol))
        step = StepConfig(dt=cfg.dt, scheme="backward-euler")
        plain, pre, worst = [], [], 0.0
        for _ in range(round(cfg.t_final / cfg.dt)):
            x, r0 = phys.solve_implicit(f, grid, step.dt, f, x0=f, precond=False)
            y, r1 = phys.solve_implicit(f, grid, step.dt, f, x0=f, precond=True)
            plain.append(r0.iterations)
            pre.append(r1.iterations)
            worst = max(worst, np.linalg.norm(y - x) / np.linalg.norm(x))
            assert r0.converged and r1.converged
            f = x
        rec.detail = (
            f"{len(plain)} steps, iterations {sum(plain)} plain vs {sum(pre)} preconditioned, "
            f"preconditioned more at {sum(b > a for a, b in zip(plain, pre))} steps, "
            f"worst relative difference {worst:.1e}"
        )
        assert all(b <= a for a, b in zip(plain, pre))
        assert worst <= 10 * tol
