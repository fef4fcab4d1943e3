"""Problem presets: default parameters and initial conditions."""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from ..chu1d import ChuConfig, ChuState, maxwellian_state
from ..vplb import PhaseSpaceConfig, SeparableFunction, maxwellian_1d
from .config import RunConfig

LANDAU_EPS = 1e-4
LANDAU_WAVENUMBER = 0.5
RIEMANN_OUTER = (1.0, 0.0, 1.0)
RIEMANN_INNER = (0.125, 0.0, 0.8)
RELAX_EQUILIBRIUM = (1.0, (1.0, 1.0, 1.0), 2.5)


def _riemann_variant(nu: float) -> dict:
    if nu >= 100.0:
        return dict(x_domain=(-0.25, 0.25), t_final=0.05, dt=2e-4, s=9.0 / 64.0)
    return dict(x_domain=(-0.6, 0.6), t_final=0.04918, dt=2.3419e-4, s=0.3)


def riemann_interface(cfg: RunConfig) -> float:
    """Half-width ``s`` of the inner state of the Riemann preset."""
    return _riemann_variant(cfg.nu)["s"]


def landau_dt(x_domain, lx: int) -> float:
    """``(0.75/30) * dx`` on the level-``lx`` mesh."""
    return 0.75 / 30.0 * (x_domain[1] - x_domain[0]) / 2**lx


def resolve(cfg: RunConfig) -> RunConfig:
    """Fill every unset parameter from the problem preset."""
    fill = {}
    prob = cfg.problem
    if prob == "relaxation":
        fill = dict(nu=1e3, dt=5e-4, t_final=0.02, v_domain=(-8.0, 12.0), electric_field=False, gmres_tol=1e-8)
    elif prob in ("riemann", "chu-riemann"):
        nu = 1.0 if cfg.nu is None else cfg.nu
        var = _riemann_variant(nu)
        fill = dict(
            nu=nu, dt=var["dt"], t_final=var["t_final"], x_domain=var["x_domain"],
            v_domain=(-6.0, 6.0), electric_field=False,
            gmres_tol=1e-8 if prob == "riemann" else 1e-12,
        )
    elif prob in ("landau", "chu-landau"):
        nu = 1e-2 if cfg.nu is None else cfg.nu
        xd = (-2.0 * math.pi, 2.0 * math.pi) if cfg.x_domain is None else cfg.x_domain
        if prob == "landau":
            tol = 1e-14 if nu < 0.1 else 1e-11
        else:
            tol = 1e-12
        fill = dict(
            nu=nu, dt=landau_dt(xd, cfg.levels[0]), t_final=50.0, x_domain=xd,
            v_domain=(-6.0, 6.0), electric_field=True, gmres_tol=tol,
        )
    updates = {k: v for k, v in fill.items() if getattr(cfg, k) is None}
    return dataclasses.replace(cfg, **updates)


def _v3(cfg: RunConfig) -> tuple:
    vd = tuple(cfg.v_domain)
    return (vd, vd, vd)


def phase_space_config(cfg: RunConfig) -> PhaseSpaceConfig:
    """The :class:`PhaseSpaceConfig` of a resolved 4D or 3D run."""
    return PhaseSpaceConfig(
        geometry=cfg.geometry, v_domain=_v3(cfg), nu=cfg.nu, k=cfg.k,
        caps=cfg.resolved_caps(),
        x_domain=None if cfg.geometry == "0x3v" else tuple(cfg.x_domain),
        electric_field=bool(cfg.electric_field),
    )


def chu_config(cfg: RunConfig) -> ChuConfig:
    """The :class:`ChuConfig` of a resolved reduced run."""
    return ChuConfig(
        x_domain=tuple(cfg.x_domain), v_domain=tuple(cfg.v_domain), nu=cfg.nu, k=cfg.k,
        levels=tuple(cfg.levels), electric_field=bool(cfg.electric_field),
        solver=cfg.chu_solver, gmres_tol=cfg.gmres_tol, gmres_restart=cfg.gmres_restart, gmres_maxiter=cfg.gmres_maxiter,
    )


def _indicator(lo: float, hi: float, inside: bool):
    def f(x):
        x = np.asarray(x, dtype=float)
        m = (np.abs(x) < hi) & (np.abs(x) >= lo)
        return (m if inside else ~m).astype(float)

    return f


def initial_condition(cfg: RunConfig) -> SeparableFunction:
    """Separable initial distribution of a resolved 3D or 4D run."""
    prob = cfg.problem
    sf = SeparableFunction()
    if prob == "relaxation":
        for m in range(3):
            u = [0.0, 0.0, 0.0]
            u[m] = 3.0
            sf.add(1.0 / 3.0, [maxwellian_1d(1.0, u[i], 0.5) for i in range(3)])
        return sf
    if prob == "riemann":
        s = riemann_interface(cfg)
        bps = [(-s, s), (), (), ()]
        for (n, u, th), inside in ((RIEMANN_OUTER, False), (RIEMANN_INNER, True)):
            factors = [_indicator(0.0, s, inside)] + [maxwellian_1d(1.0, u if m == 0 else 0.0, th) for m in range(3)]
            sf.add(n, factors, bps)
        return sf
    if prob == "landau":
        kx = LANDAU_WAVENUMBER

        def density(x):
            return 1.0 + LANDAU_EPS * np.cos(kx * np.asarray(x, dtype=float))

        sf.add(1.0, [density] + [maxwellian_1d(1.0, 0.0, 1.0) for _ in range(3)])
        return sf
    raise ValueError(f"no separable initial condition for {prob!r}")


def chu_initial_state(cfg: RunConfig) -> ChuState:
    """Reduced initial state of a resolved Chu run."""
    ccfg = chu_config(cfg)
    if cfg.problem == "chu-riemann":
        s = riemann_interface(cfg)

        def pick(i):
            def f(x):
                x = np.asarray(x, dtype=float)
                return np.where(np.abs(x) < s, RIEMANN_INNER[i], RIEMANN_OUTER[i])

            return f

        return maxwellian_state(ccfg, pick(0), pick(1), pick(2), x_breakpoints=(-s, s))
    if cfg.problem == "chu-landau":
        return maxwellian_state(
            ccfg,
            lambda x: 1.0 + LANDAU_EPS * np.cos(LANDAU_WAVENUMBER * x),
            lambda x: 0.0 * x,
            lambda x: 1.0 + 0.0 * x,
        )
    raise ValueError(f"{cfg.problem!r} is not a reduced problem")
