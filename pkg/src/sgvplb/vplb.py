"""Vlasov-Poisson-Lenard-Bernstein physics on hierarchical grids.

Grid dimensions are ``(v_x, v_y, v_z)`` in the ``0x3v`` geometry and
``(x, v_x, v_y, v_z)`` in the ``1x3v`` slab.  The semi-discrete system is

    d/dt f = -A_VP f + nu A_LB f,

where both operators are :class:`~sgvplb.kronops.SeparableOperator`
instances built from 1D wavelet-coordinate factors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from . import basis1d as b1
from .hiergrid import AdaptiveGrid
from .kronops import KronTerm, SeparableOperator


class FluidError(ValueError):
    """Nonpositive density or temperature in the fluid fields."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PhaseSpaceConfig:
    """Geometry, discretization and physical parameters.

    Attributes
    ----------
    geometry : {"0x3v", "1x3v"}
    v_domain : tuple of three (a, b) pairs
        Velocity box, zero-flux boundaries.
    x_domain : (a, b) or None
        Periodic spatial interval, slab geometry only.
    nu : float
        Collision frequency.
    k : int
        Polynomial degree.
    caps : tuple of int
        Per-dimension cap levels (three or four entries).
    electric_field : bool
        Solve Poisson for the self-consistent field; when false ``E = 0``.
    closure : {"plain", "trace"}
        Boundary treatment of the collision operator.  ``plain`` uses a
        zero exterior trace in the gradient on velocity-boundary faces and
        the defining formulas for ``(u, theta)``.  The discrete operator
        annihilates number for every state, and momentum and energy
        (``k >= 2``) for the state that supplied ``(u, theta)``.
        ``trace`` drops all boundary faces and instead corrects
        ``(u, theta)`` with the boundary-trace functionals.
    """

    geometry: str
    v_domain: tuple
    nu: float
    k: int
    caps: tuple
    x_domain: Optional[tuple] = None
    electric_field: bool = True
    closure: str = "plain"

    def __post_init__(self):
        if self.geometry not in ("0x3v", "1x3v"):
            raise ValueError(f"unknown geometry {self.geometry!r}")
        vd = tuple(tuple(float(c) for c in dom) for dom in self.v_domain)
        if len(vd) != 3 or any(b <= a for a, b in vd):
            raise ValueError("v_domain needs three nonempty intervals")
        object.__setattr__(self, "v_domain", vd)
        object.__setattr__(self, "caps", tuple(int(c) for c in self.caps))
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")
        if self.closure not in ("plain", "trace"):
            raise ValueError(f"unknown closure {self.closure!r}")
        if self.geometry == "1x3v":
            if self.x_domain is None:
                raise ValueError("slab geometry needs an x_domain")
            xd = tuple(float(c) for c in self.x_domain)
            if xd[1] <= xd[0]:
                raise ValueError("empty x_domain")
            object.__setattr__(self, "x_domain", xd)
            if len(self.caps) != 4:
                raise ValueError("slab geometry needs four caps")
        else:
            object.__setattr__(self, "x_domain", None)
            if len(self.caps) != 3:
                raise ValueError("0x3v geometry needs three caps")

    @property
    def d(self) -> int:
        return len(self.caps)

    @property
    def offset(self) -> int:
        """Grid index of the v_x dimension."""
        return 1 if self.geometry == "1x3v" else 0

    @property
    def domains(self) -> list:
        doms = list(self.v_domain)
        return [self.x_domain] + doms if self.geometry == "1x3v" else doms

    @property
    def periodic(self) -> tuple:
        return (True, False, False, False) if self.geometry == "1x3v" else (False,) * 3


# ---------------------------------------------------------------------------
# fluid variables and Maxwellians
# ---------------------------------------------------------------------------


def maxwellian(n, u, theta, v):
    """Evaluate ``n (2 pi theta)^{-3/2} exp(-|v-u|^2 / (2 theta))``.

    ``v`` is a 3-sequence of arrays (or scalars); ``u`` a 3-sequence.
    """
    if np.any(np.asarray(n) <= 0) or np.any(np.asarray(theta) <= 0):
        raise FluidError("maxwellian needs positive density and temperature")
    r2 = sum((np.asarray(vm, dtype=float) - um) ** 2 for vm, um in zip(v, u))
    return n * (2.0 * np.pi * theta) ** -1.5 * np.exp(-r2 / (2.0 * theta))


def maxwellian_1d(n: float, u: float, theta: float) -> Callable[[np.ndarray], np.ndarray]:
    """1D Gaussian factor ``n (2 pi theta)^{-1/2} exp(-(v-u)^2/(2 theta))``."""
    if n <= 0 or theta <= 0:
        raise FluidError("maxwellian needs positive density and temperature")
    c = n / math.sqrt(2.0 * math.pi * theta)
    return lambda v: c * np.exp(-((np.asarray(v) - u) ** 2) / (2.0 * theta))


def moments_from_fluid(n, u, theta):
    """Raw moments ``(n, n u, n(|u|^2/2 + 3 theta/2))`` of a Maxwellian."""
    n = np.asarray(n, dtype=float)
    u = np.asarray(u, dtype=float)
    u2 = np.sum(u * u, axis=0)
    return n, n * u, n * (0.5 * u2 + 1.5 * np.asarray(theta))


def fluid_from_moments(rho0, rho1, rho2):
    """Pointwise inverse of :func:`moments_from_fluid`."""
    rho0 = np.asarray(rho0, dtype=float)
    rho1 = np.asarray(rho1, dtype=float)
    if np.any(rho0 <= 0):
        raise FluidError("nonpositive density")
    u = rho1 / rho0
    theta = (2.0 * np.asarray(rho2) - np.sum(u * rho1, axis=0)) / (3.0 * rho0)
    if np.any(theta <= 0):
        raise FluidError("nonpositive temperature")
    return rho0, u, theta


@dataclass
class FluidFields:
    """Fluid fields on the cap-level x mesh.

    Every field is an array of per-cell orthonormal Legendre coefficients
    of shape ``(ncell, px)``.  In the ``0x3v`` geometry ``ncell = px = 1``
    and the single coefficient is the value itself.

    Attributes
    ----------
    n, theta : ndarray
    u : ndarray, shape (3, ncell, px)
    rho0 : ndarray
        Number density (equal to ``n``).
    rho1 : ndarray, shape (3, ncell, px)
        Momentum density.
    rho2 : ndarray
        Energy density ``<|v|^2 f> / 2``.
    """

    n: np.ndarray
    u: np.ndarray
    theta: np.ndarray
    rho0: np.ndarray
    rho1: np.ndarray
    rho2: np.ndarray
    x_domain: Optional[tuple] = None
    level: int = 0

    @property
    def ncell(self) -> int:
        return self.n.shape[0]

    def cell_means(self, name: str) -> np.ndarray:
        """Cell averages of a field (``u`` returns the x component)."""
        arr = getattr(self, name)
        if name in ("u", "rho1"):
            arr = arr[0]
        if self.x_domain is None:
            return arr[:, 0].copy()
        h = (self.x_domain[1] - self.x_domain[0]) / self.ncell
        return arr[:, 0] / math.sqrt(h)


@dataclass
class ElectricField:
    """Continuous P1 potential and piecewise-constant field on the x mesh."""

    phi: np.ndarray
    E: np.ndarray
    x_domain: tuple

    @property
    def h(self) -> float:
        return (self.x_domain[1] - self.x_domain[0]) / len(self.E)

    def legendre(self) -> np.ndarray:
        """Per-cell orthonormal Legendre coefficients, shape ``(ncell, 1)``."""
        return (self.E * math.sqrt(self.h))[:, None]

    def potential_energy(self) -> float:
        return 0.5 * self.h * float(np.sum(self.E**2))


# ---------------------------------------------------------------------------
# separable functions and projection
# ---------------------------------------------------------------------------


@dataclass
class SeparableFunction:
    """``sum_t scale_t prod_m f_{t,m}(y_m)`` for initial conditions.

    Each factor may carry breakpoints (kinks or jumps) for exact
    piecewise quadrature, given as ``(callable, breakpoints)`` pairs.
    """

    terms: list = field(default_factory=list)

    def add(self, scale: float, factors: Sequence, breakpoints: Optional[Sequence] = None):
        bps = breakpoints or [()] * len(factors)
        self.terms.append((float(scale), tuple(factors), tuple(tuple(b) for b in bps)))
        return self

    def __call__(self, *ys):
        out = 0.0
        for scale, fs, _ in self.terms:
            val = scale
            for f, y in zip(fs, ys):
                val = val * f(y)
            out = out + val
        return out


# ---------------------------------------------------------------------------
# discretization
# ---------------------------------------------------------------------------


def _abs(y):
    return np.abs(y)


def _ident(y):
    return np.asarray(y, dtype=float)


class Discretization:
    """Immutable 1D factors and helpers for one :class:`PhaseSpaceConfig`."""

    def __init__(self, config: PhaseSpaceConfig):
        self.config = config
        k = config.k
        self.k = k
        self.p = k + 1
        off = config.offset
        self.vdims = [off, off + 1, off + 2]
        self.v = []
        for m in range(3):
            lev = config.caps[off + m]
            dom = config.v_domain[m]
            ops = {}
            ops["div1"] = b1.assemble_1d_operator("central-divergence", k, lev, dom)
            ops["divv"] = b1.assemble_1d_operator("central-divergence", k, lev, dom, coefficient=_ident)
            ops["pen1"] = b1.assemble_1d_operator("penalty", k, lev, dom)
            ops["penabs"] = b1.assemble_1d_operator("penalty", k, lev, dom, coefficient=_abs)
            gb = "zero-trace" if config.closure == "plain" else "zero-flux"
            grad = b1.assemble_1d_operator("ldg-gradient", k, lev, dom, gb)
            ops["grad"] = grad
            diff = ops["div1"].matrix @ grad.matrix
            ops["diffusion"] = diff
            ops["advection"] = ops["divv"].matrix - ops["penabs"].matrix
            ops["mult"] = b1.assemble_1d_operator("coordinate-multiply", k, lev, dom)
            ops["absmult"] = b1.assemble_1d_operator(
                "coefficient-multiply", k, lev, dom, coefficient=_abs, breakpoints=(0.0,)
            )
            for q in (0, 1, 2, 4):
                ops[f"mom{q}"] = b1.assemble_1d_operator("moment-functional", k, lev, dom, power=q).matrix
            ta, tb = b1.boundary_traces(k, lev, dom)
            ops["trace_a"], ops["trace_b"] = ta, tb
            ops["jump"] = tb - ta
            ops["vjump"] = dom[1] * tb - dom[0] * ta
            self.v.append(ops)
        if config.geometry == "1x3v":
            lev = config.caps[0]
            dom = config.x_domain
            self.x_level = lev
            self.x_ncell = 2**lev
            self.x_h = (dom[1] - dom[0]) / self.x_ncell
            self.xdiv = b1.assemble_1d_operator("central-divergence", k, lev, dom, "periodic")
            self.xpen = b1.assemble_1d_operator("penalty", k, lev, dom, "periodic")
            self.x_transform = b1.build_transform(k, lev).forward
            quad = b1._CellQuadrature(k, lev, dom, b1.default_quadrature_points(k))
            self.x_quad = quad
            self.x_int = b1.assemble_1d_operator("moment-functional", k, lev, dom, "periodic", power=0).matrix
        else:
            self.x_level = 0
            self.x_ncell = 1

    # -- conversions ----------------------------------------------------
    def x_wavelet_to_legendre(self, vec: np.ndarray) -> np.ndarray:
        return (self.x_transform.T @ vec).reshape(self.x_ncell, self.p)

    def x_legendre_to_wavelet(self, coeffs: np.ndarray) -> np.ndarray:
        return self.x_transform @ np.asarray(coeffs).reshape(-1)

    def x_multiply(self, coeffs: np.ndarray) -> np.ndarray:
        """Wavelet-coordinate multiplication matrix for a per-cell polynomial."""
        cfg = self.config
        return b1.assemble_1d_operator(
            "coefficient-multiply", self.k, cfg.caps[0], cfg.x_domain, "periodic", coefficient=coeffs
        ).matrix

    # -- velocity functionals ---------------------------------------------
    def velocity_functional(self, state: np.ndarray, grid: AdaptiveGrid, vecs: Sequence[np.ndarray]):
        """Contract the velocity dimensions of ``state`` against ``vecs``.

        Returns a wavelet vector in x (slab) or a scalar (0x3v).
        """
        p = self.p
        X = np.asarray(state).reshape((grid.n_elements,) + (p,) * grid.d)
        off = self.config.offset
        blocks = []
        mask = np.ones(grid.n_elements, dtype=bool)
        for m in range(3):
            vb = np.asarray(vecs[m]).reshape(-1, p)[grid.cells[:, off + m]]
            blocks.append(vb)
            mask &= np.any(vb != 0.0, axis=1)
        idx = np.flatnonzero(mask)
        if off == 0:
            return float(np.einsum("nabc,na,nb,nc->", X[idx], blocks[0][idx], blocks[1][idx], blocks[2][idx]))
        contrib = np.einsum(
            "nxabc,na,nb,nc->nx", X[idx], blocks[0][idx], blocks[1][idx], blocks[2][idx]
        )
        out = np.zeros((2 ** self.config.caps[0], p))
        np.add.at(out, grid.cells[idx, 0], contrib)
        return out.reshape(-1)

    def raw_functionals(self, state, grid) -> dict:
        """Number, momentum, energy and boundary functionals of ``state``."""
        v = self.v
        one = [v[m]["mom0"] for m in range(3)]

        def with_(m, vec):
            vv = list(one)
            vv[m] = vec
            return self.velocity_functional(state, grid, vv)

        out = {"n": self.velocity_functional(state, grid, one)}
        out["rho1"] = [with_(m, v[m]["mom1"]) for m in range(3)]
        out["m2"] = [with_(m, v[m]["mom2"]) for m in range(3)]
        out["B"] = [with_(m, v[m]["jump"]) for m in range(3)]
        out["C"] = [with_(m, v[m]["vjump"]) for m in range(3)]
        return out

    # -- moments and fluid -------------------------------------------------
    def compute_moments(self, state, grid, check: bool = True) -> FluidFields:
        cfg = self.config
        raw = self.raw_functionals(state, grid)
        conservative = cfg.closure == "trace"
        if cfg.geometry == "0x3v":
            n = raw["n"]
            rho1 = np.array(raw["rho1"])
            two_rho2 = float(np.sum(raw["m2"]))
            if n <= 0:
                raise FluidError(f"nonpositive density n={n:.6g}")
            B = np.array(raw["B"]) if conservative else np.zeros(3)
            C = np.array(raw["C"]) if conservative else np.zeros(3)
            A = np.zeros((4, 4))
            A[:3, :3] = n * np.eye(3)
            A[:3, 3] = -B
            A[3, :3] = rho1
            A[3, 3] = 3.0 * n - C.sum()
            sol = np.linalg.solve(A, np.concatenate([rho1, [two_rho2]]))
            u, theta = sol[:3], sol[3]
            if check and theta <= 0:
                raise FluidError(f"nonpositive temperature theta={theta:.6g}")
            shp = (1, 1)
            return FluidFields(
                n=np.full(shp, n), u=u.reshape(3, 1, 1), theta=np.full(shp, theta),
                rho0=np.full(shp, n), rho1=rho1.reshape(3, 1, 1), rho2=np.full(shp, 0.5 * two_rho2),
            )
        leg = self.x_wavelet_to_legendre
        n = leg(raw["n"])
        rho1 = np.array([leg(r) for r in raw["rho1"]])
        two_rho2 = leg(sum(raw["m2"]))
        B = leg(raw["B"][0]) if conservative else np.zeros_like(n)
        C = leg(sum(raw["C"])) if conservative else np.zeros_like(n)
        q = self.x_quad
        phi = q.phi  # (p, nq)
        w = q.weights  # (ncell, nq)
        nq_vals = n @ phi
        if check:
            bad = np.flatnonzero(np.any(nq_vals <= 0, axis=1))
            if len(bad):
                c = int(bad[0])
                raise FluidError(
                    f"nonpositive density in x-cell {c} (x in [{q.nodes[c]:.6g}, {q.nodes[c + 1]:.6g}]), "
                    f"min {nq_vals[c].min():.6g}"
                )

        def mass(f):
            return np.einsum("cq,aq,bq->cab", w * (f @ phi), phi, phi)

        p = self.p
        M = np.zeros((self.x_ncell, 2 * p, 2 * p))
        M[:, :p, :p] = mass(n)
        M[:, :p, p:] = -mass(B)
        M[:, p:, :p] = mass(rho1[0])
        M[:, p:, p:] = mass(3.0 * n - C)
        rhs = np.concatenate([rho1[0], two_rho2], axis=1)
        sol = np.linalg.solve(M, rhs[:, :, None])[:, :, 0]
        ux, theta = sol[:, :p], sol[:, p:]
        if check:
            tv = theta @ phi
            bad = np.flatnonzero(np.any(tv <= 0, axis=1))
            if len(bad):
                c = int(bad[0])
                raise FluidError(
                    f"nonpositive temperature in x-cell {c} (x in [{q.nodes[c]:.6g}, {q.nodes[c + 1]:.6g}]), "
                    f"min {tv[c].min():.6g}"
                )
        u = np.zeros((3,) + n.shape)
        u[0] = ux
        return FluidFields(
            n=n, u=u, theta=theta, rho0=n.copy(), rho1=rho1, rho2=0.5 * two_rho2,
            x_domain=cfg.x_domain, level=self.x_level,
        )

    # -- Poisson -----------------------------------------------------------
    def solve_poisson(self, n_coeffs: np.ndarray) -> ElectricField:
        return solve_poisson(n_coeffs, self.config.x_domain, self.k)

    def zero_field(self) -> ElectricField:
        N = self.x_ncell
        return ElectricField(np.zeros(N), np.zeros(N), self.config.x_domain)

    def electric_field(self, state, grid) -> ElectricField:
        if self.config.geometry != "1x3v" or not self.config.electric_field:
            return self.zero_field() if self.config.geometry == "1x3v" else None
        n = self.x_wavelet_to_legendre(
            self.velocity_functional(state, grid, [self.v[m]["mom0"] for m in range(3)])
        )
        return self.solve_poisson(n)

    # -- operators -----------------------------------------------------------
    def assemble_vlasov(self, efield: Optional[ElectricField]) -> SeparableOperator:
        cfg = self.config
        if cfg.geometry != "1x3v":
            return SeparableOperator([], cfg.caps, self.k, cfg.periodic)
        vx = self.v[0]
        terms = [
            KronTerm(1.0, (self.xdiv.matrix, vx["mult"].matrix, None, None)),
            KronTerm(1.0, (self.xpen.matrix, vx["absmult"].matrix, None, None)),
        ]
        if efield is not None and np.any(efield.E != 0.0):
            ecoef = efield.legendre()
            terms.append(KronTerm(1.0, (self.x_multiply(ecoef), vx["div1"].matrix, None, None)))
            terms.append(KronTerm(1.0, (self.x_multiply(np.abs(ecoef)), vx["pen1"].matrix, None, None)))
        return SeparableOperator(terms, cfg.caps, self.k, cfg.periodic)

    def assemble_lb(self, fluid: FluidFields) -> SeparableOperator:
        cfg = self.config
        if cfg.geometry == "0x3v":
            theta = float(fluid.theta[0, 0])
            if theta <= 0:
                raise FluidError(f"nonpositive temperature theta={theta:.6g}")
            terms = []
            for m in range(3):
                ops = self.v[m]
                mat = ops["advection"] - float(fluid.u[m, 0, 0]) * ops["div1"].matrix + theta * ops["diffusion"]
                f = [None] * 3
                f[m] = mat
                terms.append(KronTerm(1.0, tuple(f)))
            return SeparableOperator(terms, cfg.caps, self.k, cfg.periodic)
        tv = fluid.theta @ self.x_quad.phi
        if np.any(tv <= 0):
            c = int(np.flatnonzero(np.any(tv <= 0, axis=1))[0])
            raise FluidError(f"nonpositive temperature in x-cell {c}")
        umat = self.x_multiply(fluid.u[0])
        tmat = self.x_multiply(fluid.theta)
        terms = []
        for m in range(3):
            ops = self.v[m]
            f = [None] * 4
            f[1 + m] = ops["advection"]
            terms.append(KronTerm(1.0, tuple(f)))
        terms.append(KronTerm(-1.0, (umat, self.v[0]["div1"].matrix, None, None)))
        for m in range(3):
            f = [tmat, None, None, None]
            f[1 + m] = self.v[m]["diffusion"]
            terms.append(KronTerm(1.0, tuple(f)))
        return SeparableOperator(terms, cfg.caps, self.k, cfg.periodic)

    # -- projection ----------------------------------------------------------
    def project(self, func, grid: AdaptiveGrid) -> np.ndarray:
        return project_initial(func, grid, self.config.domains)

    # -- diagnostics -----------------------------------------------------------
    def totals(self, state, grid, efield: Optional[ElectricField] = None) -> dict:
        """Phase-space totals of number, momentum and energy.

        ``mom`` is the x-momentum; ``mom_vec`` holds all three components.
        """
        raw = self.raw_functionals(state, grid)
        if self.config.geometry == "1x3v":
            integ = self.x_int
            n = float(integ @ raw["n"])
            mom_vec = [float(integ @ r) for r in raw["rho1"]]
            ekin = 0.5 * float(integ @ sum(raw["m2"]))
        else:
            n = raw["n"]
            mom_vec = [float(r) for r in raw["rho1"]]
            ekin = 0.5 * float(np.sum(raw["m2"]))
        epot = efield.potential_energy() if efield is not None else 0.0
        return {
            "n": n, "mom": mom_vec[0], "mom_vec": np.array(mom_vec),
            "ekin": ekin, "epot": epot, "etotal": ekin + epot,
        }


@lru_cache(maxsize=8)
def discretization(config: PhaseSpaceConfig) -> Discretization:
    """Cached :class:`Discretization` for a configuration."""
    return Discretization(config)


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------


def compute_moments(state, grid: AdaptiveGrid, config: PhaseSpaceConfig, check: bool = True) -> FluidFields:
    """Moments and fluid variables of ``state``.

    Raises
    ------
    FluidError
        On nonpositive density or temperature.
    """
    return discretization(config).compute_moments(state, grid, check=check)


def solve_poisson(n_coeffs: np.ndarray, x_domain: tuple, k: int) -> ElectricField:
    """Periodic P1 finite-element solve of ``-phi'' = n - mean(n)``.

    Parameters
    ----------
    n_coeffs : ndarray, shape (ncell, q)
        Per-cell orthonormal Legendre coefficients of the density.
    x_domain : (a, b)
    k : int
        Degree used to pick the quadrature rule.

    Returns
    -------
    ElectricField
        Zero-mean nodal potential and the cellwise field ``-phi'``.
    """
    n_coeffs = np.asarray(n_coeffs, dtype=float)
    if n_coeffs.ndim == 1:
        n_coeffs = n_coeffs[:, None]
    a, b = map(float, x_domain)
    N = n_coeffs.shape[0]
    h = (b - a) / N
    if N == 1:
        return ElectricField(np.zeros(1), np.zeros(1), (a, b))
    xq, wq = b1.gauss_rule(max(b1.default_quadrature_points(k), n_coeffs.shape[1] + 1))
    deg = n_coeffs.shape[1] - 1
    vals = n_coeffs @ (b1.legendre_values(deg, xq) / math.sqrt(h))  # (N, nq)
    wts = 0.5 * h * wq
    ne = float(np.sum(vals * wts)) / (b - a)
    src = vals - ne
    hat_l = 0.5 * (1.0 - xq)  # node c
    hat_r = 0.5 * (1.0 + xq)  # node c+1
    rhs = np.zeros(N)
    rhs += (src * wts) @ hat_l
    np.add.at(rhs, (np.arange(N) + 1) % N, (src * wts) @ hat_r)
    K = np.zeros((N + 1, N + 1))
    idx = np.arange(N)
    nxt = (idx + 1) % N
    np.add.at(K, (idx, idx), 1.0 / h)
    np.add.at(K, (nxt, nxt), 1.0 / h)
    np.add.at(K, (idx, nxt), -1.0 / h)
    np.add.at(K, (nxt, idx), -1.0 / h)
    K[:N, N] = 1.0
    K[N, :N] = 1.0
    sol = np.linalg.solve(K, np.concatenate([rhs, [0.0]]))
    phi = sol[:N]
    E = -(phi[nxt] - phi) / h
    return ElectricField(phi, E, (a, b))


def potential_energy(efield: Optional[ElectricField]) -> float:
    """``0.5 * int E^2`` for the piecewise-constant field."""
    return 0.0 if efield is None else efield.potential_energy()


def assemble_vlasov(efield: Optional[ElectricField], config: PhaseSpaceConfig, grid: Optional[AdaptiveGrid] = None) -> SeparableOperator:
    """Vlasov streaming and acceleration form ``A_VP`` with upwind fluxes."""
    return discretization(config).assemble_vlasov(efield)


def assemble_lb(fluid: FluidFields, config: PhaseSpaceConfig, grid: Optional[AdaptiveGrid] = None) -> SeparableOperator:
    """Lenard-Bernstein LDG form ``A_LB`` for frozen fluid fields."""
    return discretization(config).assemble_lb(fluid)


# Gauss points per cell for separable factors
SEPARABLE_POINTS = 24


def project_initial(func, grid: AdaptiveGrid, domains: Sequence) -> np.ndarray:
    """L2 projection of ``func`` onto the space spanned by ``grid``.

    Parameters
    ----------
    func : SeparableFunction or callable
        A callable receives one array per dimension (broadcast together).
    grid : AdaptiveGrid
    domains : sequence of (a, b)

    Returns
    -------
    ndarray
        Flat wavelet-coefficient state aligned with ``grid``.
    """
    k, p, d = grid.k, grid.p, grid.d
    if isinstance(func, SeparableFunction):
        out = np.zeros((grid.n_elements,) + (p,) * d)
        letters = "abcdefg"[:d]
        spec = ",".join("n" + c for c in letters) + "->n" + letters
        for scale, fs, bps in func.terms:
            blocks = []
            for m in range(d):
                leg = project_legendre_bp(fs[m], k, grid.caps[m], domains[m], bps[m])
                wav = b1.wavelet_analysis(k, grid.caps[m], leg.reshape(-1)).reshape(-1, p)
                blocks.append(wav[grid.cells[:, m]])
            out += scale * np.einsum(spec, *blocks)
        return out.reshape(-1)
    # generic callable: tensor quadrature on the full cap-level mesh
    quads = [
        b1._CellQuadrature(k, grid.caps[m], domains[m], b1.default_quadrature_points(k) + 2)
        for m in range(d)
    ]
    axes = np.meshgrid(*[q.points.reshape(-1) for q in quads], indexing="ij", sparse=True)
    T = np.asarray(func(*axes), dtype=float)
    T = np.broadcast_to(T, tuple(q.points.size for q in quads))
    for m, q in enumerate(quads):
        # (cells*nq) -> (cells*p) weighted Legendre moments along axis m
        W = np.zeros((q.ncell * p, q.points.size))
        nq = q.points.shape[1]
        for c in range(q.ncell):
            W[c * p : (c + 1) * p, c * nq : (c + 1) * nq] = q.phi * q.weights[c]
        T = np.moveaxis(np.tensordot(W, T, axes=([1], [m])), 0, m)
    for m in range(d):
        T = np.moveaxis(b1.wavelet_analysis(k, grid.caps[m], np.moveaxis(T, m, 0)), 0, m)
    micro = np.indices((p,) * d).reshape(d, -1).T
    pos = grid.cells[:, None, :] * p + micro[None, :, :]
    return T[tuple(pos.reshape(-1, d).T)].reshape(-1)


def project_legendre_bp(func, k: int, level: int, dom, breakpoints=()) -> np.ndarray:
    """Per-cell Legendre projection with optional piecewise quadrature.

    One-dimensional factors are cheap, so a generous rule is used: narrow
    Maxwellians on coarse cells are then projected to round-off.
    """
    quad = b1._CellQuadrature(k, level, dom, max(b1.default_quadrature_points(k) + 2, SEPARABLE_POINTS), breakpoints)
    vals = np.asarray(func(quad.points), dtype=float)
    return (quad.weights * vals) @ quad.phi.T


def maxwellian_function(n: float, u: Sequence[float], theta: float, x_factor=None, x_breakpoints=()) -> SeparableFunction:
    """Separable representation of a (possibly x-modulated) Maxwellian."""
    fs = [maxwellian_1d(1.0, u[m], theta) for m in range(3)]
    sf = SeparableFunction()
    if x_factor is None:
        sf.add(n, fs)
    else:
        sf.add(n, [x_factor] + fs, [tuple(x_breakpoints), (), (), ()])
    return sf
