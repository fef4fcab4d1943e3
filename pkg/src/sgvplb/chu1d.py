"""Chu-reduced 1x1v solver for ``(g1, g2, g3)`` on full Legendre grids.

The state holds per-cell orthonormal Legendre coefficients arranged as a
matrix ``G[x_dof, v_dof]`` with ``x_dof = cell * p + a``.  A separable
operator ``A (x) B`` then acts as ``A @ G @ B.T``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import basis1d as b1
from .krylov import SolveReport, gmres
from .vplb import ElectricField, FluidError, FluidFields, solve_poisson

SOLVERS = ("direct", "gmres")


@dataclass(frozen=True)
class ChuConfig:
    """Discretization and physics parameters of the reduced model.

    Attributes
    ----------
    x_domain, v_domain : (a, b)
        Periodic x interval and zero-flux velocity interval.
    nu : float
    k : int
    levels : (int, int)
        ``(l_x, l_v)``; ``2**l`` cells per dimension.
    electric_field : bool
        Solve Poisson for ``E``; when false ``E = 0``.
    solver : {"direct", "gmres"}
        Implicit stage solver.  Both report the true relative residual.
    gmres_tol, gmres_restart, gmres_maxiter :
        Options for ``solver="gmres"``; ``gmres_tol`` is also the
        residual bound a direct solve must meet.
    """

    x_domain: tuple
    v_domain: tuple
    nu: float
    k: int
    levels: tuple
    electric_field: bool = True
    solver: str = "gmres"
    gmres_tol: float = 1e-12
    gmres_restart: int = 100
    gmres_maxiter: int = 2000

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}")
        if len(self.levels) != 2:
            raise ValueError("levels must be (l_x, l_v)")
        for dom in (self.x_domain, self.v_domain):
            if not dom[1] > dom[0]:
                raise ValueError("empty domain")


@dataclass
class ChuState:
    """Reduced distribution functions at time ``t``.

    Each of ``g1, g2, g3`` has shape ``(2**l_x * p, 2**l_v * p)``.
    """

    g1: np.ndarray
    g2: np.ndarray
    g3: np.ndarray
    t: float = 0.0

    def copy(self) -> "ChuState":
        return ChuState(self.g1.copy(), self.g2.copy(), self.g3.copy(), self.t)


@dataclass
class ChuStepInfo:
    """Solver reports and the stage field of one step."""

    reports: list = field(default_factory=list)
    efield: Optional[ElectricField] = None

    @property
    def iterations(self) -> int:
        return sum(r.iterations for r in self.reports)


class ChuDiscretization:
    """Sparse 1D factors for a :class:`ChuConfig`."""

    def __init__(self, config: ChuConfig):
        self.config = config
        k = config.k
        lx, lv = config.levels
        self.k, self.p = k, k + 1
        self.nx, self.nv = 2**lx, 2**lv
        xd, vd = config.x_domain, config.v_domain
        leg = b1.assemble_legendre_operator
        csr = sp.csr_matrix
        self.xdiv = csr(leg("central-divergence", k, lx, xd, "periodic"))
        self.xpen = csr(leg("penalty", k, lx, xd, "periodic"))
        self.vmult = csr(leg("coordinate-multiply", k, lv, vd))
        self.vabs = csr(leg("coefficient-multiply", k, lv, vd, coefficient=np.abs, breakpoints=(0.0,)))
        self.div1 = csr(leg("central-divergence", k, lv, vd))
        self.pen1 = csr(leg("penalty", k, lv, vd))
        divv = leg("central-divergence", k, lv, vd, coefficient=lambda y: y)
        penabs = leg("penalty", k, lv, vd, coefficient=np.abs)
        grad = leg("ldg-gradient", k, lv, vd, "zero-trace")
        self.advection = csr(divv - penabs)
        self.diffusion = csr(self.div1.toarray() @ grad)
        self.advT = self.advection.toarray().T
        self.div1T = self.div1.toarray().T
        self.diffT = self.diffusion.toarray().T
        self.mom = {q: leg("moment-functional", k, lv, vd, power=q) for q in (0, 1, 2, 4)}
        self.xquad = b1._CellQuadrature(k, lx, xd, b1.default_quadrature_points(k))
        self.vquad = b1._CellQuadrature(k, lv, vd, b1.default_quadrature_points(k))
        self.x_int = leg("moment-functional", k, lx, xd, "periodic", power=0)
        self.hx = (xd[1] - xd[0]) / self.nx

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx * self.p, self.nv * self.p)

    # -- x-dependent multiplication -----------------------------------------
    def x_multiply(self, coeffs: np.ndarray) -> sp.csr_matrix:
        """Block-diagonal multiplication by per-cell Legendre coefficients."""
        lx = self.config.levels[0]
        m = b1.assemble_legendre_operator(
            "coefficient-multiply", self.k, lx, self.config.x_domain, coefficient=coeffs
        )
        return sp.csr_matrix(m)

    def v_functional(self, G: np.ndarray, q: int) -> np.ndarray:
        """``int v^q g dv`` as per-cell x Legendre coefficients ``(nx, p)``."""
        return (G @ self.mom[q]).reshape(self.nx, self.p)

    # -- operators -------------------------------------------------------------
    def vlasov(self, G: np.ndarray, efield: Optional[ElectricField]) -> np.ndarray:
        """``A_VP g`` such that ``g_t = -A_VP g`` is upwind transport."""
        out = self.xdiv @ (self.vmult @ G.T).T + self.xpen @ (self.vabs @ G.T).T
        if efield is not None and np.any(efield.E != 0.0):
            e = np.repeat(efield.E * 1.0, self.p)
            out += e[:, None] * (self.div1 @ G.T).T + np.abs(e)[:, None] * (self.pen1 @ G.T).T
        return out

    def x_blocks(self, coeffs: np.ndarray) -> np.ndarray:
        """Per-cell ``(p, p)`` blocks of :meth:`x_multiply`, shape (nx, p, p)."""
        return _weighted_mass(self, coeffs)

    def collision_apply(self, fluid: FluidFields, G: np.ndarray) -> np.ndarray:
        """Matrix-free ``C1(g; u, theta)`` on a state matrix."""
        U = self.x_blocks(fluid.u[0])
        T = self.x_blocks(fluid.theta)
        shp = (self.nx, self.p, -1)
        out = G @ self.advT
        out -= np.einsum("cab,cbm->cam", U, (G @ self.div1T).reshape(shp)).reshape(G.shape)
        out += np.einsum("cab,cbm->cam", T, (G @ self.diffT).reshape(shp)).reshape(G.shape)
        return out

    def collision_matrix(self, fluid: FluidFields) -> sp.csr_matrix:
        """Sparse matrix of ``C1(.; u, theta)`` on the vectorized state."""
        Ix = sp.identity(self.nx * self.p, format="csr")
        U = self.x_multiply(fluid.u[0])
        T = self.x_multiply(fluid.theta)
        L = sp.kron(Ix, self.advection) - sp.kron(U, self.div1) + sp.kron(T, self.diffusion)
        return L.tocsr()


@lru_cache(maxsize=8)
def _discretization(x_domain, v_domain, k, levels) -> ChuDiscretization:
    return ChuDiscretization(ChuConfig(x_domain, v_domain, 0.0, k, levels))


def chu_discretization(config: ChuConfig) -> ChuDiscretization:
    """Cached :class:`ChuDiscretization` (physics and solver options do not matter)."""
    return _discretization(tuple(config.x_domain), tuple(config.v_domain), config.k, tuple(config.levels))


# ---------------------------------------------------------------------------
# moments and fields
# ---------------------------------------------------------------------------


def _weighted_mass(disc: ChuDiscretization, coeffs: np.ndarray) -> np.ndarray:
    """Per-cell mass matrices ``int c phi_a phi_b`` in x, shape (nx, p, p)."""
    q = disc.xquad
    vals = coeffs @ q.phi
    return np.einsum("cq,aq,bq->cab", q.weights * vals, q.phi, q.phi)


def chu_moments(state: ChuState, config: ChuConfig, check: bool = True) -> FluidFields:
    """Fluid fields of the reduced state.

    ``n = int g1``, ``n u = int v g1`` and
    ``3 n theta = int (g1 v^2 + g2) - u int v g1``, with products resolved
    weakly in each x cell so that the discrete collision terms conserve
    number, momentum and energy.
    """
    disc = chu_discretization(config)
    n = disc.v_functional(state.g1, 0)
    rho1 = disc.v_functional(state.g1, 1)
    two_rho2 = disc.v_functional(state.g1, 2) + disc.v_functional(state.g2, 0)
    q = disc.xquad
    if check:
        nv = n @ q.phi
        bad = np.flatnonzero(np.any(nv <= 0, axis=1))
        if len(bad):
            c = int(bad[0])
            raise FluidError(f"nonpositive density in x-cell {c} (min {nv[c].min():.6g})")
    Mn = _weighted_mass(disc, n)
    u = np.linalg.solve(Mn, rho1[:, :, None])[:, :, 0]
    Mr = _weighted_mass(disc, rho1)
    rhs = two_rho2 - np.einsum("cab,cb->ca", Mr, u)
    theta = np.linalg.solve(3.0 * Mn, rhs[:, :, None])[:, :, 0]
    if check:
        tv = theta @ q.phi
        bad = np.flatnonzero(np.any(tv <= 0, axis=1))
        if len(bad):
            c = int(bad[0])
            raise FluidError(f"nonpositive temperature in x-cell {c} (min {tv[c].min():.6g})")
    uu = np.zeros((3,) + n.shape)
    uu[0] = u
    r1 = np.zeros((3,) + n.shape)
    r1[0] = rho1
    return FluidFields(
        n=n, u=uu, theta=theta, rho0=n.copy(), rho1=r1, rho2=0.5 * two_rho2,
        x_domain=tuple(config.x_domain), level=config.levels[0],
    )


def chu_field(state_g1: np.ndarray, config: ChuConfig) -> ElectricField:
    """Electric field from the density of ``g1`` (zero if disabled)."""
    disc = chu_discretization(config)
    if not config.electric_field:
        return ElectricField(np.zeros(disc.nx), np.zeros(disc.nx), tuple(config.x_domain))
    return solve_poisson(disc.v_functional(state_g1, 0), config.x_domain, config.k)


def chu_totals(state: ChuState, config: ChuConfig) -> dict:
    """Total number, momentum and energy of the reduced system."""
    disc = chu_discretization(config)
    ix = disc.x_int
    n = float(ix @ (state.g1 @ disc.mom[0]))
    mom = float(ix @ (state.g1 @ disc.mom[1]))
    ekin = 0.5 * float(ix @ (state.g1 @ disc.mom[2] + state.g2 @ disc.mom[0]))
    epot = chu_field(state.g1, config).potential_energy()
    return {"n": n, "mom": mom, "ekin": ekin, "epot": epot, "etotal": ekin + epot}


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------


def _solve(disc: ChuDiscretization, fluid: FluidFields, c: float, shift: float,
           rhs: np.ndarray, x0: np.ndarray, config: ChuConfig) -> tuple[np.ndarray, SolveReport]:
    """Solve ``(I - c (C1 - shift)) g = rhs``."""
    b = rhs.reshape(-1)
    bnorm = float(np.linalg.norm(b)) or 1.0
    if config.solver == "direct":
        L = disc.collision_matrix(fluid)
        mat = (sp.identity(b.size) * (1.0 + c * shift) - c * L).tocsc()
        x = spla.splu(mat).solve(b)
        res = float(np.linalg.norm(b - mat @ x)) / bnorm
        rep = SolveReport(1, res, res <= config.gmres_tol, 0, False, [res])
    else:
        shape = rhs.shape

        def applyA(v):
            G = v.reshape(shape)
            return ((1.0 + c * shift) * G - c * disc.collision_apply(fluid, G)).reshape(-1)

        x, rep = gmres(
            applyA, b, x0=x0.reshape(-1), tol=config.gmres_tol,
            restart=config.gmres_restart, maxiter=config.gmres_maxiter,
        )
    if not rep.converged:
        raise RuntimeError(f"implicit Chu stage failed: residual {rep.final_residual:.3e}")
    return x.reshape(rhs.shape), rep


def _implicit(star: ChuState, factor: float, config: ChuConfig, warm: ChuState) -> tuple[ChuState, list]:
    """Solve the collision stage with moments frozen at ``star``.

    Gauss-Seidel order g1, g2, g3 with the coupling sources evaluated at the
    freshly updated lower field.
    """
    c = factor * config.nu
    if c == 0.0:
        return star.copy(), []
    disc = chu_discretization(config)
    fluid = chu_moments(star, config)
    T = disc.x_blocks(fluid.theta)

    def theta_times(G):
        return np.einsum("cab,cbm->cam", T, G.reshape(disc.nx, disc.p, -1)).reshape(G.shape)

    reps = []
    g1, r = _solve(disc, fluid, c, 0.0, star.g1, warm.g1, config)
    reps.append(r)
    g2, r = _solve(disc, fluid, c, 2.0, star.g2 + 4.0 * c * theta_times(g1), warm.g2, config)
    reps.append(r)
    g3, r = _solve(disc, fluid, c, 4.0, star.g3 + 12.0 * c * theta_times(g2), warm.g3, config)
    reps.append(r)
    return ChuState(g1, g2, g3, star.t), reps


def _explicit(state: ChuState, dt: float, config: ChuConfig) -> tuple[ChuState, ElectricField]:
    disc = chu_discretization(config)
    ef = chu_field(state.g1, config)
    return ChuState(
        state.g1 - dt * disc.vlasov(state.g1, ef),
        state.g2 - dt * disc.vlasov(state.g2, ef),
        state.g3 - dt * disc.vlasov(state.g3, ef),
        state.t,
    ), ef


def chu_imex_step(state: ChuState, dt: float, config: ChuConfig, nu: Optional[float] = None) -> tuple[ChuState, ChuStepInfo]:
    """One second-order IMEX step of the reduced system.

    Parameters
    ----------
    state : ChuState
    dt : float
    config : ChuConfig
    nu : float, optional
        Overrides ``config.nu``.
    """
    if nu is not None and nu != config.nu:
        config = replace(config, nu=nu)
    s1s, ef = _explicit(state, dt, config)
    s1, r1 = _implicit(s1s, dt, config, state)
    e1, _ = _explicit(s1, dt, config)
    s2s = ChuState(
        0.5 * state.g1 + 0.5 * e1.g1,
        0.5 * state.g2 + 0.5 * e1.g2,
        0.5 * state.g3 + 0.5 * e1.g3,
        state.t,
    )
    s2, r2 = _implicit(s2s, 0.5 * dt, config, s1)
    s2.t = state.t + dt
    return s2, ChuStepInfo(r1 + r2, ef)


# ---------------------------------------------------------------------------
# initial data and sampling
# ---------------------------------------------------------------------------


def project_2d(func: Callable, config: ChuConfig, x_breakpoints=(), v_breakpoints=()) -> np.ndarray:
    """Cellwise L2 projection of ``func(x, v)`` onto the Legendre tensor space."""
    k = config.k
    lx, lv = config.levels
    npts = b1.default_quadrature_points(k) + 2
    qx = b1._CellQuadrature(k, lx, config.x_domain, npts, x_breakpoints)
    qv = b1._CellQuadrature(k, lv, config.v_domain, npts, v_breakpoints)
    X = qx.points.reshape(-1)[:, None]
    V = qv.points.reshape(-1)[None, :]
    F = np.asarray(func(X, V), dtype=float).reshape(qx.ncell, -1, qv.ncell, qv.points.shape[1])
    Wx = qx.weights[:, :, None] * qx.phi.T[None, :, :]  # (cx, q, a)
    Wv = qv.weights[:, :, None] * qv.phi.T[None, :, :]
    G = np.einsum("cqa,cqer,erb->caeb", Wx, F, Wv)
    p = k + 1
    return G.reshape(qx.ncell * p, qv.ncell * p)


def maxwellian_state(config: ChuConfig, n: Callable, u: Callable, theta: Callable, x_breakpoints=()) -> ChuState:
    """Local-Maxwellian initial data with transverse temperature ``theta``.

    ``g1 = n (2 pi theta)^{-1/2} exp(-(v-u)^2 / (2 theta))``,
    ``g2 = 2 theta g1`` and ``g3 = 6 theta^2 g1``.
    """

    def g1(x, v):
        th = theta(x)
        return n(x) / np.sqrt(2.0 * np.pi * th) * np.exp(-((v - u(x)) ** 2) / (2.0 * th))

    return ChuState(
        project_2d(g1, config, x_breakpoints),
        project_2d(lambda x, v: 2.0 * theta(x) * g1(x, v), config, x_breakpoints),
        project_2d(lambda x, v: 6.0 * theta(x) ** 2 * g1(x, v), config, x_breakpoints),
    )


def evaluate(G: np.ndarray, config: ChuConfig, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Point values of a reduced field on the tensor lattice ``x`` by ``v``."""
    k = config.k
    lx, lv = config.levels
    p = k + 1

    def basis(y, level, dom):
        a, b = map(float, dom)
        nc = 2**level
        h = (b - a) / nc
        y = np.asarray(y, dtype=float)
        cell = np.clip(np.floor((y - a) / h).astype(int), 0, nc - 1)
        xi = 2.0 * (y - a - h * cell) / h - 1.0
        B = np.zeros((y.size, nc * p))
        vals = b1.legendre_values(k, xi) / math.sqrt(h)
        for i in range(p):
            B[np.arange(y.size), cell * p + i] = vals[i]
        return B

    return basis(x, lx, config.x_domain) @ G @ basis(v, lv, config.v_domain).T


def sample_lattice(config: ChuConfig) -> tuple[np.ndarray, np.ndarray]:
    """Uniform ``2**l + 1`` point lattices in x and v."""
    lx, lv = config.levels
    return (
        np.linspace(config.x_domain[0], config.x_domain[1], 2**lx + 1),
        np.linspace(config.v_domain[0], config.v_domain[1], 2**lv + 1),
    )


def write_snapshot(path, state: ChuState, config: ChuConfig, which: str = "g1") -> None:
    """CSV ``x, v_x, value`` of one reduced field on the sample lattice."""
    G = {"g1": state.g1, "g2": state.g2, "g3": state.g3}[which]
    x, v = sample_lattice(config)
    vals = evaluate(G, config, x, v)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "v_x", "value"])
        for i, xi in enumerate(x):
            for j, vj in enumerate(v):
                w.writerow([repr(float(xi)), repr(float(vj)), repr(float(vals[i, j]))])


def read_snapshot(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of :func:`write_snapshot`: lattices and the value table."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    x = np.unique(data[:, 0])
    v = np.unique(data[:, 1])
    if len(x) * len(v) != len(data):
        raise ValueError("snapshot is not a tensor lattice")
    order = np.lexsort((data[:, 1], data[:, 0]))
    return x, v, data[order, 2].reshape(len(x), len(v))
