"""Diagnostics: energies, damping-rate fit, marginals and error norms."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .. import basis1d as b1
from ..chu1d import ChuConfig, ChuState
from ..hiergrid import AdaptiveGrid, full_index_set, reindex
from ..vplb import (
    ElectricField,
    PhaseSpaceConfig,
    discretization,
    maxwellian_function,
    project_initial,
    project_legendre_bp,
)

TIMESERIES_COLUMNS = ("t", "active_elements", "gmres_iters", "dn", "dmom", "denergy", "epot", "ekin", "etotal")


class FitError(ValueError):
    """Too few local maxima to fit a damping rate."""


@dataclass(frozen=True)
class TimeSeriesRecord:
    """One row of ``timeseries.csv``."""

    t: float
    active_elements: int
    gmres_iters: int
    dn: float
    dmom: float
    denergy: float
    epot: float
    ekin: float
    etotal: float

    def row(self) -> list:
        return [getattr(self, c) for c in TIMESERIES_COLUMNS]


def potential_energy(efield: Optional[ElectricField]) -> float:
    """``0.5 * int E^2`` of a piecewise-constant field (0 for no field)."""
    return 0.0 if efield is None else efield.potential_energy()


def local_maxima(values: np.ndarray, min_separation: int = 1) -> np.ndarray:
    """Indices of strict interior local maxima at least ``min_separation`` apart.

    When two maxima are closer, the larger one is kept.
    """
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        return np.zeros(0, dtype=int)
    idx = np.flatnonzero((v[1:-1] > v[:-2]) & (v[1:-1] > v[2:])) + 1
    if min_separation <= 1 or idx.size == 0:
        return idx
    kept: list[int] = []
    for i in idx:
        if kept and i - kept[-1] < min_separation:
            if v[i] > v[kept[-1]]:
                kept[-1] = int(i)
            continue
        kept.append(int(i))
    return np.array(kept, dtype=int)


def damping_rate_fit(t: Sequence[float], epot: Sequence[float], t_min: float = 0.0,
                     t_max: Optional[float] = None) -> float:
    """Fit ``E_pot ~ exp(-gamma t)`` through the local maxima of the series.

    Maxima are strict interior maxima on the sampled series, thinned with
    a minimum separation of half the oscillation period estimated from
    the first two raw maxima.  ``gamma`` is minus the least-squares slope of
    ``log E_pot`` against ``t`` at the maxima.

    Raises
    ------
    FitError
        Fewer than three maxima.
    """
    t = np.asarray(t, dtype=float)
    e = np.asarray(epot, dtype=float)
    if t.shape != e.shape:
        raise ValueError("t and epot differ in length")
    sel = t >= t_min
    if t_max is not None:
        sel &= t <= t_max
    t, e = t[sel], e[sel]
    if e.size and np.ptp(e) == 0.0:
        return 0.0
    raw = local_maxima(e)
    if raw.size < 2:
        raise FitError(f"need at least 3 local maxima, found {raw.size}")
    half_period = max(1, (raw[1] - raw[0]) // 2)
    peaks = local_maxima(e, half_period)
    peaks = peaks[e[peaks] > 0]
    if peaks.size < 3:
        raise FitError(f"need at least 3 local maxima, found {peaks.size}")
    slope, _ = np.polyfit(t[peaks], np.log(e[peaks]), 1)
    return float(-slope)


# ---------------------------------------------------------------------------
# marginals of phase-space states
# ---------------------------------------------------------------------------

WEIGHTS = {"g1": ((0, 0),), "g2": ((2, 0), (0, 2)), "g3": ((4, 0), (0, 4))}


def reduce_to_plane(state: np.ndarray, grid: AdaptiveGrid, keep: tuple, vecs: dict) -> np.ndarray:
    """Contract all dimensions except ``keep`` against wavelet vectors.

    Parameters
    ----------
    keep : (int, int)
        The two retained dimensions.
    vecs : dict
        Dimension -> wavelet-coordinate functional for every other dimension.

    Returns
    -------
    ndarray, shape (2**cap0 * p, 2**cap1 * p)
        Wavelet coefficients of the reduced 2D function.
    """
    p, d = grid.p, grid.d
    X = np.asarray(state, dtype=float).reshape((grid.n_elements,) + (p,) * d)
    axes = list(range(d))
    for m in sorted(vecs, reverse=True):
        vb = np.asarray(vecs[m]).reshape(-1, p)[grid.cells[:, m]]
        pos = axes.index(m)
        X = np.einsum("n...a,na->n...", np.moveaxis(X, 1 + pos, -1), vb)
        axes.remove(m)
    if tuple(axes) != tuple(keep):
        raise ValueError("vecs must cover every dimension except keep")
    c0, c1 = grid.caps[keep[0]], grid.caps[keep[1]]
    out = np.zeros((2**c0 * p, 2**c1 * p))
    a = np.arange(p)
    rows = grid.cells[:, keep[0], None, None] * p + a[None, :, None]
    cols = grid.cells[:, keep[1], None, None] * p + a[None, None, :]
    np.add.at(out, (np.broadcast_to(rows, X.shape), np.broadcast_to(cols, X.shape)), X)
    return out


def plane_to_legendre(W: np.ndarray, k: int, levels: tuple) -> np.ndarray:
    """Wavelet coefficients of a 2D function to per-cell Legendre coefficients."""
    L = b1.wavelet_synthesis(k, levels[0], W)
    return b1.wavelet_synthesis(k, levels[1], L.T).T


def marginal(state: np.ndarray, grid: AdaptiveGrid, config: PhaseSpaceConfig, weight: str = "g1") -> np.ndarray:
    """Legendre coefficients of ``<f w>_{v_y, v_z}`` on the (x, v_x) cap mesh.

    For ``0x3v`` the retained plane is ``(v_x, v_y)`` and only ``v_z`` is
    reduced (with weight 1).
    """
    disc = discretization(config)
    v = disc.v
    if config.geometry == "0x3v":
        W = reduce_to_plane(state, grid, (0, 1), {2: v[2]["mom0"]})
        return plane_to_legendre(W, config.k, config.caps[:2])
    total = 0.0
    for qy, qz in WEIGHTS[weight]:
        total = total + reduce_to_plane(state, grid, (0, 1), {2: v[1][f"mom{qy}"], 3: v[2][f"mom{qz}"]})
    return plane_to_legendre(total, config.k, config.caps[:2])


def slice_plane(state: np.ndarray, grid: AdaptiveGrid, config: PhaseSpaceConfig, value: float = 0.0) -> np.ndarray:
    """Legendre coefficients of ``f(v_x, v_y, v_z = value)`` (0x3v) or
    ``f(x, v_x, v_y = value, v_z = value)`` (slab)."""
    k = config.k
    vecs = {}
    first_sliced = 2
    for m in range(first_sliced, grid.d):
        lev = config.caps[m]
        dom = config.domains[m]
        h = (dom[1] - dom[0]) / 2**lev
        cell = min(int((value - dom[0]) // h), 2**lev - 1)
        xi = 2.0 * (value - dom[0] - cell * h) / h - 1.0
        leg = np.zeros((2**lev, k + 1))
        leg[cell] = b1.legendre_values(k, np.array([xi]))[:, 0] / math.sqrt(h)
        vecs[m] = b1.wavelet_analysis(k, lev, leg.reshape(-1))
    W = reduce_to_plane(state, grid, (0, 1), vecs)
    return plane_to_legendre(W, k, config.caps[:2])


def evaluate_plane(L: np.ndarray, k: int, levels: tuple, domains: tuple, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Point values of 2D Legendre coefficients on the lattice ``a`` by ``b``."""
    p = k + 1

    def basis(y, level, dom):
        lo, hi = map(float, dom)
        nc = 2**level
        h = (hi - lo) / nc
        y = np.asarray(y, dtype=float)
        cell = np.clip(np.floor((y - lo) / h).astype(int), 0, nc - 1)
        xi = 2.0 * (y - lo - h * cell) / h - 1.0
        B = np.zeros((y.size, nc * p))
        vals = b1.legendre_values(k, xi) / math.sqrt(h)
        for i in range(p):
            B[np.arange(y.size), cell * p + i] = vals[i]
        return B

    return basis(a, levels[0], domains[0]) @ L @ basis(b, levels[1], domains[1]).T


def prolong_legendre(L: np.ndarray, k: int, levels: tuple, target: tuple) -> np.ndarray:
    """Exact embedding of 2D Legendre coefficients into a finer tensor mesh."""
    out = L
    for axis in (0, 1):
        lo, hi = levels[axis], target[axis]
        if hi < lo:
            raise ValueError("target mesh is coarser")
        if hi == lo:
            continue
        M = np.moveaxis(out, axis, 0)
        W = b1.wavelet_analysis(k, lo, M)
        pad = np.zeros((W.shape[0] * 2 ** (hi - lo),) + W.shape[1:])
        pad[: W.shape[0]] = W
        out = np.moveaxis(b1.wavelet_synthesis(k, hi, pad), 0, axis)
    return out


def l2_difference(A: np.ndarray, levels_a: tuple, B: np.ndarray, levels_b: tuple, k: int) -> float:
    """L2 norm of the difference of two 2D Legendre fields on nested meshes."""
    target = (max(levels_a[0], levels_b[0]), max(levels_a[1], levels_b[1]))
    Ap = prolong_legendre(A, k, levels_a, target)
    Bp = prolong_legendre(B, k, levels_b, target)
    return float(np.linalg.norm(Ap - Bp))


def reduced_moment_error(state4d: np.ndarray, grid: AdaptiveGrid, config: PhaseSpaceConfig,
                         reference: ChuState, ref_config: ChuConfig, weight: str = "g1") -> float:
    """L2 distance over (x, v_x) between a 4D marginal and a reduced field.

    ``weight`` selects ``<f>``, ``<f (v_y^2 + v_z^2)>`` or
    ``<f (v_y^4 + v_z^4)>`` against ``g1``, ``g2`` or ``g3``.
    """
    if weight not in WEIGHTS:
        raise ValueError(f"unknown weight {weight!r}")
    if config.geometry != "1x3v":
        raise ValueError("reduced comparison needs the slab geometry")
    same_x = np.allclose(config.x_domain, ref_config.x_domain)
    same_v = np.allclose(config.v_domain[0], ref_config.v_domain)
    if not (same_x and same_v):
        raise ValueError("domain mismatch between the run and the reference")
    if config.k != ref_config.k:
        raise ValueError("polynomial degree mismatch")
    M = marginal(state4d, grid, config, weight)
    G = getattr(reference, weight)
    return l2_difference(M, tuple(config.caps[:2]), G, tuple(ref_config.levels), config.k)


def lift_reduced(reference: ChuState, ref_config: ChuConfig, config: PhaseSpaceConfig,
                 theta_perp: float = 1.0) -> tuple[np.ndarray, AdaptiveGrid]:
    """Full-grid 4D state ``g1(x, v_x) M(v_y) M(v_z)`` at the reference levels."""
    if tuple(config.caps[:2]) != tuple(ref_config.levels):
        raise ValueError("lift needs matching (x, v_x) levels")
    k = config.k
    grid = full_index_set(config.caps, k)
    lx, lv = ref_config.levels
    W = b1.wavelet_analysis(k, lx, reference.g1)
    W = b1.wavelet_analysis(k, lv, W.T).T
    p = k + 1
    perp = []
    for m in (2, 3):
        leg = project_legendre_bp(maxwellian_1d_vec(theta_perp), k, config.caps[m], config.domains[m])
        perp.append(b1.wavelet_analysis(k, config.caps[m], leg.reshape(-1)).reshape(-1, p))
    c = grid.cells
    blockW = W.reshape(2**lx, p, 2**lv, p)[c[:, 0], :, c[:, 1], :]
    state = np.einsum("nab,nc,nd->nabcd", blockW, perp[0][c[:, 2]], perp[1][c[:, 3]])
    return state.reshape(-1), grid


def maxwellian_1d_vec(theta: float):
    c = 1.0 / math.sqrt(2.0 * math.pi * theta)
    return lambda v: c * np.exp(-np.asarray(v) ** 2 / (2.0 * theta))


def relaxation_error(state: np.ndarray, grid: AdaptiveGrid, config: PhaseSpaceConfig,
                     n: float, u: Sequence[float], theta: float) -> float:
    """L2 distance between a 0x3v state and the Maxwellian ``(n, u, theta)``.

    Uses Parseval on the full cap-level space plus the analytic norm of the
    Maxwellian for the part outside it.
    """
    full = full_index_set(config.caps, config.k)
    ref = project_initial(maxwellian_function(n, u, theta), full, config.domains)
    mine = reindex(grid, full, state)
    inside = float(np.sum((mine - ref) ** 2))
    exact_sq = n**2 * (4.0 * math.pi * theta) ** -1.5
    outside = max(exact_sq - float(ref @ ref), 0.0)
    return math.sqrt(inside + outside)


def trapezoid_l2(values: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Tensor trapezoid-rule L2 norm of lattice values."""
    return math.sqrt(float(np.trapezoid(np.trapezoid(values**2, b, axis=1), a)))
