"""One-dimensional bases and DG operator matrices.

The module builds Alpert multiwavelets of degree ``k <= 3``, the orthogonal
change of coordinates between per-cell Legendre coefficients and
hierarchical wavelet coefficients, and the 1D matrices from which the
separable phase-space operators are assembled.

Conventions
-----------
A matrix ``M`` representing a bilinear form ``a(w, g)`` stores
``M[i, j] = a(phi_j, phi_i)`` so that ``M @ w`` gives the coefficients of
the Riesz representative of ``a(w, .)``.  The basis is orthonormal, so the
mass matrix is the identity.

Face jumps are ``[[g]] = g^- - g^+`` where ``-`` is the trace from the
left cell and ``+`` from the right cell.  On a periodic domain the wrap
face at the domain end takes its left trace at ``b`` and its right trace
at ``a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np
import numpy.polynomial.legendre as npleg
import numpy.polynomial.polynomial as nppoly

MAX_DEGREE = 3

OPERATOR_KINDS = (
    "mass",
    "upwind-advection",
    "central-divergence",
    "penalty",
    "ldg-gradient",
    "coordinate-multiply",
    "coefficient-multiply",
    "moment-functional",
)

Coefficient = Union[None, float, np.ndarray, Callable[[np.ndarray], np.ndarray]]


# ---------------------------------------------------------------------------
# quadrature and Legendre helpers
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def gauss_rule(npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on (-1, 1)."""
    x, w = npleg.leggauss(npts)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def default_quadrature_points(k: int) -> int:
    """Number of Gauss points per cell, exact for polynomials of degree 2k+5."""
    return k + 3


def legendre_values(k: int, xi: np.ndarray) -> np.ndarray:
    """Unit-interval-normalized Legendre values ``sqrt(2a+1) P_a(xi)``.

    Returns an array of shape ``(k+1, len(xi))``.  Divide by ``sqrt(h)`` to
    obtain the L2-orthonormal basis on a cell of width ``h``.
    """
    xi = np.asarray(xi, dtype=float)
    out = np.empty((k + 1,) + xi.shape)
    for a in range(k + 1):
        c = np.zeros(a + 1)
        c[a] = 1.0
        out[a] = math.sqrt(2 * a + 1) * npleg.legval(xi, c)
    return out


def legendre_derivatives(k: int, xi: np.ndarray) -> np.ndarray:
    """Derivatives with respect to ``xi`` of :func:`legendre_values`."""
    xi = np.asarray(xi, dtype=float)
    out = np.zeros((k + 1,) + xi.shape)
    for a in range(1, k + 1):
        c = np.zeros(a + 1)
        c[a] = 1.0
        out[a] = math.sqrt(2 * a + 1) * npleg.legval(xi, npleg.legder(c))
    return out


# ---------------------------------------------------------------------------
# Alpert multiwavelets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WaveletFamily1D:
    """Alpert multiwavelets of degree ``k`` on the reference interval (-1, 1).

    Attributes
    ----------
    k : int
        Polynomial degree.
    left, right : ndarray, shape (k+1, k+1)
        Monomial coefficients (ascending powers of ``y``) of each mother
        wavelet on (-1, 0) and (0, 1).  Row ``i`` is the wavelet with
        one-based index ``i+1``.
    scaling : ndarray, shape (k+1, k+1)
        Monomial coefficients of the normalized shifted Legendre
        polynomials on (0, 1).
    scaling_filter, wavelet_filter : ndarray, shape (k+1, 2(k+1))
        Two-scale filters mapping the orthonormal Legendre coefficients on
        the two children of a cell to the parent Legendre coefficients and
        to the wavelet coefficients of that cell.
    """

    k: int
    left: np.ndarray
    right: np.ndarray
    scaling: np.ndarray
    scaling_filter: np.ndarray
    wavelet_filter: np.ndarray

    @property
    def p(self) -> int:
        return self.k + 1

    def mother(self, i: int, y: np.ndarray) -> np.ndarray:
        """Evaluate the zero-based mother wavelet ``i`` on (-1, 1)."""
        y = np.asarray(y, dtype=float)
        out = np.where(
            y < 0.0,
            nppoly.polyval(y, self.left[i]),
            nppoly.polyval(y, self.right[i]),
        )
        return np.where(np.abs(y) <= 1.0, out, 0.0)


def _piecewise_legendre(k: int, y: np.ndarray) -> np.ndarray:
    """Orthonormal piecewise Legendre basis on (-1,0) | (0,1), shape (2p, n)."""
    p = k + 1
    out = np.zeros((2 * p,) + y.shape)
    left = y < 0.0
    # each half has width 1; map to xi in (-1, 1)
    vl = legendre_values(k, 2.0 * y + 1.0)
    vr = legendre_values(k, 2.0 * y - 1.0)
    out[:p] = np.where(left, vl, 0.0)
    out[p:] = np.where(~left, vr, 0.0)
    return out


@lru_cache(maxsize=None)
def build_alpert_basis(k: int) -> WaveletFamily1D:
    """Construct the Alpert multiwavelets of degree ``k``.

    The wavelets span the orthogonal complement of the degree-``k``
    polynomials inside the piecewise degree-``k`` functions on (-1,0)|(0,1).
    Within that complement an orthogonal change of basis enforces the
    extra vanishing moments ``y^{k+1}, ..., y^{2k}`` sequentially.  Signs are
    fixed so that the ``y^k`` coefficient on (0, 1) is positive, which
    reproduces the classical ``k = 2`` formulas.

    Parameters
    ----------
    k : int
        Degree, ``0 <= k <= 3``.

    Returns
    -------
    WaveletFamily1D
    """
    if not isinstance(k, (int, np.integer)) or k < 0 or k > MAX_DEGREE:
        raise ValueError(f"unsupported polynomial degree k={k!r}; need 0 <= k <= {MAX_DEGREE}")
    k = int(k)
    p = k + 1
    xq, wq = gauss_rule(2 * k + 4)
    # quadrature on both halves
    yl = 0.5 * (xq - 1.0)
    yr = 0.5 * (xq + 1.0)
    y = np.concatenate([yl, yr])
    wy = np.concatenate([0.5 * wq, 0.5 * wq])
    basis = _piecewise_legendre(k, y)  # (2p, n)

    # global polynomials of degree <= k, orthonormal on (-1, 1)
    glob = legendre_values(k, y) / math.sqrt(2.0)
    coarse = (basis * wy) @ glob.T  # (2p, p) coordinates of polynomials
    q_full, _ = np.linalg.qr(coarse, mode="complete")
    comp = q_full[:, p:]  # orthonormal complement, (2p, p)
    # clean the complement against the coarse space once more
    comp -= coarse @ (coarse.T @ comp)
    comp, _ = np.linalg.qr(comp)

    if k > 0:
        comp = _sequential_moments(comp, y, wy, basis, k)

    # convert to monomial coefficients on each half via interpolation
    npts = p
    left = np.zeros((p, p))
    right = np.zeros((p, p))
    tl = -0.5 + 0.45 * np.cos(np.pi * (np.arange(npts) + 0.5) / npts)
    tr = -tl
    bl = _piecewise_legendre(k, tl)
    br = _piecewise_legendre(k, tr)
    for i in range(p):
        vals_l = comp[:, i] @ bl
        vals_r = comp[:, i] @ br
        left[i] = nppoly.polyfit(tl, vals_l, k) if k > 0 else [vals_l[0]]
        right[i] = nppoly.polyfit(tr, vals_r, k) if k > 0 else [vals_r[0]]
        lead = right[i][::-1]
        nz = np.flatnonzero(np.abs(lead) > 1e-10)
        if lead[nz[0]] < 0.0:
            left[i] = -left[i]
            right[i] = -right[i]

    scaling = np.zeros((p, p))
    for a in range(p):
        c = np.zeros(a + 1)
        c[a] = 1.0
        # sqrt(2a+1) P_a(2y - 1) in monomials of y
        mono = npleg.leg2poly(c)
        scaling[a, : a + 1] = math.sqrt(2 * a + 1) * _compose_affine(mono, -1.0, 2.0)
    hfilt = np.ascontiguousarray(coarse.T)
    gfilt = np.ascontiguousarray(comp.T)
    # the sign flips above must be mirrored in the filter rows
    for i in range(p):
        vals = gfilt[i] @ br
        if abs(nppoly.polyval(tr, right[i]) - vals).max() > 1e-8:
            gfilt[i] = -gfilt[i]
    for arr in (left, right, scaling, hfilt, gfilt):
        arr.flags.writeable = False
    return WaveletFamily1D(
        k=k, left=left, right=right, scaling=scaling,
        scaling_filter=hfilt, wavelet_filter=gfilt,
    )


def _compose_affine(mono: np.ndarray, c0: float, c1: float) -> np.ndarray:
    """Monomial coefficients of ``q(c0 + c1*y)`` given those of ``q``."""
    out = np.zeros(len(mono))
    term = np.array([1.0])
    lin = np.array([c0, c1])
    for a, ca in enumerate(mono):
        if a > 0:
            term = nppoly.polymul(term, lin)
        out[: len(term)] += ca * term
    return out


def _sequential_moments(comp, y, wy, basis, k):
    """Rotate an orthonormal complement basis to get sequential moments.

    Column ``i`` (zero-based) of the result is additionally orthogonal to
    ``y^{k+1}, ..., y^{k+i}``; each column is then unique up to sign.
    """
    p = k + 1
    powers = np.array([y ** (k + 1 + j) for j in range(k)])
    mom = (powers * wy) @ (basis.T @ comp)  # (k, p)
    cols: list[np.ndarray] = []
    for i in range(p - 1, -1, -1):
        rows = [mom[:i]] if i > 0 else []
        if cols:
            rows.append(np.array(cols))
        cmat = np.vstack(rows)
        _, s, vt = np.linalg.svd(cmat)
        vec = vt[-1]
        cols.append(vec / np.linalg.norm(vec))
    return comp @ np.array(cols[::-1]).T


def eval_wavelet(
    family: WaveletFamily1D, level: int, j: int, i: int, y: np.ndarray
) -> np.ndarray:
    """Evaluate the hierarchical basis function ``g_{level,j}^i`` on (0, 1).

    Parameters
    ----------
    family : WaveletFamily1D
    level : int
        Level ``>= 0``.  Level 0 holds the normalized Legendre polynomials.
    j : int
        Position, ``0 <= j < max(1, 2**(level-1))``.
    i : int
        One-based polynomial index, ``1 <= i <= k+1``.
    y : array_like
        Points in (0, 1).

    Returns
    -------
    ndarray
        Values, zero outside the support ``(j, j+1) * 2**(1-level)``.
    """
    p = family.p
    if level < 0:
        raise IndexError(f"negative level {level}")
    npos = 1 if level == 0 else 2 ** (level - 1)
    if not 0 <= j < npos:
        raise IndexError(f"position {j} out of range for level {level}")
    if not 1 <= i <= p:
        raise IndexError(f"polynomial index {i} out of range 1..{p}")
    y = np.asarray(y, dtype=float)
    if level == 0:
        inside = (y >= 0.0) & (y <= 1.0)
        return np.where(inside, nppoly.polyval(y, family.scaling[i - 1]), 0.0)
    s = 2.0 ** (level - 1)
    t = s * y - j
    inside = (t >= 0.0) & (t < 1.0)
    val = math.sqrt(s) * math.sqrt(2.0) * family.mother(i - 1, 2.0 * t - 1.0)
    return np.where(inside, val, 0.0)


def level_block_count(level: int) -> int:
    """Number of wavelet blocks (cells) introduced at ``level``."""
    return 1 if level == 0 else 2 ** (level - 1)


# ---------------------------------------------------------------------------
# Legendre <-> wavelet transform
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BasisTransform1D:
    """Orthogonal map from per-cell Legendre to hierarchical coefficients.

    Legendre coefficients are ordered cell-major (cell ``c``, mode ``a``).
    Wavelet coefficients are ordered by element index ``e`` (``e = 0`` at
    level 0, ``e = 2**(l-1) + j`` otherwise) then by polynomial index.
    """

    k: int
    level: int
    forward: np.ndarray

    @property
    def inverse(self) -> np.ndarray:
        return self.forward.T


def wavelet_analysis(k: int, level: int, coeffs: np.ndarray) -> np.ndarray:
    """Apply the forward transform along axis 0 of ``coeffs``."""
    fam = build_alpert_basis(k)
    p = fam.p
    coeffs = np.asarray(coeffs, dtype=float)
    tail = coeffs.shape[1:]
    c = coeffs.reshape((2**level, p, -1))
    details = []
    for lev in range(level, 0, -1):
        pairs = c.reshape(2 ** (lev - 1), 2 * p, -1)
        details.append(np.einsum("ab,jbm->jam", fam.wavelet_filter, pairs))
        c = np.einsum("ab,jbm->jam", fam.scaling_filter, pairs)
    parts = [c] + details[::-1]
    out = np.concatenate([q.reshape(-1, q.shape[-1]) for q in parts], axis=0)
    return out.reshape((p * 2**level,) + tail)


def wavelet_synthesis(k: int, level: int, coeffs: np.ndarray) -> np.ndarray:
    """Inverse of :func:`wavelet_analysis` along axis 0."""
    fam = build_alpert_basis(k)
    p = fam.p
    coeffs = np.asarray(coeffs, dtype=float)
    tail = coeffs.shape[1:]
    flat = coeffs.reshape((p * 2**level, -1))
    c = flat[:p].reshape(1, p, -1)
    filt = np.vstack([fam.scaling_filter, fam.wavelet_filter])  # (2p, 2p)
    for lev in range(1, level + 1):
        nb = 2 ** (lev - 1)
        d = flat[p * nb : 2 * p * nb].reshape(nb, p, -1)
        both = np.concatenate([c, d], axis=1)
        c = np.einsum("ba,jbm->jam", filt, both).reshape(2 * nb, p, -1)
    return c.reshape((p * 2**level,) + tail)


@lru_cache(maxsize=None)
def build_transform(k: int, level: int) -> BasisTransform1D:
    """Return the orthogonal Legendre-to-wavelet transform at ``level``."""
    if level < 0:
        raise ValueError("level must be nonnegative")
    n = (k + 1) * 2**level
    fwd = wavelet_analysis(k, level, np.eye(n))
    fwd.flags.writeable = False
    return BasisTransform1D(k=k, level=level, forward=fwd)


# ---------------------------------------------------------------------------
# 1D operator assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OperatorMatrix1D:
    """A 1D operator in hierarchical wavelet coordinates.

    ``matrix`` has shape ``(n, n)`` with ``n = (k+1) 2**level`` for
    bilinear forms, or ``(n,)`` for moment functionals.  ``legendre``
    holds the same operator in per-cell Legendre coordinates.
    """

    kind: str
    k: int
    level: int
    domain: tuple[float, float]
    boundary: str
    matrix: np.ndarray
    legendre: np.ndarray

    @property
    def size(self) -> int:
        return self.matrix.shape[-1]


class _CellQuadrature:
    """Per-cell quadrature data on a uniform mesh."""

    def __init__(self, k: int, level: int, domain, npts: int, breakpoints=()):
        a, b = map(float, domain)
        ncell = 2**level
        h = (b - a) / ncell
        xq, wq = gauss_rule(npts)
        left = a + h * np.arange(ncell)
        # sub-interval edges per cell (reference coordinates in [-1, 1])
        subs = [-1.0, 1.0]
        bps = [float(bp) for bp in breakpoints]
        if bps:
            rel = set()
            for bp in bps:
                for c in range(ncell):
                    r = 2.0 * (bp - left[c]) / h - 1.0
                    if -1.0 < r < 1.0:
                        rel.add(round(r, 14))
            subs = sorted(set(subs) | rel)
        xi_list, w_list = [], []
        for lo, hi in zip(subs[:-1], subs[1:]):
            xi_list.append(0.5 * (hi - lo) * xq + 0.5 * (hi + lo))
            w_list.append(0.5 * (hi - lo) * wq)
        xi = np.concatenate(xi_list)
        wxi = np.concatenate(w_list)
        self.ncell, self.h, self.a, self.b = ncell, h, a, b
        self.xi = xi
        self.points = left[:, None] + 0.5 * h * (xi[None, :] + 1.0)
        self.weights = np.broadcast_to(0.5 * h * wxi, self.points.shape)
        self.phi = legendre_values(k, xi) / math.sqrt(h)  # (p, nq)
        self.dphi = legendre_derivatives(k, xi) * (2.0 / h) / math.sqrt(h)
        self.phi_left = legendre_values(k, np.array([-1.0]))[:, 0] / math.sqrt(h)
        self.phi_right = legendre_values(k, np.array([1.0]))[:, 0] / math.sqrt(h)
        self.nodes = a + h * np.arange(ncell + 1)


def _coefficient_values(coef: Coefficient, quad: _CellQuadrature, k_coef_max: int):
    """Coefficient values at quadrature points plus left/right cell traces."""
    ncell = quad.ncell
    if coef is None:
        coef = 1.0
    if callable(coef):
        vals = np.asarray(coef(quad.points), dtype=float)
        tl = np.asarray(coef(quad.nodes[:-1]), dtype=float)
        tr = np.asarray(coef(quad.nodes[1:]), dtype=float)
        return vals, tl, tr
    arr = np.asarray(coef, dtype=float)
    if arr.ndim == 0:
        full = np.full(ncell, float(arr))
        return np.broadcast_to(float(arr), quad.points.shape), full, full
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.shape[0] != ncell:
        raise ValueError(f"coefficient has {arr.shape[0]} cells, mesh has {ncell}")
    deg = arr.shape[1] - 1
    if deg > k_coef_max:
        raise ValueError(
            f"coefficient degree {deg} exceeds quadrature exactness (max {k_coef_max})"
        )
    h = quad.h
    basis = legendre_values(deg, quad.xi) / math.sqrt(h)
    vals = arr @ basis
    tl = arr @ (legendre_values(deg, np.array([-1.0]))[:, 0] / math.sqrt(h))
    tr = arr @ (legendre_values(deg, np.array([1.0]))[:, 0] / math.sqrt(h))
    return vals, tl, tr


def _block_diag(blocks: np.ndarray) -> np.ndarray:
    ncell, p, _ = blocks.shape
    out = np.zeros((ncell * p, ncell * p))
    for c in range(ncell):
        out[c * p : (c + 1) * p, c * p : (c + 1) * p] = blocks[c]
    return out


def _faces(ncell: int, periodic: bool):
    """(left cell, right cell) pairs for the faces carrying flux terms."""
    left = list(range(ncell - 1))
    right = list(range(1, ncell))
    if periodic:
        left.append(ncell - 1)
        right.append(0)
    return left, right


def assemble_legendre_operator(
    kind: str,
    k: int,
    level: int,
    domain: tuple[float, float],
    boundary: str = "zero-flux",
    coefficient: Coefficient = None,
    *,
    power: int = 0,
    breakpoints: tuple[float, ...] = (),
    npts: Optional[int] = None,
) -> np.ndarray:
    """Assemble a 1D operator in per-cell Legendre coordinates.

    See :func:`assemble_1d_operator` for the meaning of the arguments.
    """
    if kind not in OPERATOR_KINDS:
        raise ValueError(f"unknown operator kind {kind!r}")
    if boundary not in ("periodic", "zero-flux", "zero-trace"):
        raise ValueError(f"unknown boundary {boundary!r}")
    if boundary == "zero-trace" and kind != "ldg-gradient":
        raise ValueError("zero-trace boundary applies to ldg-gradient only")
    if k < 0 or k > MAX_DEGREE:
        raise ValueError(f"unsupported polynomial degree k={k}")
    p = k + 1
    npts = default_quadrature_points(k) if npts is None else npts
    exact = 2 * npts - 1
    quad = _CellQuadrature(k, level, domain, npts, breakpoints)
    ncell = quad.ncell
    n = ncell * p
    periodic = boundary == "periodic"

    if kind == "mass":
        return np.eye(n)

    if kind == "moment-functional":
        if power not in (0, 1, 2, 3, 4):
            raise ValueError("moment power must be in 0..4")
        q = quad.points**power * quad.weights  # (ncell, nq)
        return (q @ quad.phi.T).reshape(n)

    if kind in ("coordinate-multiply", "coefficient-multiply"):
        coef = (lambda y: y) if kind == "coordinate-multiply" else coefficient
        vals, _, _ = _coefficient_values(coef, quad, exact - 2 * k)
        wv = quad.weights * vals
        blocks = np.einsum("cq,iq,jq->cij", wv, quad.phi, quad.phi)
        return _block_diag(blocks)

    fl, fr = _faces(ncell, periodic)
    fl = np.asarray(fl)
    fr = np.asarray(fr)
    out = np.zeros((n, n))
    phr, phl = quad.phi_right, quad.phi_left  # traces at right/left cell ends

    if kind == "ldg-gradient":
        # (d w, tau) - sum [[w]] {{tau}}
        blocks = np.einsum("cq,iq,jq->cij", quad.weights, quad.phi, quad.dphi)
        out += _block_diag(blocks)
        for cl, cr in zip(fl, fr):
            il = slice(cl * p, (cl + 1) * p)
            ir = slice(cr * p, (cr + 1) * p)
            # jump of trial: phi^- - phi^+ ; average of test: half each
            out[il, il] -= 0.5 * np.outer(phr, phr)
            out[il, ir] -= -0.5 * np.outer(phr, phl)
            out[ir, il] -= 0.5 * np.outer(phl, phr)
            out[ir, ir] -= -0.5 * np.outer(phl, phl)
        if boundary == "zero-trace":
            # exterior trace zero: the flux value on the boundary face is 0
            last = slice((ncell - 1) * p, n)
            out[last, last] -= np.outer(phr, phr)
            out[:p, :p] += np.outer(phl, phl)
        return out

    vals, tl, tr = _coefficient_values(coefficient, quad, exact - 2 * k + 1)

    if kind in ("central-divergence", "upwind-advection"):
        # -(c w, g') + sum {{c w}} [[g]]
        wv = quad.weights * vals
        blocks = -np.einsum("cq,iq,jq->cij", wv, quad.dphi, quad.phi)
        out += _block_diag(blocks)
        for cl, cr in zip(fl, fr):
            il = slice(cl * p, (cl + 1) * p)
            ir = slice(cr * p, (cr + 1) * p)
            cm, cp = tr[cl], tl[cr]
            # test jump [[g]] = g^- - g^+ ; trial average 0.5(c^- w^- + c^+ w^+)
            out[il, il] += 0.5 * cm * np.outer(phr, phr)
            out[il, ir] += 0.5 * cp * np.outer(phr, phl)
            out[ir, il] -= 0.5 * cm * np.outer(phl, phr)
            out[ir, ir] -= 0.5 * cp * np.outer(phl, phl)
    if kind in ("penalty", "upwind-advection"):
        for cl, cr in zip(fl, fr):
            il = slice(cl * p, (cl + 1) * p)
            ir = slice(cr * p, (cr + 1) * p)
            alpha = 0.5 * (abs(tr[cl]) + abs(tl[cr]))
            s = 0.5 * alpha
            out[il, il] += s * np.outer(phr, phr)
            out[il, ir] -= s * np.outer(phr, phl)
            out[ir, il] -= s * np.outer(phl, phr)
            out[ir, ir] += s * np.outer(phl, phl)
    if kind == "upwind-advection":
        # returned as the evolution operator: d/dt w = L w
        out = -out
    return out


def assemble_1d_operator(
    kind: str,
    k: int,
    level: int,
    domain: tuple[float, float],
    boundary: str = "zero-flux",
    coefficient: Coefficient = None,
    *,
    power: int = 0,
    breakpoints: tuple[float, ...] = (),
    npts: Optional[int] = None,
) -> OperatorMatrix1D:
    """Assemble a 1D DG operator in hierarchical wavelet coordinates.

    Parameters
    ----------
    kind : str
        One of

        ``mass``
            identity;
        ``central-divergence``
            ``-(c w, g') + sum_faces {{c w}} [[g]]``;
        ``penalty``
            ``sum_faces (|c|/2) [[w]] [[g]]`` with ``|c|`` averaged over
            the two face traces;
        ``upwind-advection``
            the evolution operator ``-(central-divergence + penalty)``
            of ``w_t + (c w)' = 0``;
        ``ldg-gradient``
            ``(w', tau) - sum_faces [[w]] {{tau}}``;
        ``coordinate-multiply``
            ``(y w, g)``;
        ``coefficient-multiply``
            ``(c w, g)``;
        ``moment-functional``
            the row vector ``int y**power phi_j``.
    k, level : int
        Degree and mesh level (``2**level`` cells).
    domain : (float, float)
        Interval ``(a, b)``.
    boundary : {"periodic", "zero-flux", "zero-trace"}
        Zero-flux drops all boundary face terms.  Periodic adds the wrap
        face with left trace at ``b`` and right trace at ``a``.
        Zero-trace (gradient only) uses a zero flux value ``w_hat = 0`` on
        the two boundary faces, so that ``(sigma, 1) = 0`` exactly.
    coefficient : float, callable or ndarray, optional
        Wind or multiplier.  An array of shape ``(2**level, q)`` holds
        per-cell orthonormal Legendre coefficients.
    power : int
        Monomial power for moment functionals.
    breakpoints : tuple of float
        Points where a callable coefficient has kinks; cells containing
        one are integrated piecewise.

    Returns
    -------
    OperatorMatrix1D
    """
    leg = assemble_legendre_operator(
        kind, k, level, domain, boundary, coefficient,
        power=power, breakpoints=breakpoints, npts=npts,
    )
    fwd = build_transform(k, level).forward
    if kind == "mass":
        wav = np.eye(len(leg))
    elif leg.ndim == 1:
        wav = fwd @ leg
    else:
        wav = fwd @ leg @ fwd.T
    wav.flags.writeable = False
    leg.flags.writeable = False
    return OperatorMatrix1D(
        kind=kind, k=k, level=level, domain=(float(domain[0]), float(domain[1])),
        boundary=boundary, matrix=wav, legendre=leg,
    )


def boundary_traces(k: int, level: int, domain) -> tuple[np.ndarray, np.ndarray]:
    """Wavelet-coordinate functionals evaluating the trace at ``a`` and ``b``."""
    p = k + 1
    a, b = map(float, domain)
    ncell = 2**level
    h = (b - a) / ncell
    n = ncell * p
    ta = np.zeros(n)
    tb = np.zeros(n)
    ta[:p] = legendre_values(k, np.array([-1.0]))[:, 0] / math.sqrt(h)
    tb[n - p :] = legendre_values(k, np.array([1.0]))[:, 0] / math.sqrt(h)
    fwd = build_transform(k, level).forward
    return fwd @ ta, fwd @ tb


def project_legendre(
    func: Callable[[np.ndarray], np.ndarray],
    k: int,
    level: int,
    domain,
    npts: Optional[int] = None,
) -> np.ndarray:
    """L2 projection of ``func`` onto per-cell Legendre coefficients.

    Returns an array of shape ``(2**level, k+1)``.
    """
    npts = default_quadrature_points(k) if npts is None else npts
    quad = _CellQuadrature(k, level, domain, npts)
    vals = np.asarray(func(quad.points), dtype=float)
    return (quad.weights * vals) @ quad.phi.T


def evaluate_legendre(coeffs: np.ndarray, k: int, level: int, domain, y: np.ndarray) -> np.ndarray:
    """Evaluate per-cell Legendre coefficients ``(2**level, k+1)`` at ``y``."""
    a, b = map(float, domain)
    ncell = 2**level
    h = (b - a) / ncell
    y = np.asarray(y, dtype=float)
    cell = np.clip(np.floor((y - a) / h).astype(int), 0, ncell - 1)
    xi = 2.0 * (y - a - h * cell) / h - 1.0
    vals = legendre_values(k, xi) / math.sqrt(h)  # (p,) + y.shape
    c = np.asarray(coeffs)[cell]  # y.shape + (p,)
    return np.einsum("...a,a...->...", c, vals)
