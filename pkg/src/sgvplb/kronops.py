"""Separable operators (sums of Kronecker products) on hierarchical grids.

Each :class:`KronTerm` carries one dense 1D factor per dimension in
cap-level wavelet coordinates (``None`` stands for the identity).  The
action on an adaptive grid is the strict Galerkin restriction of the
Kronecker product: inactive coefficients are zero and inactive outputs
are dropped.

Application is sum-factorized.  The non-identity factors of a term are
applied one dimension at a time.  Between passes the state lives on an
intermediate key set that holds every key reachable from the active set
in the dimensions already processed and that can still reach an active
key through the dimensions left to process.  Since the 1D factors only
couple elements whose supports touch, the key sets stay close to the
active set in size.  Terms that share leading factors share their
passes.  A full tensor grid takes a dense mode-product path instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .hiergrid import AdaptiveGrid, element_levels


def _as_matrix(f) -> Optional[np.ndarray]:
    if f is None:
        return None
    mat = getattr(f, "matrix", f)
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("Kronecker factors must be square matrices")
    return mat


@dataclass(frozen=True)
class KronTerm:
    """``scale * (F_0 x F_1 x ... x F_{d-1})`` with ``None`` = identity."""

    scale: float
    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(_as_matrix(f) for f in self.factors))
        object.__setattr__(self, "scale", float(self.scale))


class SeparableOperator:
    """Sum of Kronecker terms sharing dimension, degree and caps.

    Parameters
    ----------
    terms : sequence of KronTerm
    caps : sequence of int
        Per-dimension cap level; factor ``m`` has size ``(k+1) 2**caps[m]``.
    k : int
        Polynomial degree.
    periodic : sequence of bool, optional
        Dimensions whose 1D operators wrap around; used only to bound the
        element coupling pattern.
    """

    def __init__(self, terms: Sequence[KronTerm], caps: Sequence[int], k: int, periodic=None):
        self.caps = tuple(int(c) for c in caps)
        self.d = len(self.caps)
        self.k = int(k)
        self.p = self.k + 1
        self.periodic = tuple(bool(v) for v in (periodic or (False,) * self.d))
        if len(self.periodic) != self.d:
            raise ValueError("periodic flags must match the dimension")
        self.terms = list(terms)
        for t in self.terms:
            if len(t.factors) != self.d:
                raise ValueError("term dimension mismatch")
            for m, f in enumerate(t.factors):
                if f is not None and f.shape[0] != self.p * 2 ** self.caps[m]:
                    raise ValueError(
                        f"factor {m} has size {f.shape[0]}, expected {self.p * 2 ** self.caps[m]}"
                    )
                _check_pattern(f, self.caps[m], self.p, self.periodic[m], m)

    def __len__(self) -> int:
        return len(self.terms)


def identity_operator(caps: Sequence[int], k: int, periodic=None) -> SeparableOperator:
    return SeparableOperator([KronTerm(1.0, (None,) * len(caps))], caps, k, periodic)


def add_scaled(opA: SeparableOperator, opB: SeparableOperator, alpha: float, beta: float) -> SeparableOperator:
    """The operator ``alpha*A + beta*B`` as a concatenated term list."""
    if opA.caps != opB.caps or opA.k != opB.k:
        raise ValueError("operators differ in caps or degree")
    terms = [KronTerm(alpha * t.scale, t.factors) for t in opA.terms]
    terms += [KronTerm(beta * t.scale, t.factors) for t in opB.terms]
    periodic = tuple(a or b for a, b in zip(opA.periodic, opB.periodic))
    return SeparableOperator(terms, opA.caps, opA.k, periodic)


# ---------------------------------------------------------------------------
# term canonicalization
# ---------------------------------------------------------------------------


class _Node:
    """Prefix-tree node: one pass along ``dim`` with ``matrix``."""

    __slots__ = ("dim", "matrix", "leaf_scale", "children")

    def __init__(self, dim, matrix):
        self.dim = dim
        self.matrix = matrix
        self.leaf_scale = 0.0
        self.children: list[_Node] = []


def _build_tree(op: SeparableOperator):
    """Merge terms into a prefix tree and return (identity scale, roots)."""
    ident = 0.0
    paths = []
    for t in op.terms:
        if t.scale == 0.0:
            continue
        dims = [m for m, f in enumerate(t.factors) if f is not None]
        if not dims:
            ident += t.scale
            continue
        paths.append((t.scale, [(m, t.factors[m]) for m in dims]))
    return ident, _merge(paths)


def _merge(paths):
    """Group paths by first factor; paths of length one are summed per dim."""
    nodes: list[_Node] = []
    last: dict[int, np.ndarray] = {}
    groups: dict[tuple, list] = {}
    order: list[tuple] = []
    for scale, path in paths:
        m, mat = path[0]
        if len(path) == 1:
            if m in last:
                last[m] = last[m] + scale * mat
            else:
                last[m] = scale * mat
            continue
        key = (m, id(mat))
        if key not in groups:
            groups[key] = [mat, []]
            order.append(key)
        groups[key][1].append((scale, path[1:]))
    for m in sorted(last):
        node = _Node(m, last[m])
        node.leaf_scale = 1.0
        nodes.append(node)
    for key in order:
        mat, rest = groups[key]
        node = _Node(key[0], mat)
        node.children = _merge(rest)
        nodes.append(node)
    return nodes


def _node_signature(node: _Node) -> tuple:
    """Structure of the subtree below a node (dims only)."""
    return (node.dim, node.leaf_scale != 0.0, tuple(_node_signature(c) for c in node.children))


# ---------------------------------------------------------------------------
# element coupling pattern
# ---------------------------------------------------------------------------


def _support_bounds(cap: int) -> tuple[np.ndarray, np.ndarray]:
    """Closed supports of all 1D elements in units of cap-level cells."""
    n = 2**cap
    e = np.arange(n)
    lev = element_levels(e)
    lo = np.zeros(n, dtype=np.int64)
    hi = np.full(n, n, dtype=np.int64)
    for i in range(1, n):
        l = int(lev[i])
        j = i - 2 ** (l - 1)
        width = n // 2 ** (l - 1)
        lo[i] = j * width
        hi[i] = (j + 1) * width
    return lo, hi


_ADJ_CACHE: dict = {}


def coupling_pattern(cap: int, periodic: bool) -> tuple[np.ndarray, np.ndarray]:
    """CSR adjacency of 1D elements whose closed supports touch."""
    key = (cap, periodic)
    if key not in _ADJ_CACHE:
        n = 2**cap
        lo, hi = _support_bounds(cap)
        touch = (lo[:, None] <= hi[None, :]) & (lo[None, :] <= hi[:, None])
        if periodic:
            at_lo = lo == 0
            at_hi = hi == n
            touch |= (at_lo[:, None] & at_hi[None, :]) | (at_hi[:, None] & at_lo[None, :])
        csr = sp.csr_matrix(touch)
        csr.sort_indices()
        _ADJ_CACHE[key] = (csr.indptr.astype(np.int64), csr.indices.astype(np.int64))
    return _ADJ_CACHE[key]


_CHECKED: dict = {}


def _check_pattern(mat: np.ndarray, cap: int, p: int, periodic: bool, dim: int) -> None:
    """Reject factors coupling elements whose supports do not touch."""
    key = (id(mat), cap, periodic)
    if _CHECKED.get(key) is mat:
        return
    n = 2**cap
    indptr, indices = coupling_pattern(cap, periodic)
    allowed = np.zeros((n, n), dtype=bool)
    rows = np.repeat(np.arange(n), np.diff(indptr))
    allowed[rows, indices] = True
    bmax = np.abs(_blocks(mat, p)).max(axis=(2, 3))
    scale = bmax.max()
    if scale > 0 and bmax[~allowed].max(initial=0.0) > 1e-12 * scale:
        raise ValueError(
            f"factor in dimension {dim} couples non-adjacent elements "
            f"(periodic={periodic}); check the periodic flags"
        )
    if len(_CHECKED) > 256:
        _CHECKED.clear()
    _CHECKED[key] = mat


# ---------------------------------------------------------------------------
# key sets and passes
# ---------------------------------------------------------------------------


class _KeySet:
    """Codes of a set of elements with fast lookup."""

    def __init__(self, codes: np.ndarray, grid: AdaptiveGrid, sorted_unique: bool = False):
        self.codes = codes
        self.grid = grid
        if sorted_unique:
            self._sorted = codes
            self._sorter = None
        else:
            self._sorter = np.argsort(codes, kind="stable")
            self._sorted = codes[self._sorter]

    def __len__(self):
        return len(self.codes)

    def find(self, q: np.ndarray) -> np.ndarray:
        if len(self._sorted) == 0:
            return np.full(len(q), -1, dtype=np.int64)
        pos = np.searchsorted(self._sorted, q)
        pos = np.minimum(pos, len(self._sorted) - 1)
        ok = self._sorted[pos] == q
        idx = pos if self._sorter is None else self._sorter[pos]
        return np.where(ok, idx, -1)


def _expand(codes: np.ndarray, grid: AdaptiveGrid, dim: int, periodic: bool) -> np.ndarray:
    """All codes reachable from ``codes`` by one coupling step along ``dim``."""
    indptr, indices = coupling_pattern(grid.caps[dim], periodic)
    stride = grid.strides[dim]
    e = (codes // stride) % grid.radix[dim]
    cnt = indptr[e + 1] - indptr[e]
    rep = np.repeat(np.arange(len(codes)), cnt)
    starts = np.repeat(indptr[e], cnt)
    offs = np.arange(len(rep)) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    nb = indices[starts + offs]
    out = codes[rep] + (nb - e[rep]) * stride
    return np.unique(out)


@dataclass
class _PassPlan:
    """Block-sparse structure for one pass along ``dim``."""

    dim: int
    n_out: int
    n_in: int
    indptr: np.ndarray
    in_idx: np.ndarray
    a_idx: np.ndarray  # output element index along dim (row block)
    b_idx: np.ndarray  # input element index along dim (column block)


def _make_pass(src: _KeySet, dst: _KeySet, grid: AdaptiveGrid, dim: int, periodic: bool) -> _PassPlan:
    indptr, indices = coupling_pattern(grid.caps[dim], periodic)
    stride = grid.strides[dim]
    codes = src.codes
    e = (codes // stride) % grid.radix[dim]
    cnt = indptr[e + 1] - indptr[e]
    rep = np.repeat(np.arange(len(codes)), cnt)
    starts = np.repeat(indptr[e], cnt)
    offs = np.arange(len(rep)) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    nb = indices[starts + offs]
    target = codes[rep] + (nb - e[rep]) * stride
    out_idx = dst.find(target)
    ok = out_idx >= 0
    out_idx, in_idx, a_idx, b_idx = out_idx[ok], rep[ok], nb[ok], e[rep][ok]
    order = np.lexsort((in_idx, out_idx))
    out_idx, in_idx, a_idx, b_idx = out_idx[order], in_idx[order], a_idx[order], b_idx[order]
    ptr = np.zeros(len(dst) + 1, dtype=np.int64)
    np.add.at(ptr, out_idx + 1, 1)
    ptr = np.cumsum(ptr)
    return _PassPlan(dim, len(dst), len(src), ptr.astype(np.int32), in_idx.astype(np.int32), a_idx, b_idx)


def _blocks(mat: np.ndarray, p: int) -> np.ndarray:
    n = mat.shape[0] // p
    return mat.reshape(n, p, n, p).transpose(0, 2, 1, 3)


def _run_pass(plan: _PassPlan, mat: np.ndarray, X: np.ndarray, p: int) -> np.ndarray:
    """Apply ``mat`` along micro axis ``plan.dim`` from ``X`` (n_in, p, ..., p)."""
    d = X.ndim - 1
    ax = plan.dim + 1
    Xm = np.moveaxis(X, ax, 1)
    rest = Xm.shape[2:]
    R = int(np.prod(rest)) if rest else 1
    Xm = np.ascontiguousarray(Xm).reshape(plan.n_in * p, R)
    data = _blocks(mat, p)[plan.a_idx, plan.b_idx]
    if len(data) == 0:
        return np.zeros((plan.n_out,) + (p,) * d)
    A = sp.bsr_matrix((data, plan.in_idx, plan.indptr), shape=(plan.n_out * p, plan.n_in * p))
    Y = (A @ Xm).reshape((plan.n_out, p) + rest)
    return np.moveaxis(Y, 1, ax)


class _Planner:
    """Key sets and pass plans for one grid, cached on the grid."""

    def __init__(self, grid: AdaptiveGrid, periodic: tuple):
        self.grid = grid
        self.periodic = periodic
        self.active = _KeySet(grid.codes, grid)
        self.cache = grid.cache.setdefault(("kron", periodic), {})

    def need(self, suffix: tuple) -> np.ndarray:
        """Codes that reach the active set through passes along ``suffix``."""
        key = ("need", suffix)
        if key not in self.cache:
            codes = np.unique(self.grid.codes)
            for m in reversed(suffix):
                codes = _expand(codes, self.grid, m, self.periodic[m])
            self.cache[key] = codes
        return self.cache[key]

    def suffixes(self, node: _Node) -> set:
        out = set()
        if node.leaf_scale != 0.0:
            out.add(())
        for c in node.children:
            for s in self.suffixes(c):
                out.add((c.dim,) + s)
        return out

    def child_set(self, parent_key, parent: _KeySet, node: _Node) -> tuple:
        sig = (parent_key, _node_signature(node))
        key = ("set", sig)
        if key not in self.cache:
            reach = _expand(np.unique(parent.codes), self.grid, node.dim, self.periodic[node.dim])
            needs = [self.need(s) for s in self.suffixes(node) if s]
            need = np.unique(np.concatenate(needs)) if needs else np.zeros(0, np.int64)
            codes = np.intersect1d(reach, need, assume_unique=True)
            self.cache[key] = _KeySet(codes, self.grid, sorted_unique=True)
        return sig, self.cache[key]

    def plan(self, src_key, src: _KeySet, dst_key, dst: _KeySet, dim: int) -> _PassPlan:
        key = ("pass", src_key, dst_key, dim)
        if key not in self.cache:
            self.cache[key] = _make_pass(src, dst, self.grid, dim, self.periodic[dim])
        return self.cache[key]


def _walk(planner: _Planner, nodes, src_key, src: _KeySet, X: np.ndarray, Y: np.ndarray, p: int):
    for node in nodes:
        if node.leaf_scale != 0.0:
            plan = planner.plan(src_key, src, "active", planner.active, node.dim)
            Y += node.leaf_scale * _run_pass(plan, node.matrix, X, p)
        if node.children:
            ckey, cset = planner.child_set(src_key, src, node)
            if len(cset) == 0:
                continue
            plan = planner.plan(src_key, src, ckey, cset, node.dim)
            Z = _run_pass(plan, node.matrix, X, p)
            _walk(planner, node.children, ckey, cset, Z, Y, p)


# ---------------------------------------------------------------------------
# dense full-grid path
# ---------------------------------------------------------------------------


def _tensor_index(grid: AdaptiveGrid, levels: tuple) -> np.ndarray:
    """Flat tensor position of every dof in grid order."""
    key = ("tensor_index", levels)
    if key not in grid.cache:
        p, d = grid.p, grid.d
        shape = tuple(p * 2**l for l in levels)
        micro = np.indices((p,) * d).reshape(d, -1).T  # (p^d, d)
        pos = grid.cells[:, None, :] * p + micro[None, :, :]  # (n, p^d, d)
        flat = np.ravel_multi_index(pos.reshape(-1, d).T, shape)
        grid.cache[key] = flat
    return grid.cache[key]


def _mode_product(T: np.ndarray, M: np.ndarray, m: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(M, T, axes=([1], [m])), 0, m)


def _walk_dense(nodes, T: np.ndarray, Y: np.ndarray, sizes):
    for node in nodes:
        n = sizes[node.dim]
        M = node.matrix[:n, :n]
        Z = _mode_product(T, M, node.dim)
        if node.leaf_scale != 0.0:
            Y += node.leaf_scale * Z
        if node.children:
            _walk_dense(node.children, Z, Y, sizes)


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def apply(op: SeparableOperator, grid: AdaptiveGrid, x: np.ndarray, dense_ok: bool = True) -> np.ndarray:
    """Galerkin action of ``op`` on the state ``x`` aligned with ``grid``.

    Parameters
    ----------
    op : SeparableOperator
    grid : AdaptiveGrid
    x : ndarray
        Flat state of length ``grid.ndof``.
    dense_ok : bool
        Allow the dense mode-product path on full tensor grids.

    Returns
    -------
    ndarray
        Flat result aligned with ``grid``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (grid.ndof,):
        raise ValueError(f"state has shape {x.shape}, grid needs ({grid.ndof},)")
    if grid.caps != op.caps or grid.k != op.k:
        raise ValueError("grid and operator differ in caps or degree")
    ident, roots = _build_tree(op)
    full = grid.full_levels() if dense_ok else None
    if full is not None:
        p = grid.p
        sizes = [p * 2**l for l in full]
        idx = _tensor_index(grid, full)
        T = np.zeros(int(np.prod(sizes)))
        T[idx] = x
        T = T.reshape(sizes)
        Y = ident * T
        _walk_dense(roots, T, Y, sizes)
        return Y.reshape(-1)[idx]
    p, d = grid.p, grid.d
    X = x.reshape((grid.n_elements,) + (p,) * d)
    Y = ident * X
    if roots:
        planner = _Planner(grid, op.periodic)
        _walk(planner, roots, "active", planner.active, X, Y, p)
    return Y.reshape(-1)


def compose_block_diag(op: SeparableOperator, grid: AdaptiveGrid) -> np.ndarray:
    """Diagonal element blocks of the Galerkin matrix, shape ``(n, b, b)``."""
    p, d, n = grid.p, grid.d, grid.n_elements
    b = p**d
    out = np.zeros((n, b, b))
    eye = np.broadcast_to(np.eye(p), (n, p, p))
    for t in op.terms:
        if t.scale == 0.0:
            continue
        acc = np.ones((n, 1, 1))
        for m, f in enumerate(t.factors):
            if f is None:
                blk = eye
            else:
                e = grid.cells[:, m]
                blk = _blocks(f, p)[e, e]
            acc = np.einsum("nab,ncd->nacbd", acc, blk).reshape(n, acc.shape[1] * p, acc.shape[2] * p)
        out += t.scale * acc
    return out
