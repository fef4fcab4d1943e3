"""Hierarchical element bookkeeping for full, sparse, mixed and adaptive grids.

A 1D hierarchical element at level ``l`` and position ``j`` is packed into
a single integer ``e = 0`` for ``l = 0`` and ``e = 2**(l-1) + j`` otherwise.
This is also the block index of the element in cap-level wavelet
coordinates, so coarser levels occupy the leading sub-block.  In this
encoding the children of ``e >= 1`` are ``2e`` and ``2e+1`` and its parent
is ``e // 2``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np


class ElementKey(NamedTuple):
    """Level and position multi-indices of a hierarchical element."""

    levels: tuple[int, ...]
    positions: tuple[int, ...]


def pack(level: int, position: int) -> int:
    """Pack a 1D (level, position) pair into the element index."""
    if level < 0:
        raise ValueError("negative level")
    if level == 0:
        if position != 0:
            raise ValueError("level 0 has a single position")
        return 0
    if not 0 <= position < 2 ** (level - 1):
        raise ValueError(f"position {position} out of range at level {level}")
    return 2 ** (level - 1) + position


def unpack(e: int) -> tuple[int, int]:
    """Inverse of :func:`pack`."""
    e = int(e)
    if e == 0:
        return 0, 0
    level = e.bit_length()
    return level, e - 2 ** (level - 1)


def element_levels(e: np.ndarray) -> np.ndarray:
    """Vectorized level of packed 1D indices."""
    e = np.asarray(e, dtype=np.int64)
    out = np.zeros(e.shape, dtype=np.int64)
    nz = e > 0
    out[nz] = np.floor(np.log2(e[nz])).astype(np.int64) + 1
    return out


def key_to_cells(key: ElementKey) -> tuple[int, ...]:
    return tuple(pack(l, j) for l, j in zip(key.levels, key.positions))


def cells_to_key(cells: Sequence[int]) -> ElementKey:
    lj = [unpack(e) for e in cells]
    return ElementKey(tuple(l for l, _ in lj), tuple(j for _, j in lj))


@dataclass(frozen=True)
class CoefficientBlockNorms:
    """Per-element l2 and l-infinity norms of the coefficient blocks."""

    l2: np.ndarray
    linf: np.ndarray


class AdaptiveGrid:
    """Ordered set of active hierarchical elements.

    Parameters
    ----------
    cells : array_like, shape (n, d)
        Packed 1D element indices per dimension.  Duplicates are dropped,
        keeping the first occurrence.
    caps : sequence of int
        Per-dimension maximum level.
    k : int
        Polynomial degree.

    Notes
    -----
    Instances are immutable; refinement and coarsening return new grids.
    Element ``i`` owns the coefficient block ``[i*(k+1)**d, (i+1)*(k+1)**d)``.
    """

    def __init__(self, cells, caps: Sequence[int], k: int):
        caps = tuple(int(c) for c in caps)
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, len(caps))
        if np.any(cells < 0):
            raise ValueError("negative element index")
        lev = element_levels(cells)
        if np.any(lev > np.asarray(caps)[None, :]):
            raise ValueError("element exceeds level caps")
        self.caps = caps
        self.k = int(k)
        self.d = len(caps)
        self.p = self.k + 1
        self.block = self.p**self.d
        self.radix = np.array([2**c for c in caps], dtype=np.int64)
        strides = np.ones(self.d, dtype=np.int64)
        for m in range(self.d - 2, -1, -1):
            strides[m] = strides[m + 1] * self.radix[m + 1]
        self.strides = strides
        codes = cells @ strides
        _, first = np.unique(codes, return_index=True)
        keep = np.sort(first)
        self.cells = cells[keep].copy()
        self.cells.flags.writeable = False
        self.codes = codes[keep]
        self.codes.flags.writeable = False
        self._sorter = np.argsort(self.codes, kind="stable")
        self._sorted = self.codes[self._sorter]
        self.cache: dict = {}

    # -- basic queries ----------------------------------------------------
    @property
    def n_elements(self) -> int:
        return len(self.cells)

    def __len__(self) -> int:
        return len(self.cells)

    @property
    def ndof(self) -> int:
        return self.n_elements * self.block

    @property
    def levels(self) -> np.ndarray:
        return element_levels(self.cells)

    def keys(self) -> list[ElementKey]:
        return [cells_to_key(c) for c in self.cells]

    def encode(self, cells: np.ndarray) -> np.ndarray:
        return np.asarray(cells, dtype=np.int64) @ self.strides

    def decode(self, codes: np.ndarray) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64)
        return (codes[:, None] // self.strides[None, :]) % self.radix[None, :]

    def lookup(self, codes: np.ndarray) -> np.ndarray:
        """Grid positions of ``codes``, ``-1`` where absent."""
        codes = np.asarray(codes, dtype=np.int64)
        pos = np.searchsorted(self._sorted, codes)
        pos = np.minimum(pos, len(self._sorted) - 1)
        found = self._sorted[pos] == codes
        return np.where(found, self._sorter[pos], -1)

    def index_of(self, key: ElementKey) -> int:
        """Grid position of ``key``; raises ``KeyError`` if inactive."""
        idx = int(self.lookup(self.encode(np.array([key_to_cells(key)])))[0])
        if idx < 0:
            raise KeyError(key)
        return idx

    def element_offset(self, key: ElementKey) -> int:
        """Offset of the coefficient block of ``key`` in a state vector."""
        return self.index_of(key) * self.block

    def __contains__(self, key: ElementKey) -> bool:
        try:
            self.index_of(key)
        except (KeyError, ValueError):
            return False
        return True

    def full_levels(self):
        """Per-dimension levels if the grid is a full tensor grid, else None."""
        if "full_levels" not in self.cache:
            lev = self.levels.max(axis=0) if self.n_elements else np.zeros(self.d, int)
            size = int(np.prod([2 ** int(l) for l in lev]))
            self.cache["full_levels"] = tuple(int(l) for l in lev) if size == self.n_elements else None
        return self.cache["full_levels"]

    def with_cells(self, cells) -> "AdaptiveGrid":
        return AdaptiveGrid(cells, self.caps, self.k)


# ---------------------------------------------------------------------------
# index-set generators
# ---------------------------------------------------------------------------


def _cells_for_levels(level_tuples: Iterable[Sequence[int]], d: int) -> np.ndarray:
    blocks = []
    for lev in level_tuples:
        ranges = [np.arange(2 ** (l - 1), 2**l) if l > 0 else np.array([0]) for l in lev]
        mesh = np.meshgrid(*ranges, indexing="ij")
        blocks.append(np.stack([m.ravel() for m in mesh], axis=1))
    if not blocks:
        return np.zeros((0, d), dtype=np.int64)
    cells = np.concatenate(blocks, axis=0)
    order = np.lexsort(cells.T[::-1])
    return cells[order]


def full_index_set(levels: Sequence[int], k: int, caps: Sequence[int] | None = None) -> AdaptiveGrid:
    """All elements with ``l_m <= levels[m]`` componentwise."""
    levels = tuple(int(l) for l in levels)
    if any(l < 0 for l in levels):
        raise ValueError("levels must be nonnegative")
    caps = levels if caps is None else tuple(caps)
    levs = itertools.product(*[range(l + 1) for l in levels])
    return AdaptiveGrid(_cells_for_levels(levs, len(levels)), caps, k)


def sparse_index_set(N: int, d: int, k: int, caps: Sequence[int] | None = None) -> AdaptiveGrid:
    """All elements with ``|l|_1 <= N`` (and ``l_m <= caps[m]``)."""
    if N < 0:
        raise ValueError("N must be nonnegative")
    caps = (N,) * d if caps is None else tuple(int(c) for c in caps)
    levs = [
        lev for lev in itertools.product(*[range(min(N, c) + 1) for c in caps])
        if sum(lev) <= N
    ]
    return AdaptiveGrid(_cells_for_levels(levs, d), caps, k)


def mixed_index_set(lx: int, lv: int, k: int, caps: Sequence[int] | None = None) -> AdaptiveGrid:
    """Full grid of level ``lx`` in x times a 3D sparse grid of level ``lv``."""
    if lx < 0 or lv < 0:
        raise ValueError("levels must be nonnegative")
    caps = (lx, lv, lv, lv) if caps is None else tuple(caps)
    levs = [
        (a,) + v
        for a in range(lx + 1)
        for v in itertools.product(range(lv + 1), repeat=3)
        if sum(v) <= lv
    ]
    return AdaptiveGrid(_cells_for_levels(levs, 4), caps, k)


# ---------------------------------------------------------------------------
# parent / child relations
# ---------------------------------------------------------------------------


def children(key: ElementKey, caps: Sequence[int]) -> list[ElementKey]:
    """Children of ``key``: up to two per dimension, none at the cap."""
    out = []
    cells = key_to_cells(key)
    for m, (l, e) in enumerate(zip(key.levels, cells)):
        if l >= caps[m]:
            continue
        new = [1] if l == 0 else [2 * e, 2 * e + 1]
        for c in new:
            cc = list(cells)
            cc[m] = c
            out.append(cells_to_key(cc))
    return out


def parents(key: ElementKey) -> list[ElementKey]:
    """Parents of ``key``: one per dimension with nonzero level."""
    out = []
    cells = key_to_cells(key)
    for m, e in enumerate(cells):
        if e == 0:
            continue
        cc = list(cells)
        cc[m] = 0 if e == 1 else e // 2
        out.append(cells_to_key(cc))
    return out


def child_cells(cells: np.ndarray, caps: Sequence[int]) -> np.ndarray:
    """Vectorized children of many elements, in element-then-dimension order."""
    cells = np.asarray(cells, dtype=np.int64)
    n, d = cells.shape
    lev = element_levels(cells)
    parts = []
    for m in range(d):
        e = cells[:, m]
        ok = lev[:, m] < caps[m]
        root = ok & (e == 0)
        inner = ok & (e > 0)
        c0 = cells.copy()
        c1 = cells.copy()
        c0[:, m] = np.where(root, 1, 2 * e)
        c1[:, m] = 2 * e + 1
        parts.append((c0, root | inner, 2 * m))
        parts.append((c1, inner, 2 * m + 1))
    # interleave so children of element i come before those of element i+1
    rows, slot = [], []
    for arr, mask, s in parts:
        idx = np.flatnonzero(mask)
        rows.append(arr[idx])
        slot.append(idx * (2 * d) + s)
    if not rows:
        return np.zeros((0, d), dtype=np.int64)
    allrows = np.concatenate(rows)
    order = np.argsort(np.concatenate(slot), kind="stable")
    return allrows[order]


# ---------------------------------------------------------------------------
# norms and adaptivity
# ---------------------------------------------------------------------------


def block_norms(grid: AdaptiveGrid, state: np.ndarray) -> CoefficientBlockNorms:
    """l2 and l-infinity norm of every element block of ``state``."""
    blocks = np.asarray(state).reshape(grid.n_elements, grid.block)
    return CoefficientBlockNorms(
        l2=np.sqrt(np.einsum("ij,ij->i", blocks, blocks)),
        linf=np.abs(blocks).max(axis=1) if grid.n_elements else np.zeros(0),
    )


def refine_mask(norms: CoefficientBlockNorms, tau: float, norm: str = "linf") -> np.ndarray:
    """Elements passing the refinement criterion."""
    if norm == "linf":
        vals = norms.linf
        ref = vals.max() if len(vals) else 0.0
    elif norm == "l2":
        vals = norms.l2
        ref = np.sqrt(np.sum(vals**2))
    else:
        raise ValueError(f"unknown norm {norm!r}")
    if ref <= 0.0:
        return np.zeros(len(vals), dtype=bool)
    return vals >= tau * ref


def coarsen_mask(norms: CoefficientBlockNorms, tau: float, mu: float, norm: str = "linf") -> np.ndarray:
    """Elements satisfying the coarsening (removal) criterion."""
    if norm == "linf":
        vals = norms.linf
        ref = vals.max() if len(vals) else 0.0
    elif norm == "l2":
        vals = norms.l2
        ref = np.sqrt(np.sum(vals**2))
    else:
        raise ValueError(f"unknown norm {norm!r}")
    return vals <= mu * tau * ref


def refine(
    grid: AdaptiveGrid,
    state_norms: CoefficientBlockNorms,
    tau: float,
    norm: str = "linf",
) -> tuple[AdaptiveGrid, list[ElementKey]]:
    """Add the children of every element passing the refinement criterion.

    Returns
    -------
    grid_new : AdaptiveGrid
        The enlarged grid; existing elements keep their positions and new
        ones are appended.
    new_keys : list of ElementKey
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    mask = refine_mask(state_norms, tau, norm)
    if not mask.any():
        return grid, []
    cand = child_cells(grid.cells[mask], grid.caps)
    if len(cand) == 0:
        return grid, []
    codes = grid.encode(cand)
    fresh = grid.lookup(codes) < 0
    cand = cand[fresh]
    codes = codes[fresh]
    _, first = np.unique(codes, return_index=True)
    cand = cand[np.sort(first)]
    if len(cand) == 0:
        return grid, []
    new = grid.with_cells(np.concatenate([grid.cells, cand]))
    return new, [cells_to_key(c) for c in cand]


def coarsen(
    grid: AdaptiveGrid,
    state_norms: CoefficientBlockNorms,
    tau: float,
    mu: float = 0.1,
    norm: str = "linf",
) -> AdaptiveGrid:
    """Remove every element satisfying the coarsening criterion.

    The root element (all levels zero) is never removed.
    """
    if not 0.0 < mu < 1.0:
        raise ValueError("mu must lie in (0, 1)")
    drop = coarsen_mask(state_norms, tau, mu, norm)
    root = np.all(grid.cells == 0, axis=1)
    drop &= ~root
    if not drop.any():
        return grid
    kept = grid.cells[~drop]
    if len(kept) == 0:
        kept = np.zeros((1, grid.d), dtype=np.int64)
    return grid.with_cells(kept)


def reindex(grid_old: AdaptiveGrid, grid_new: AdaptiveGrid, state_old: np.ndarray) -> np.ndarray:
    """Move a state to another grid: shared blocks copied, new blocks zero."""
    if grid_old is grid_new:
        return np.array(state_old, dtype=float, copy=True)
    if grid_old.caps != grid_new.caps or grid_old.k != grid_new.k:
        raise ValueError("grids differ in caps or degree")
    src = np.asarray(state_old, dtype=float).reshape(grid_old.n_elements, grid_old.block)
    out = np.zeros((grid_new.n_elements, grid_new.block))
    idx = grid_old.lookup(grid_new.codes)
    have = idx >= 0
    out[have] = src[idx[have]]
    return out.reshape(-1)


def dump_grid(grid: AdaptiveGrid) -> str:
    """One line per element: ``l_1 ... l_d j_1 ... j_d``."""
    lines = []
    for cells in grid.cells:
        key = cells_to_key(cells)
        lines.append(" ".join(str(v) for v in key.levels + key.positions))
    return "\n".join(lines) + ("\n" if lines else "")


def load_grid(text: str, caps: Sequence[int], k: int) -> AdaptiveGrid:
    """Parse the output of :func:`dump_grid`."""
    d = len(caps)
    rows = []
    for line in text.splitlines():
        vals = [int(v) for v in line.split()]
        if not vals:
            continue
        rows.append([pack(l, j) for l, j in zip(vals[:d], vals[d:])])
    return AdaptiveGrid(np.array(rows, dtype=np.int64).reshape(-1, d), caps, k)
