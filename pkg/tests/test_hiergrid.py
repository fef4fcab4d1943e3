import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sgvplb import hiergrid as hg
from sgvplb.hiergrid import ElementKey


def _count_dofs(level_tuples, k):
    """Brute-force dof count: sum over level tuples of prod(block counts) * (k+1)^d."""
    total = 0
    for lev in level_tuples:
        n = 1
        for l in lev:
            n *= 1 if l == 0 else 2 ** (l - 1)
        total += n * (k + 1) ** len(lev)
    return total


def test_full_examples():
    assert hg.full_index_set((3,), 2).ndof == 24
    g = hg.full_index_set((0, 0, 0), 2)
    assert g.n_elements == 1 and g.ndof == 27
    assert hg.full_index_set((2, 1), 0).ndof == 8


def test_sparse_footnote_value():
    assert hg.sparse_index_set(9, 2, 0).ndof == 2816
    assert hg.full_index_set((9, 9), 0).ndof == 2**18


@pytest.mark.parametrize("k", [0, 1, 2])
def test_one_dimensional_dims(k):
    for l in range(11):
        assert hg.full_index_set((l,), k).ndof == 2**l * (k + 1)
        w = hg.full_index_set((l,), k).ndof - (hg.full_index_set((l - 1,), k).ndof if l else 0)
        assert w == (k + 1 if l == 0 else 2 ** (l - 1) * (k + 1))
        assert hg.sparse_index_set(l, 1, k).ndof == hg.full_index_set((l,), k).ndof


@pytest.mark.parametrize("d", [1, 2, 3, 4])
@pytest.mark.parametrize("N", [0, 1, 2, 3, 4])
def test_sparse_count_matches_enumeration(d, N):
    levs = [lev for lev in itertools.product(range(N + 1), repeat=d) if sum(lev) <= N]
    assert hg.sparse_index_set(N, d, 1).ndof == _count_dofs(levs, 1)


@pytest.mark.parametrize("lx", [0, 1, 2, 3])
@pytest.mark.parametrize("lv", [0, 1, 2, 3])
def test_mixed_count(lx, lv):
    g = hg.mixed_index_set(lx, lv, 0)
    levs = [(a,) + v for a in range(lx + 1) for v in itertools.product(range(lv + 1), repeat=3) if sum(v) <= lv]
    assert g.ndof == _count_dofs(levs, 0)
    assert g.ndof == 2**lx * hg.sparse_index_set(lv, 3, 0).ndof


def test_mixed_level_zero_is_velocity_sparse():
    g = hg.mixed_index_set(0, 3, 1)
    s = hg.sparse_index_set(3, 3, 1)
    assert sorted(map(tuple, g.cells[:, 1:])) == sorted(map(tuple, s.cells))


@pytest.mark.parametrize("d", [2, 3])
def test_sparse_subset_of_full(d):
    s = hg.sparse_index_set(3, d, 1)
    f = hg.full_index_set((3,) * d, 1)
    assert np.all(f.lookup(s.codes) >= 0)
    assert s.n_elements < f.n_elements


def test_caps_respected():
    g = hg.sparse_index_set(4, 3, 1, caps=(4, 2, 1))
    assert np.all(g.levels <= np.array([4, 2, 1]))
    with pytest.raises(ValueError):
        hg.AdaptiveGrid([[8, 0]], (2, 2), 1)


def test_offsets_contiguous():
    g = hg.sparse_index_set(3, 2, 2)
    offs = sorted(g.element_offset(key) for key in g.keys())
    assert offs == [i * g.block for i in range(g.n_elements)]


def test_children_examples():
    assert hg.children(ElementKey((1,), (0,)), (3,)) == [ElementKey((2,), (0,)), ElementKey((2,), (1,))]
    kids = hg.children(ElementKey((0, 0), (0, 0)), (3, 3))
    assert set(kids) == {ElementKey((1, 0), (0, 0)), ElementKey((0, 1), (0, 0))}
    assert hg.children(ElementKey((3,), (2,)), (3,)) == []


def test_parents_examples():
    assert hg.parents(ElementKey((2,), (1,))) == [ElementKey((1,), (0,))]
    assert hg.parents(ElementKey((0, 0, 0), (0, 0, 0))) == []


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_children_parents_duality(d):
    caps = (3,) * d if d < 4 else (2,) * 4
    grid = hg.full_index_set(caps, 0)
    keys = set(grid.keys())
    for key in keys:
        for c in hg.children(key, caps):
            assert key in hg.parents(c)
        for par in hg.parents(key):
            assert key in hg.children(par, caps)


def test_vectorized_children_match_scalar():
    caps = (3, 2, 3)
    g = hg.full_index_set(caps, 0)
    vec = {tuple(c) for c in hg.child_cells(g.cells, caps)}
    ref = {hg.key_to_cells(c) for key in g.keys() for c in hg.children(key, caps)}
    assert vec == ref


def _brute_refine(grid, state, tau):
    blocks = state.reshape(grid.n_elements, -1)
    linf = np.abs(blocks).max(axis=1)
    keep = set(grid.keys())
    for key, v in zip(grid.keys(), linf):
        if v >= tau * linf.max():
            keep.update(hg.children(key, grid.caps))
    return keep


@given(seed=st.integers(0, 2**31 - 1), tau=st.floats(0.05, 0.9))
def test_refine_matches_brute_force(seed, tau):
    rng = np.random.default_rng(seed)
    grid = hg.sparse_index_set(3, 2, 1, caps=(4, 4))
    state = rng.standard_normal(grid.ndof) * rng.random(grid.n_elements).repeat(grid.block) ** 4
    new, added = hg.refine(grid, hg.block_norms(grid, state), tau)
    assert set(new.keys()) == _brute_refine(grid, state, tau)
    assert set(added) == set(new.keys()) - set(grid.keys())
    # existing elements keep their positions
    assert np.array_equal(new.cells[: grid.n_elements], grid.cells)


def test_refine_trivial_cases():
    grid = hg.full_index_set((0, 0), 1, caps=(2, 2))
    same, added = hg.refine(grid, hg.block_norms(grid, np.zeros(grid.ndof)), 0.5)
    assert same is grid and added == []
    state = np.ones(grid.ndof)
    new, added = hg.refine(grid, hg.block_norms(grid, state), 0.5)
    assert new.n_elements == 3 and len(added) == 2


@given(seed=st.integers(0, 2**31 - 1))
def test_coarsen_criterion(seed):
    rng = np.random.default_rng(seed)
    grid = hg.full_index_set((3, 3), 1)
    state = rng.standard_normal(grid.ndof) * np.repeat(10.0 ** rng.uniform(-7, 0, grid.n_elements), grid.block)
    norms = hg.block_norms(grid, state)
    tau, mu = 1e-4, 0.1
    new = hg.coarsen(grid, norms, tau, mu)
    bound = mu * tau * norms.linf.max()
    kept = new.lookup(grid.codes) >= 0
    root = np.all(grid.cells == 0, axis=1)
    assert np.all(norms.linf[~kept] <= bound)
    assert np.all((norms.linf[kept] > bound) | root[kept])


def test_coarsen_keeps_root_and_unchanged_when_all_large():
    grid = hg.full_index_set((2, 2), 1)
    z = hg.coarsen(grid, hg.block_norms(grid, np.zeros(grid.ndof)), 1e-4)
    assert z.n_elements == 1 and np.all(z.cells == 0)
    same = hg.coarsen(grid, hg.block_norms(grid, np.ones(grid.ndof)), 1e-4)
    assert same is grid
    with pytest.raises(ValueError):
        hg.coarsen(grid, hg.block_norms(grid, np.ones(grid.ndof)), 1e-4, mu=1.0)


def test_reindex_contract(rng):
    small = hg.sparse_index_set(2, 2, 1)
    big = hg.full_index_set((2, 2), 1)
    x = rng.standard_normal(small.ndof)
    y = hg.reindex(small, big, x)
    back = hg.reindex(big, small, y)
    assert np.array_equal(back, x)
    new_rows = big.lookup(small.codes)
    mask = np.ones(big.n_elements, bool)
    mask[new_rows] = False
    assert np.all(y.reshape(big.n_elements, -1)[mask] == 0.0)
    assert np.array_equal(hg.reindex(small, small, x), x)


def test_parseval_block_norms(rng):
    grid = hg.sparse_index_set(3, 3, 1)
    x = rng.standard_normal(grid.ndof)
    n = hg.block_norms(grid, x)
    assert np.isclose(np.sum(n.l2**2), x @ x)
    assert np.all(n.linf <= n.l2 + 1e-15)


def test_dump_roundtrip():
    grid = hg.sparse_index_set(3, 3, 1, caps=(3, 2, 3))
    text = hg.dump_grid(grid)
    assert text.splitlines()[0] == "0 0 0 0 0 0"
    back = hg.load_grid(text, grid.caps, grid.k)
    assert np.array_equal(back.cells, grid.cells)
