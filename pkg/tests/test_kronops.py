import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import dense_kron, restricted
from sgvplb import basis1d as b1
from sgvplb import hiergrid as hg
from sgvplb.kronops import (
    KronTerm,
    SeparableOperator,
    add_scaled,
    apply,
    compose_block_diag,
    identity_operator,
)


def _random_op(rng, caps, k, periodic, nterms=3):
    """Random operator whose factors are genuine 1D DG matrices."""
    kinds = ["central-divergence", "penalty", "coordinate-multiply", "ldg-gradient"]
    terms = []
    for _ in range(nterms):
        fs = []
        for m, c in enumerate(caps):
            if rng.random() < 0.3:
                fs.append(None)
                continue
            kind = kinds[rng.integers(len(kinds))]
            bnd = "periodic" if periodic[m] else "zero-flux"
            fs.append(b1.assemble_1d_operator(kind, k, c, (-1.0, 2.0), bnd).matrix * rng.uniform(0.5, 2))
        terms.append(KronTerm(rng.uniform(-2, 2), tuple(fs)))
    return SeparableOperator(terms, caps, k, periodic)


def test_identity(rng):
    grid = hg.sparse_index_set(3, 3, 1)
    x = rng.standard_normal(grid.ndof)
    assert np.array_equal(apply(identity_operator(grid.caps, 1), grid, x), x)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_full_grid_matches_dense(d, rng):
    caps = (2,) * d
    periodic = (True,) + (False,) * (d - 1)
    op = _random_op(rng, caps, 1, periodic)
    grid = hg.full_index_set(caps, 1)
    x = rng.standard_normal(grid.ndof)
    ref = restricted(op, grid) @ x
    assert np.abs(apply(op, grid, x) - ref).max() < 1e-11 * max(1, np.abs(ref).max())
    assert np.abs(apply(op, grid, x, dense_ok=False) - ref).max() < 1e-11 * max(1, np.abs(ref).max())


@pytest.mark.parametrize("d", [2, 3, 4])
def test_sparse_grid_galerkin(d, rng):
    caps = (2,) * d
    periodic = (True,) + (False,) * (d - 1)
    op = _random_op(rng, caps, 1, periodic)
    grid = hg.sparse_index_set(2, d, 1)
    x = rng.standard_normal(grid.ndof)
    ref = restricted(op, grid) @ x
    assert np.abs(apply(op, grid, x) - ref).max() < 1e-11 * max(1, np.abs(ref).max())


@given(seed=st.integers(0, 2**31 - 1))
def test_random_adaptive_grid_galerkin(seed):
    rng = np.random.default_rng(seed)
    caps = (2, 2, 1)
    full = hg.full_index_set(caps, 1)
    keep = rng.random(full.n_elements) < 0.6
    keep[0] = True
    grid = full.with_cells(rng.permutation(full.cells[keep]))
    op = _random_op(rng, caps, 1, (True, False, False))
    x = rng.standard_normal(grid.ndof)
    ref = restricted(op, grid) @ x
    assert np.abs(apply(op, grid, x) - ref).max() < 1e-11 * max(1, np.abs(ref).max())


@given(seed=st.integers(0, 2**31 - 1), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    grid = hg.sparse_index_set(3, 2, 1)
    op = _random_op(rng, grid.caps, 1, (True, False))
    x, y = rng.standard_normal((2, grid.ndof))
    lhs = apply(op, grid, a * x + b * y)
    rhs = a * apply(op, grid, x) + b * apply(op, grid, y)
    assert np.abs(lhs - rhs).max() < 1e-12 * max(1, np.abs(rhs).max())


def test_add_scaled(rng):
    grid = hg.sparse_index_set(2, 3, 1)
    A = _random_op(rng, grid.caps, 1, (False,) * 3)
    B = _random_op(rng, grid.caps, 1, (False,) * 3)
    x = rng.standard_normal(grid.ndof)
    assert np.allclose(apply(add_scaled(A, B, 1, 0), grid, x), apply(A, grid, x), atol=1e-13)
    assert np.allclose(apply(add_scaled(A, B, 1, 1), grid, x), apply(A, grid, x) + apply(B, grid, x), atol=1e-12)
    with pytest.raises(ValueError):
        add_scaled(A, identity_operator((2, 2, 1), 1), 1, 1)


def test_shifted_operator_matches_dense(rng):
    grid = hg.full_index_set((2, 2, 2), 1)
    L = _random_op(rng, grid.caps, 1, (False,) * 3)
    S = add_scaled(identity_operator(grid.caps, 1), L, 1.0, -0.3)
    ref = np.eye(grid.ndof) - 0.3 * restricted(L, grid)
    x = rng.standard_normal(grid.ndof)
    assert np.abs(apply(S, grid, x) - ref @ x).max() < 1e-11


def test_block_diag(rng):
    grid = hg.sparse_index_set(2, 3, 1)
    ident = identity_operator(grid.caps, 1)
    assert np.array_equal(compose_block_diag(ident, grid), np.broadcast_to(np.eye(8), (grid.n_elements, 8, 8)))
    scaled = SeparableOperator([KronTerm(2.5, (None, None, None))], grid.caps, 1)
    assert np.allclose(compose_block_diag(scaled, grid), 2.5 * np.eye(8))
    op = _random_op(rng, grid.caps, 1, (False,) * 3)
    blocks = compose_block_diag(op, grid)
    dense = restricted(op, grid)
    for i in range(grid.n_elements):
        s = slice(i * 8, (i + 1) * 8)
        assert np.abs(blocks[i] - dense[s, s]).max() < 1e-12


def test_misaligned_state():
    grid = hg.sparse_index_set(2, 2, 1)
    with pytest.raises(ValueError):
        apply(identity_operator(grid.caps, 1), grid, np.zeros(grid.ndof + 1))


def test_dense_oracle_self_check():
    op = SeparableOperator([KronTerm(1.0, (None, None))], (1, 1), 0)
    assert np.array_equal(dense_kron(op), np.eye(4))
