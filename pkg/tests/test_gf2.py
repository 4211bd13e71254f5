"""GF(2) linear algebra against brute-force enumeration oracles."""
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from usdlab import gf2

from conftest import make_rng


def enumerate_rowspace(matrix):
    """All GF(2) combinations of the rows; the brute-force oracle."""
    m = matrix.shape[0]
    out = set()
    for bits in itertools.product([0, 1], repeat=m):
        v = np.zeros(matrix.shape[1], dtype=np.uint8)
        for b, row in zip(bits, matrix):
            if b:
                v ^= row
        out.add(v.tobytes())
    return out


@pytest.mark.parametrize("seed", range(8))
def test_rank_matches_rowspace_cardinality(seed):
    rng = make_rng(seed)
    mat = rng.integers(0, 2, size=(rng.integers(1, 7), rng.integers(1, 9)), dtype=np.uint8)
    space = enumerate_rowspace(mat)
    assert 2 ** gf2.rank(mat) == len(space)


@pytest.mark.parametrize("seed", range(8))
def test_nullspace_is_exact_kernel(seed):
    rng = make_rng(seed + 100)
    mat = rng.integers(0, 2, size=(4, 7), dtype=np.uint8)
    basis = gf2.nullspace(mat)
    assert basis.shape[0] == 7 - gf2.rank(mat)
    assert not (mat.astype(int) @ basis.T % 2).any()
    # basis vectors independent
    assert gf2.rank(basis) == basis.shape[0]
    # kernel cardinality matches enumeration
    kernel_count = sum(
        1 for bits in itertools.product([0, 1], repeat=7)
        if not (mat.astype(int) @ np.array(bits) % 2).any())
    assert 2 ** basis.shape[0] == kernel_count


@pytest.mark.parametrize("seed", range(6))
def test_rowspace_membership_matches_enumeration(seed):
    rng = make_rng(seed + 200)
    mat = rng.integers(0, 2, size=(4, 6), dtype=np.uint8)
    space = enumerate_rowspace(mat)
    rs = gf2.RowSpace(mat)
    probes = rng.integers(0, 2, size=(40, 6), dtype=np.uint8)
    expected = np.array([p.tobytes() in space for p in probes])
    assert np.array_equal(rs.contains_batch(probes), expected)
    for p, e in zip(probes, expected):
        assert rs.contains(p) == e


def test_solve_consistent_and_inconsistent():
    rng = make_rng(5)
    mat = rng.integers(0, 2, size=(5, 8), dtype=np.uint8)
    x_true = rng.integers(0, 2, size=8, dtype=np.uint8)
    rhs = (mat.astype(int) @ x_true % 2).astype(np.uint8)
    x = gf2.solve(mat, rhs)
    assert not ((mat.astype(int) @ x - rhs) % 2).any()
    # deliberately inconsistent: second equation reads 0 = 1
    mat2 = np.zeros((2, 3), np.uint8)
    mat2[0, 0] = 1
    with pytest.raises(ValueError):
        gf2.solve(mat2, np.array([1, 1], np.uint8))


@given(st.integers(0, 2**30 - 1), st.integers(1, 5), st.integers(1, 8))
@settings(max_examples=40, deadline=None)
def test_rank_bounds_and_nullity(seed, m, n):
    rng = make_rng(seed)
    mat = rng.integers(0, 2, size=(m, n), dtype=np.uint8)
    r = gf2.rank(mat)
    assert 0 <= r <= min(m, n)
    assert gf2.nullspace(mat).shape[0] == n - r


def test_inputs_not_mutated():
    mat = np.array([[1, 1, 0], [0, 1, 1]], dtype=np.uint8)
    copy = mat.copy()
    gf2.rref(mat)
    gf2.rank(mat)
    gf2.nullspace(mat)
    gf2.RowSpace(mat).contains(np.array([1, 0, 1], np.uint8))
    assert np.array_equal(mat, copy)
