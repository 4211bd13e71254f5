"""Stabilizer-code algebra: constructions, logicals, distances, file format."""
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from usdlab import codes, gf2
from usdlab.codes import PauliVector, Syndrome
from usdlab.errors import DimensionError, RankError, UnsupportedCodeError, ValidationError

from conftest import make_rng


@pytest.fixture(scope="module")
def color():
    return codes.build_color_code_d5()


@pytest.fixture(scope="module")
def golay():
    return codes.build_golay_code()


@pytest.fixture(scope="module")
def rep3():
    rows = [PauliVector.from_string("000110"), PauliVector.from_string("000011")]
    return codes.build_custom(rows, name="rep3")


# ---------------------------------------------------------------------------
# symplectic product
# ---------------------------------------------------------------------------

def test_symplectic_identity_and_self(rng):
    for _ in range(20):
        n = int(rng.integers(1, 9))
        v = PauliVector(rng.integers(0, 2, 2 * n, dtype=np.uint8))
        zero = PauliVector.zero(n)
        assert codes.symplectic_product(zero, v) == 0
        assert codes.symplectic_product(v, v) == 0


def test_symplectic_length_mismatch():
    with pytest.raises(DimensionError):
        codes.symplectic_product(PauliVector.zero(2), PauliVector.zero(3))


@given(st.integers(0, 2**30 - 1))
@settings(max_examples=50, deadline=None)
def test_symplectic_bilinearity(seed):
    rng = make_rng(seed)
    n = int(rng.integers(1, 10))
    a, b, c = (PauliVector(rng.integers(0, 2, 2 * n, dtype=np.uint8)) for _ in range(3))
    lhs = codes.symplectic_product(a ^ b, c)
    rhs = codes.symplectic_product(a, c) ^ codes.symplectic_product(b, c)
    assert lhs == rhs


def test_logical_pair_anticommutes(color, golay, rep3):
    for code in (color, golay, rep3):
        assert codes.symplectic_product(code.logical_x, code.logical_z) == 1


# ---------------------------------------------------------------------------
# syndrome
# ---------------------------------------------------------------------------

def test_syndrome_zero_error(color):
    s = codes.syndrome(color, PauliVector.zero(color.n))
    assert s.is_zero() and len(s) == color.n - 1


def test_syndrome_single_x_reads_z_column(color):
    for j in (0, 5, 16):
        bits = np.zeros(2 * color.n, np.uint8)
        bits[j] = 1
        s = codes.syndrome(color, PauliVector(bits))
        expected = np.array([r.z_part[j] for r in color.rows], np.uint8)
        assert np.array_equal(s.bits, expected)


def test_syndrome_of_generators_is_zero(color, golay):
    for code in (color, golay):
        for r in code.rows:
            assert codes.syndrome(code, r).is_zero()


def test_syndrome_batch_matches_single(color, rng):
    E = rng.integers(0, 2, size=(50, 2 * color.n), dtype=np.uint8)
    batch = codes.syndrome_batch(color, E)
    for e, row in zip(E, batch):
        assert np.array_equal(codes.syndrome(color, PauliVector(e)).bits, row)


def test_syndrome_stabilizer_invariance(color, golay):
    # syndrome(e xor s) == syndrome(e) for random stabilizer-group elements s
    for code in (color, golay):
        rng = make_rng(31)
        k = code.num_rows
        E = rng.integers(0, 2, size=(10_000, 2 * code.n), dtype=np.uint8)
        picks = rng.integers(0, 2, size=(10_000, k), dtype=np.uint8)
        S = (picks.astype(np.int32) @ code.rows_matrix.astype(np.int32) % 2).astype(np.uint8)
        assert np.array_equal(codes.syndrome_batch(code, E ^ S),
                              codes.syndrome_batch(code, E))


# ---------------------------------------------------------------------------
# constructions
# ---------------------------------------------------------------------------

def test_color_code_shape(color):
    assert color.n == 17
    assert color.num_rows == 16
    # one X and one Z generator per face, same support
    for i, face in enumerate(codes.COLOR_D5_FACES):
        x_row, z_row = color.rows[i], color.rows[i + 8]
        support = np.zeros(17, np.uint8)
        support[list(face)] = 1
        assert np.array_equal(x_row.x_part, support) and not x_row.z_part.any()
        assert np.array_equal(z_row.z_part, support) and not z_row.x_part.any()


def test_color_code_distance_five(color):
    assert codes.code_distance(color) == 5
    assert color.logical_x.weight() >= 5
    assert color.logical_z.weight() >= 5


def test_golay_shape_and_classical_distance(golay):
    assert golay.n == 23
    assert golay.num_rows == 22
    H = codes._golay_parity_check()
    assert gf2.rank(H) == 11
    assert not (H.astype(int) @ H.T % 2).any()          # dual-containing
    assert codes.classical_min_distance(gf2.nullspace(H)) == 7


def test_golay_fallback_route_agrees():
    H_direct = codes._golay_parity_check()
    H_fallback = codes._golay_parity_check_fallback()
    assert codes._validate_golay_classical(H_fallback)
    # both routes define the same classical code (equal row spaces)
    rs = gf2.RowSpace(H_direct)
    assert rs.contains_batch(H_fallback).all()
    assert gf2.rank(H_fallback) == gf2.rank(H_direct)


@pytest.mark.slow
def test_golay_quantum_distance_seven(golay):
    assert codes.code_distance(golay) == 7


def test_build_custom_roundtrip_golay(golay):
    rebuilt = codes.build_custom(list(golay.rows))
    assert np.array_equal(rebuilt.rows_matrix, golay.rows_matrix)
    assert rebuilt.logical_x == golay.logical_x
    assert rebuilt.logical_z == golay.logical_z


def test_build_custom_rejects_anticommuting_pair():
    x0 = PauliVector.from_string("10")
    z0 = PauliVector.from_string("01")
    with pytest.raises(ValidationError, match="0 and 1"):
        codes.build_custom([x0, z0])


def test_build_custom_rejects_dependent_rows():
    r = PauliVector.from_string("000110")
    with pytest.raises(RankError):
        codes.build_custom([r, r])


def test_build_custom_rejects_wrong_row_count():
    with pytest.raises(UnsupportedCodeError):
        codes.build_custom([PauliVector.from_string("000110")])


def test_rep3_structure(rep3):
    assert rep3.n == 3 and rep3.num_rows == 2


# ---------------------------------------------------------------------------
# derive_logicals against exhaustive search on the 3-qubit repetition code
# ---------------------------------------------------------------------------

def test_rep3_logicals_match_exhaustive_search(rep3):
    rows = np.stack([r.bits for r in rep3.rows])
    rowspace = gf2.RowSpace(rows)
    commuting_outside = []
    for bits in itertools.product([0, 1], repeat=6):
        v = np.array(bits, np.uint8)
        prods = codes._swap_halves(rows) @ v % 2
        if not prods.any() and not rowspace.contains(v):
            commuting_outside.append(v)
    # derived representatives must appear in the exhaustive logical set
    assert any(np.array_equal(rep3.logical_x.bits, v) for v in commuting_outside)
    assert any(np.array_equal(rep3.logical_z.bits, v) for v in commuting_outside)
    # logical X is the XXX class, logical Z the ZZZ class (up to stabilizer)
    xxx = PauliVector.from_string("111000")
    zzz = PauliVector.from_string("000111")
    assert codes.is_in_stabilizer_group(rep3, rep3.logical_x ^ xxx)
    assert codes.is_in_stabilizer_group(rep3, rep3.logical_z ^ zzz)


def test_color_logicals_have_min_coset_weight_five(color):
    # minimum weight within each logical representative's stabilizer coset
    combos = codes._all_combinations(color.rows_matrix)
    for rep in (color.logical_x, color.logical_z):
        coset = combos ^ rep.bits
        w = (coset[:, :17] | coset[:, 17:]).sum(axis=1)
        assert int(w.min()) == 5


# ---------------------------------------------------------------------------
# stabilizer-group membership
# ---------------------------------------------------------------------------

def test_membership_basics(color):
    assert codes.is_in_stabilizer_group(color, PauliVector.zero(color.n))
    assert codes.is_in_stabilizer_group(color, color.rows[0] ^ color.rows[9])
    assert not codes.is_in_stabilizer_group(color, color.logical_x)


def test_membership_cross_validation(color, golay):
    # row-space membership == (zero syndrome and commutes with both logicals)
    for code in (color, golay):
        rng = make_rng(77)
        R = rng.integers(0, 2, size=(10_000, 2 * code.n), dtype=np.uint8)
        # enrich with actual stabilizer elements, otherwise members are rare
        picks = rng.integers(0, 2, size=(2_000, code.num_rows), dtype=np.uint8)
        S = (picks.astype(np.int32) @ code.rows_matrix.astype(np.int32) % 2).astype(np.uint8)
        R[:2_000] = S
        fast = codes.is_in_stabilizer_group_batch(code, R)
        slow = np.array([codes.is_in_stabilizer_group(code, PauliVector(r)) for r in R[:300]])
        assert np.array_equal(fast[:300], slow)
        assert fast[:2_000].all()


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------

def test_definition_roundtrip_bit_exact(color, golay, tmp_path):
    for code in (color, golay):
        path = tmp_path / f"{code.name}.code"
        codes.save_definition(code, path)
        loaded = codes.load_definition(path)
        assert codes.definition_text(loaded) == codes.definition_text(code)
        assert np.array_equal(loaded.rows_matrix, code.rows_matrix)
        assert loaded.logical_x == code.logical_x


def test_definition_rejects_malformed():
    with pytest.raises(ValidationError):
        codes.parse_definition_text("")
    with pytest.raises(ValidationError):
        codes.parse_definition_text("n=3 rows=2\n000110\n")
    with pytest.raises(ValidationError):
        codes.parse_definition_text("n=3 rows=1\n0001\n")
    with pytest.raises(ValidationError):
        codes.parse_definition_text("nonsense\n000110\n")


def test_pauli_vector_validation():
    with pytest.raises(DimensionError):
        PauliVector([0, 1, 0])
    with pytest.raises(ValidationError):
        PauliVector([0, 2])
    v = PauliVector.from_string("0110")
    assert v.weight() == 2
    with pytest.raises(AttributeError):
        v.n = 5
