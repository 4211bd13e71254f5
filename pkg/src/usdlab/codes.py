"""Stabilizer-code algebra in the binary symplectic representation.

An n-qubit Pauli operator is stored as 2n bits: X-part first, Z-part
second.  Two operators commute iff their symplectic product is 0, and a
syndrome bit is the symplectic product of the error with a generator.
Only codes with exactly one logical qubit (n-1 independent commuting
generators) are supported.
"""
from __future__ import annotations

import hashlib
import os
from typing import Optional, Sequence, Tuple

import numpy as np

from . import gf2
from .errors import DimensionError, RankError, UnsupportedCodeError, ValidationError


class PauliVector:
    """Immutable length-2n bit vector: bits[:n] = X-part, bits[n:] = Z-part."""

    __slots__ = ("bits", "n")

    def __init__(self, bits):
        arr = np.array(bits, dtype=np.uint8).reshape(-1)
        if arr.size == 0 or arr.size % 2:
            raise DimensionError(f"PauliVector needs an even, positive length, got {arr.size}")
        if np.any(arr > 1):
            raise ValidationError("PauliVector entries must be 0 or 1")
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)
        object.__setattr__(self, "n", arr.size // 2)

    def __setattr__(self, name, value):
        raise AttributeError("PauliVector is immutable")

    @classmethod
    def from_xz(cls, x_bits, z_bits) -> "PauliVector":
        return cls(np.concatenate([np.asarray(x_bits), np.asarray(z_bits)]))

    @classmethod
    def zero(cls, n: int) -> "PauliVector":
        return cls(np.zeros(2 * n, dtype=np.uint8))

    @classmethod
    def from_string(cls, s: str) -> "PauliVector":
        if set(s) - {"0", "1"}:
            raise ValidationError(f"bit string may contain only 0/1: {s!r}")
        return cls(np.frombuffer(s.encode(), dtype=np.uint8) - ord("0"))

    @property
    def x_part(self) -> np.ndarray:
        return self.bits[: self.n]

    @property
    def z_part(self) -> np.ndarray:
        return self.bits[self.n :]

    def weight(self) -> int:
        """Number of qubits acted on non-trivially."""
        return int(np.count_nonzero(self.x_part | self.z_part))

    def to_string(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    def __xor__(self, other: "PauliVector") -> "PauliVector":
        if self.n != other.n:
            raise DimensionError(f"qubit counts differ: {self.n} vs {other.n}")
        return PauliVector(self.bits ^ other.bits)

    def __eq__(self, other) -> bool:
        return isinstance(other, PauliVector) and np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash(self.bits.tobytes())

    def __repr__(self) -> str:
        return f"PauliVector({self.to_string()})"


class Syndrome:
    """Immutable length-(n-1) bit vector of generator measurement outcomes."""

    __slots__ = ("bits",)

    def __init__(self, bits):
        arr = np.array(bits, dtype=np.uint8).reshape(-1)
        if np.any(arr > 1):
            raise ValidationError("Syndrome entries must be 0 or 1")
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Syndrome is immutable")

    def is_zero(self) -> bool:
        return not self.bits.any()

    def __eq__(self, other) -> bool:
        return isinstance(other, Syndrome) and np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash(self.bits.tobytes())

    def __len__(self) -> int:
        return self.bits.size

    def __repr__(self) -> str:
        return "Syndrome(" + "".join(str(b) for b in self.bits) + ")"


def _swap_halves(matrix: np.ndarray) -> np.ndarray:
    """Exchange X- and Z-halves; turns a Pauli row into its syndrome-map row."""
    m = np.atleast_2d(matrix)
    n = m.shape[1] // 2
    return np.concatenate([m[:, n:], m[:, :n]], axis=1)


def symplectic_product(a: PauliVector, b: PauliVector) -> int:
    if a.n != b.n:
        raise DimensionError(f"qubit counts differ: {a.n} vs {b.n}")
    return int((a.x_part @ b.z_part + a.z_part @ b.x_part) % 2)


class CheckMatrix:
    """A validated set of n-1 commuting independent generators plus one
    logical pair.  Construct through build_custom or a named constructor."""

    __slots__ = ("n", "rows", "logical_x", "logical_z", "name", "rows_matrix",
                 "syndrome_matrix", "_rowspace")

    def __init__(self, rows: Sequence[PauliVector], logical_x: PauliVector,
                 logical_z: PauliVector, name: str = "custom"):
        n = rows[0].n
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "rows", tuple(rows))
        object.__setattr__(self, "logical_x", logical_x)
        object.__setattr__(self, "logical_z", logical_z)
        object.__setattr__(self, "name", name)
        mat = np.stack([r.bits for r in rows]).astype(np.uint8)
        mat.setflags(write=False)
        object.__setattr__(self, "rows_matrix", mat)
        smat = _swap_halves(mat).copy()
        smat.setflags(write=False)
        object.__setattr__(self, "syndrome_matrix", smat)
        object.__setattr__(self, "_rowspace", gf2.RowSpace(mat))
        self._check_invariants()

    def __setattr__(self, name, value):
        raise AttributeError("CheckMatrix is immutable")

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    def _check_invariants(self):
        if self.num_rows != self.n - 1:
            raise UnsupportedCodeError(
                f"need n-1={self.n - 1} generators for one logical qubit, got {self.num_rows}")
        gram = (self.rows_matrix.astype(np.int64) @ _swap_halves(self.rows_matrix).T) % 2
        bad = np.argwhere(gram)
        if bad.size:
            i, j = bad[0]
            raise ValidationError(f"generators {i} and {j} anticommute")
        if self._rowspace.dim != self.num_rows:
            raise RankError(
                f"generators dependent over GF(2): rank {self._rowspace.dim} < {self.num_rows}")
        for name, rep in (("logical_x", self.logical_x), ("logical_z", self.logical_z)):
            prods = (self.syndrome_matrix.astype(np.int64) @ rep.bits) % 2
            if prods.any():
                raise ValidationError(f"{name} anticommutes with generator {int(prods.argmax())}")
            if self._rowspace.contains(rep.bits):
                raise ValidationError(f"{name} lies inside the stabilizer group")
        if symplectic_product(self.logical_x, self.logical_z) != 1:
            raise ValidationError("logical representatives must anticommute with each other")


def syndrome(code: CheckMatrix, e: PauliVector) -> Syndrome:
    """Generator measurement outcomes for error e: bit i is the parity of
    sum_j e_j S^Z_ij + e_{j+n} S^X_ij."""
    if e.n != code.n:
        raise DimensionError(f"qubit counts differ: {e.n} vs {code.n}")
    return Syndrome((code.syndrome_matrix.astype(np.int64) @ e.bits) % 2)


def syndrome_batch(code: CheckMatrix, errors: np.ndarray) -> np.ndarray:
    """Syndromes of a (batch, 2n) uint8 error matrix as (batch, n-1) uint8."""
    E = np.asarray(errors)
    if E.ndim != 2 or E.shape[1] != 2 * code.n:
        raise DimensionError(f"expected (batch, {2 * code.n}), got {E.shape}")
    acc = E.astype(np.int32) @ code.syndrome_matrix.T.astype(np.int32)
    return (acc % 2).astype(np.uint8)


def derive_logicals(rows: Sequence[PauliVector]) -> Tuple[PauliVector, PauliVector]:
    """Logical X/Z representatives for a commuting independent set of n-1
    generators: both commute with every row, lie outside the row space, and
    anticommute with each other.  Pure-X / pure-Z representatives are
    preferred when they exist (CSS codes); otherwise any valid symplectic
    pair is returned with the X label on the first vector found.
    """
    n = rows[0].n
    mat = np.stack([r.bits for r in rows]).astype(np.uint8)
    amat = _swap_halves(mat)
    rowspace = gf2.RowSpace(mat)
    if rowspace.dim != len(rows) or len(rows) != n - 1:
        raise UnsupportedCodeError("derive_logicals requires n-1 independent rows (k=1)")
    sx, sz = mat[:, :n], mat[:, n:]

    lx = _pure_half_logical(sz, rowspace, n, x_side=True)
    lz = None
    if lx is not None:
        lz = _pure_partner(sx, lx.x_part, rowspace, n)
    if lx is not None and lz is not None:
        return lx, lz

    # generic route: symplectic kernel of the generators, quotiented by rows
    kernel = gf2.nullspace(amat)
    u = None
    for v in kernel:
        if not rowspace.contains(v):
            u = v
            break
    if u is None:
        raise UnsupportedCodeError("no logical operator found; k=0 structure")
    uprod = (kernel.astype(np.int64) @ _swap_halves(u[None, :])[0]) % 2
    partner_idx = np.nonzero(uprod)[0]
    if partner_idx.size == 0:
        raise UnsupportedCodeError("degenerate symplectic form on the logical quotient")
    w = kernel[int(partner_idx[0])]
    return PauliVector(u), PauliVector(w)


def _pure_half_logical(s_opposite, rowspace, n, x_side: bool) -> Optional[PauliVector]:
    """A pure-X (or pure-Z) vector commuting with all rows, outside the row
    space: its support must lie in the kernel of the opposite-type check half."""
    for x in gf2.nullspace(s_opposite):
        bits = np.concatenate([x, np.zeros(n, np.uint8)] if x_side else
                              [np.zeros(n, np.uint8), x])
        if not rowspace.contains(bits):
            return PauliVector(bits)
    return None


def _pure_partner(sx, lx_support, rowspace, n) -> Optional[PauliVector]:
    """Pure-Z partner: S^X z = 0 with lx . z = 1, via one linear solve."""
    system = np.concatenate([sx, lx_support[None, :]], axis=0)
    rhs = np.zeros(system.shape[0], np.uint8)
    rhs[-1] = 1
    try:
        z = gf2.solve(system, rhs)
    except ValueError:
        return None
    bits = np.concatenate([np.zeros(n, np.uint8), z])
    if rowspace.contains(bits):
        return None
    return PauliVector(bits)


def build_custom(rows: Sequence[PauliVector], name: str = "custom") -> CheckMatrix:
    """Validate commutation and independence, derive logicals, assemble."""
    rows = list(rows)
    if not rows:
        raise ValidationError("need at least one generator row")
    n = rows[0].n
    for i, r in enumerate(rows):
        if r.n != n:
            raise DimensionError(f"row {i} has n={r.n}, expected {n}")
    mat = np.stack([r.bits for r in rows]).astype(np.uint8)
    gram = (mat.astype(np.int64) @ _swap_halves(mat).T) % 2
    bad = np.argwhere(gram)
    if bad.size:
        i, j = bad[0]
        raise ValidationError(f"generators {i} and {j} anticommute")
    r = gf2.rank(mat)
    if r != len(rows):
        raise RankError(f"generators dependent over GF(2): rank {r} < {len(rows)}")
    if len(rows) != n - 1:
        raise UnsupportedCodeError(
            f"need n-1={n - 1} generators for one logical qubit, got {len(rows)}")
    lx, lz = derive_logicals(rows)
    return CheckMatrix(rows, lx, lz, name=name)


def is_in_stabilizer_group(code: CheckMatrix, r: PauliVector) -> bool:
    """True iff r is a product of generators, i.e. lies in their GF(2) row
    space.  Equivalent to: zero syndrome and commuting with both logicals."""
    if r.n != code.n:
        raise DimensionError(f"qubit counts differ: {r.n} vs {code.n}")
    return bool(code._rowspace.contains(r.bits))


def is_in_stabilizer_group_batch(code: CheckMatrix, residuals: np.ndarray) -> np.ndarray:
    """Vectorized membership using the syndrome/logical-product criterion:
    zero syndrome and symplectic product 0 with both logical representatives."""
    R = np.asarray(residuals, dtype=np.uint8)
    synd = syndrome_batch(code, R)
    probes = _swap_halves(np.stack([code.logical_x.bits, code.logical_z.bits]))
    prods = (R.astype(np.int32) @ probes.T.astype(np.int32)) % 2
    return ~(synd.any(axis=1) | prods.any(axis=1))


# ---------------------------------------------------------------------------
# built-in code: distance-5 (4,8,8) color code, 17 qubits
# ---------------------------------------------------------------------------

# Face table of a distance-5 patch of the square-octagon tiling, derived by
# exhaustive search over truncations of the tiling and frozen here.  Any
# single face hosts one X-type and one Z-type generator on the same support.
# Correctness is enforced by the construction-time checks (commutation,
# rank 16, k=1) and the distance-5 enumeration in the test suite, not by
# matching any particular figure.
COLOR_D5_FACES: Tuple[Tuple[int, ...], ...] = (
    (0, 1, 3, 4),
    (0, 2, 3, 6),
    (1, 4, 5, 7),
    (3, 4, 6, 7, 8, 9, 11, 12),
    (5, 7, 9, 13),
    (8, 10, 11, 14),
    (10, 14, 15, 16),
    (11, 12, 14, 15),
)

# Planar coordinates of the 17 data qubits (documentation and plotting only).
COLOR_D5_COORDS: Tuple[Tuple[int, int], ...] = (
    (1, 9), (5, 9), (0, 8), (2, 8), (4, 8), (6, 8), (1, 7), (5, 7), (1, 5),
    (5, 5), (0, 4), (2, 4), (4, 4), (6, 4), (1, 3), (1, 1), (0, 0),
)


def build_color_code_d5() -> CheckMatrix:
    """Distance-5 (4,8,8) color code: 17 qubits, 8 faces, 16 generators."""
    n = 17
    rows = []
    for face in COLOR_D5_FACES:           # X-type generators first
        x = np.zeros(n, np.uint8)
        x[list(face)] = 1
        rows.append(PauliVector.from_xz(x, np.zeros(n, np.uint8)))
    for face in COLOR_D5_FACES:           # then Z-type on the same faces
        z = np.zeros(n, np.uint8)
        z[list(face)] = 1
        rows.append(PauliVector.from_xz(np.zeros(n, np.uint8), z))
    return build_custom(rows, name="color-d5")


# ---------------------------------------------------------------------------
# built-in code: [[23,1,7]] CSS code from the binary Golay code
# ---------------------------------------------------------------------------

# h1(x) = x^12 + x^10 + x^7 + x^4 + x^3 + x^2 + x + 1, coefficients c0..c12
GOLAY_H1_COEFFS: Tuple[int, ...] = (1, 1, 1, 1, 1, 0, 0, 1, 0, 0, 1, 0, 1)


def _golay_parity_check() -> np.ndarray:
    """11x23 parity-check matrix from cyclic shifts of reversed h1."""
    rev = np.array(GOLAY_H1_COEFFS[::-1], dtype=np.uint8)
    H = np.zeros((11, 23), dtype=np.uint8)
    for s in range(11):
        H[s, s : s + 13] = rev
    return H


def _golay_parity_check_fallback() -> np.ndarray:
    """Rebuild from the degree-11 generator polynomial (x^23+1)/h1(x):
    span the code by the 12 shifts of g, then take the kernel as checks."""
    h1 = np.array(GOLAY_H1_COEFFS, dtype=np.uint8)
    # polynomial long division of x^23 + 1 by h1 over GF(2)
    dividend = np.zeros(24, dtype=np.uint8)
    dividend[0] = dividend[23] = 1
    g = np.zeros(12, dtype=np.uint8)
    for d in range(23, 11, -1):
        if dividend[d]:
            g[d - 12] = 1
            dividend[d - 12 : d + 1] ^= h1
    if dividend.any():
        raise ValidationError("h1 does not divide x^23 + 1")
    G = np.zeros((12, 23), dtype=np.uint8)
    for s in range(12):
        G[s, s : s + 12] = g
    return gf2.nullspace(G)


def _validate_golay_classical(H: np.ndarray) -> bool:
    if gf2.rank(H) != 11:
        return False
    if (H.astype(np.int64) @ H.T % 2).any():   # dual-containing test
        return False
    return classical_min_distance(gf2.nullspace(H)) == 7


def build_golay_code() -> CheckMatrix:
    """[[23,1,7]] CSS code on the self-dual-containing [23,12,7] Golay code."""
    H = _golay_parity_check()
    if not _validate_golay_classical(H):
        H = _golay_parity_check_fallback()
        if not _validate_golay_classical(H):
            raise ValidationError("Golay construction failed both routes")
    n = 23
    zeros = np.zeros(n, np.uint8)
    rows = [PauliVector.from_xz(h, zeros) for h in H]
    rows += [PauliVector.from_xz(zeros, h) for h in H]
    return build_custom(rows, name="golay")


def classical_min_distance(generator_basis: np.ndarray) -> int:
    """Minimum nonzero weight of a classical linear code given a basis of
    codewords, by full 2^k enumeration."""
    basis = gf2.to_gf2(generator_basis)
    k = basis.shape[0]
    if k > 26:
        raise ValidationError(f"2^{k} enumeration refused")
    best = basis.shape[1] + 1
    half = k // 2
    lo = _all_combinations(basis[:half])
    hi = _all_combinations(basis[half:])
    for h in hi:
        w = (lo ^ h).sum(axis=1)
        w = w[w > 0]
        if w.size:
            best = min(best, int(w.min()))
    return best


def _all_combinations(basis: np.ndarray) -> np.ndarray:
    """All 2^m GF(2) combinations of m basis rows, shape (2^m, n)."""
    m, n = basis.shape
    if m == 0:
        return np.zeros((1, n), dtype=np.uint8)
    sel = (np.arange(2 ** m)[:, None] >> np.arange(m)[None, :]) & 1
    return (sel.astype(np.uint8) @ basis) % 2


def code_distance(code: CheckMatrix) -> int:
    """Code distance by coset enumeration: minimum Pauli weight over the
    symplectic kernel of the generators, excluding the stabilizer group
    itself.  Enumerates 2^(n+1) vectors (4 logical classes x 2^(n-1))."""
    n = code.n
    kernel = gf2.nullspace(_swap_halves(code.rows_matrix))
    m = kernel.shape[0]
    if m > 26:
        raise ValidationError(f"2^{m} coset enumeration refused")
    probes = _swap_halves(np.stack([code.logical_x.bits, code.logical_z.bits]))
    half = m // 2
    lo = _all_combinations(kernel[:half])
    hi = _all_combinations(kernel[half:])
    lo_cls = lo @ probes.T.astype(np.int64) % 2
    hi_cls = hi @ probes.T.astype(np.int64) % 2
    best = n + 1
    for h, hc in zip(hi, hi_cls):
        v = lo ^ h
        logical = ((lo_cls ^ hc).any(axis=1))
        if not logical.any():
            continue
        v = v[logical]
        w = (v[:, :n] | v[:, n:]).sum(axis=1)
        best = min(best, int(w.min()))
    return best


# ---------------------------------------------------------------------------
# code definition file format
# ---------------------------------------------------------------------------

def definition_text(code: CheckMatrix) -> str:
    """Text serialization: header `n=<int> rows=<int>`, then one 2n-char
    0/1 string per generator row (X-part then Z-part)."""
    lines = [f"n={code.n} rows={code.num_rows}"]
    lines += [r.to_string() for r in code.rows]
    return "\n".join(lines) + "\n"


def parse_definition_text(text: str, name: str = "custom") -> CheckMatrix:
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines:
        raise ValidationError("empty code definition")
    header = lines[0].split()
    try:
        fields = dict(part.split("=") for part in header)
        n, nrows = int(fields["n"]), int(fields["rows"])
    except (ValueError, KeyError) as exc:
        raise ValidationError(f"bad header {lines[0]!r}") from exc
    if len(lines) - 1 != nrows:
        raise ValidationError(f"header claims {nrows} rows, found {len(lines) - 1}")
    rows = []
    for ln in lines[1:]:
        if len(ln) != 2 * n:
            raise ValidationError(f"row length {len(ln)} != 2n = {2 * n}")
        rows.append(PauliVector.from_string(ln))
    return build_custom(rows, name=name)


def definition_hash(code: CheckMatrix) -> str:
    """sha256 of the definition text; the code identity used in manifests."""
    return hashlib.sha256(definition_text(code).encode()).hexdigest()


def save_definition(code: CheckMatrix, path) -> None:
    with open(path, "w") as fh:
        fh.write(definition_text(code))


def load_definition(path, name: Optional[str] = None) -> CheckMatrix:
    with open(path) as fh:
        text = fh.read()
    return parse_definition_text(text, name=name or os.path.splitext(os.path.basename(path))[0])


BUILTIN_CODES = {
    "color-d5": build_color_code_d5,
    "golay": build_golay_code,
}


def get_code(name: str) -> CheckMatrix:
    if name not in BUILTIN_CODES:
        raise ValidationError(f"unknown code {name!r}; built-ins: {sorted(BUILTIN_CODES)}")
    return BUILTIN_CODES[name]()


__all__ = [
    "PauliVector", "Syndrome", "CheckMatrix",
    "symplectic_product", "syndrome", "syndrome_batch",
    "derive_logicals", "build_custom",
    "is_in_stabilizer_group", "is_in_stabilizer_group_batch",
    "build_color_code_d5", "build_golay_code",
    "classical_min_distance", "code_distance",
    "definition_text", "parse_definition_text", "definition_hash",
    "save_definition", "load_definition",
    "BUILTIN_CODES", "get_code",
    "COLOR_D5_FACES", "COLOR_D5_COORDS", "GOLAY_H1_COEFFS",
]
