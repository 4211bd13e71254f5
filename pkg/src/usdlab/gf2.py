"""Dense GF(2) linear algebra on uint8 arrays.

All routines treat matrices as numpy arrays with entries in {0, 1} and
work modulo 2.  Inputs are never mutated.
"""
from __future__ import annotations

from typing import List, Tuple

import numpy as np


def to_gf2(a) -> np.ndarray:
    return np.array(a, dtype=np.uint8) % 2


def rref(matrix: np.ndarray) -> Tuple[np.ndarray, List[int]]:
    """Reduced row echelon form; returns (reduced matrix, pivot columns)."""
    mat = to_gf2(matrix).copy()
    m, n = mat.shape
    pivots: List[int] = []
    row = 0
    for col in range(n):
        hits = np.nonzero(mat[row:, col])[0]
        if hits.size == 0:
            continue
        piv = row + int(hits[0])
        if piv != row:
            mat[[row, piv]] = mat[[piv, row]]
        others = np.nonzero(mat[:, col])[0]
        for r in others:
            if r != row:
                mat[r, :] ^= mat[row, :]
        pivots.append(col)
        row += 1
        if row == m:
            break
    return mat, pivots


def rank(matrix: np.ndarray) -> int:
    _, pivots = rref(matrix)
    return len(pivots)


def nullspace(matrix: np.ndarray) -> np.ndarray:
    """Basis of the right kernel, one vector per row; shape (n - rank, n)."""
    mat, pivots = rref(matrix)
    n = mat.shape[1]
    free = [c for c in range(n) if c not in pivots]
    basis = np.zeros((len(free), n), dtype=np.uint8)
    for k, fc in enumerate(free):
        basis[k, fc] = 1
        for r, pc in enumerate(pivots):
            basis[k, pc] = mat[r, fc]
    return basis


class RowSpace:
    """Row space handle supporting fast repeated membership tests."""

    def __init__(self, matrix: np.ndarray):
        self.matrix = to_gf2(matrix)
        self._rref, self._pivots = rref(self.matrix)

    @property
    def dim(self) -> int:
        return len(self._pivots)

    def reduce(self, vectors: np.ndarray) -> np.ndarray:
        """Reduce vectors (batch x n) by the stored basis; residual is zero
        exactly for members of the row space."""
        res = to_gf2(np.atleast_2d(vectors)).copy()
        for r, pc in enumerate(self._pivots):
            hit = res[:, pc] == 1
            res[hit] ^= self._rref[r]
        return res

    def contains(self, vector: np.ndarray) -> bool:
        return not self.reduce(vector).any()

    def contains_batch(self, vectors: np.ndarray) -> np.ndarray:
        return ~self.reduce(vectors).any(axis=1)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product mod 2; int accumulation, so fine up to ~2^31 columns."""
    return (to_gf2(a).astype(np.int64) @ to_gf2(b).astype(np.int64) % 2).astype(np.uint8)


def solve(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """One solution x of matrix @ x = rhs (mod 2), or raise if inconsistent."""
    mat = to_gf2(matrix)
    b = to_gf2(rhs).reshape(-1)
    if mat.shape[0] != b.shape[0]:
        raise ValueError(f"shape mismatch: {mat.shape} vs {b.shape}")
    aug, pivots = rref(np.concatenate([mat, b[:, None]], axis=1))
    n = mat.shape[1]
    if n in pivots:
        raise ValueError("inconsistent linear system over GF(2)")
    x = np.zeros(n, dtype=np.uint8)
    for r, pc in enumerate(pivots):
        x[pc] = aug[r, n]
    return x


__all__ = ["to_gf2", "rref", "rank", "nullspace", "RowSpace", "matmul", "solve"]
