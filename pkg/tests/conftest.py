"""Shared test helpers: finite-difference oracles and rng construction."""
from __future__ import annotations

import numpy as np
import pytest


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def fd_gradient(fn, arrays, index, h=1e-5):
    """Central finite-difference gradient of scalar fn w.r.t. arrays[index].

    fn receives the list of float64 arrays and returns a python float.
    This is the independent oracle for every autodiff check.
    """
    base = [np.array(a, dtype=np.float64) for a in arrays]
    target = base[index]
    grad = np.zeros_like(target)
    it = np.nditer(target, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = target[idx]
        target[idx] = orig + h
        up = fn(base)
        target[idx] = orig - h
        down = fn(base)
        target[idx] = orig
        grad[idx] = (up - down) / (2 * h)
        it.iternext()
    return grad


def relative_error(approx: np.ndarray, exact: np.ndarray) -> float:
    num = np.abs(approx - exact)
    den = np.maximum(np.abs(exact), 1.0)
    return float((num / den).max()) if approx.size else 0.0


@pytest.fixture
def rng():
    return make_rng(11)
