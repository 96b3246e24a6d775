"""Shared helpers: random positive depth instances and gradient checking."""

from __future__ import annotations

import numpy as np
import pytest


def rand_depth(rng: np.random.Generator, shape=(8, 8), lo=0.5, hi=80.0) -> np.ndarray:
    return rng.uniform(lo, hi, shape)


def rand_mask(rng: np.random.Generator, shape=(8, 8), p_valid=0.85) -> np.ndarray:
    mask = rng.uniform(size=shape) < p_valid
    if not mask.any():
        mask.flat[rng.integers(mask.size)] = True
    return mask


def central_diff(fn, x0: np.ndarray, rel_step: float = 1e-5) -> np.ndarray:
    """Dense central-difference gradient of a scalar function of an array."""
    grad = np.zeros_like(x0, dtype=np.float64)
    it = np.nditer(x0, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        h = rel_step * max(abs(float(x0[idx])), 1.0)
        xp = x0.copy()
        xp[idx] += h
        xm = x0.copy()
        xm[idx] -= h
        grad[idx] = (fn(xp) - fn(xm)) / (2.0 * h)
    return grad


def rel_grad_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-8)
    return float(np.abs(analytic - numeric).max() / scale)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
