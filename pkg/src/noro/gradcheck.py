"""Central finite-difference oracles for verifying reverse-mode gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np


def fd_gradient(f: Callable[[np.ndarray], float], x: np.ndarray,
                h: float = 1e-4, coords=None) -> np.ndarray:
    """Central-difference gradient of a scalar function at x.

    coords optionally restricts evaluation to a subset of flat indices
    (entries elsewhere are returned as nan so callers cannot compare them
    by accident).
    """
    x = np.asarray(x, dtype=np.float64)
    flat = x.ravel().copy()
    if coords is None:
        coords = range(flat.size)
        grad = np.zeros(flat.size)
    else:
        grad = np.full(flat.size, np.nan)
    for i in coords:
        orig = flat[i]
        flat[i] = orig + h
        fp = f(flat.reshape(x.shape))
        flat[i] = orig - h
        fm = f(flat.reshape(x.shape))
        flat[i] = orig
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(x.shape)


def sample_coords(rng: np.random.Generator, size: int, max_coords: int) -> np.ndarray:
    """Pick up to max_coords distinct flat indices to probe."""
    if size <= max_coords:
        return np.arange(size)
    return rng.choice(size, size=max_coords, replace=False)


def max_rel_error(got: np.ndarray, want: np.ndarray, floor: float = 1e-6) -> float:
    """Elementwise relative error with a small-denominator floor.

    nan entries in `want` (unprobed coordinates) are skipped.
    """
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    mask = ~np.isnan(want)
    denom = np.maximum(np.maximum(np.abs(got[mask]), np.abs(want[mask])), floor)
    if denom.size == 0:
        return 0.0
    return float(np.max(np.abs(got[mask] - want[mask]) / denom))
