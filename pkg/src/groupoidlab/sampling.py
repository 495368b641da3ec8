"""Seeded low-discrepancy sampling.

Sample ``i`` of a stream depends only on ``(seed, stream, i)``, so results do
not change with batching or execution order.
"""
from __future__ import annotations

import zlib

import numpy as np
from scipy.stats import qmc


def unit_samples(seed: int, stream: str, n: int, dim: int, start: int = 0) -> np.ndarray:
    """Points ``start .. start+n-1`` of a scrambled Halton sequence in [0, 1)^dim."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(stream.encode())])
    engine = qmc.Halton(d=dim, scramble=True, seed=np.random.default_rng(ss))
    if start:
        engine.fast_forward(start)
    return engine.random(n)


def box_samples(seed: int, stream: str, n: int, lower, upper) -> np.ndarray:
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    u = unit_samples(seed, stream, n, lower.size)
    return lower + u * (upper - lower)


def centered_samples(seed: int, stream: str, n: int, dim: int, radius: float,
                     center=0.0) -> np.ndarray:
    """Uniform low-discrepancy points in the cube ``center +- radius``."""
    u = unit_samples(seed, stream, n, dim)
    return np.asarray(center, dtype=float) + radius * (2.0 * u - 1.0)
