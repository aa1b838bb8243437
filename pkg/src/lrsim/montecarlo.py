"""Blocked Monte Carlo driver.

Trials are processed in fixed-size blocks, block ``b`` drawing from
``derive_stream(policy, tag, b)``. Results are concatenated in block order,
so output is bit-identical for any number of workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import RngPolicy, derive_stream

BLOCK_SIZE = 500


@dataclass(frozen=True)
class SampleStats:
    mean: float
    std_error: float
    trials: int

    @classmethod
    def of(cls, samples: np.ndarray) -> "SampleStats":
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        se = float(samples.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return cls(float(samples.mean()), se, n)


def run_trials(
    fn: Callable[[np.random.Generator, int], np.ndarray],
    trials: int,
    rng: RngPolicy | np.random.Generator,
    tag: str = "",
    workers: int = 1,
) -> np.ndarray:
    """Evaluate ``fn(stream, count)`` over all blocks and stack the per-trial outputs.

    A bare ``Generator`` is used as one stream for all trials (no blocking).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if isinstance(rng, np.random.Generator):
        return np.asarray(fn(rng, trials))

    blocks = [(b, min(BLOCK_SIZE, trials - b * BLOCK_SIZE)) for b in range(-(-trials // BLOCK_SIZE))]

    def work(block):
        index, count = block
        return np.asarray(fn(derive_stream(rng, tag, index), count))

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    return np.concatenate(parts, axis=0)


def complex_normal(rng: np.random.Generator, shape, variance: float | np.ndarray = 1.0) -> np.ndarray:
    """Circularly symmetric complex Gaussian samples with the given variance."""
    z = rng.standard_normal(shape + (2,) if isinstance(shape, tuple) else (shape, 2))
    z = (z[..., 0] + 1j * z[..., 1]) * np.sqrt(0.5)
    return z * np.sqrt(variance)
