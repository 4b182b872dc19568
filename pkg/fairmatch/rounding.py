# Copyright 2024 Fairmatch developers.
# See the top-level LICENSE file for details.
# SPDX-License-Identifier: Apache-2.0
"""Dependent rounding of fractional vectors and seeded randomness helpers."""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "INTEGRAL_TOLERANCE",
    "RoundedVector",
    "dependent_round",
    "random_permutation",
    "spawn_generators",
]

INTEGRAL_TOLERANCE = 1e-12
"Distance from 0 or 1 below which an entry counts as rounded"


@dataclass(frozen=True)
class RoundedVector:
    bits: np.ndarray
    "Binary outcome aligned to the input indices"

    input_sum: float
    "Sum of the fractional input"

    def __post_init__(self):
        total = int(self.bits.sum())
        assert math.floor(self.input_sum + INTEGRAL_TOLERANCE) <= total
        assert total <= math.ceil(self.input_sum - INTEGRAL_TOLERANCE)


def _is_fractional(y: float) -> bool:
    return INTEGRAL_TOLERANCE < y < 1 - INTEGRAL_TOLERANCE


def dependent_round(x, rng: np.random.Generator) -> RoundedVector:
    """Round a vector in [0, 1]^n to a binary vector.

    Each output bit is one with probability equal to its input; the number of
    ones is the floor or ceiling of the input sum; and any set of bits is
    negatively correlated. Pairs of fractional entries are repeatedly shifted
    against each other (conserving their sum) until one of them is integral.
    """
    y = np.array(x, dtype=float)
    if y.ndim != 1:
        raise ValueError("dependent rounding needs a one-dimensional vector")
    if np.any((y < 0) | (y > 1)) or not np.all(np.isfinite(y)):
        raise ValueError(f"entries must lie in [0, 1]: {y}")

    frac = [i for i in range(len(y)) if _is_fractional(y[i])]
    while len(frac) >= 2:
        i, j = frac[0], frac[1]
        before = y[i] + y[j]
        a = min(1 - y[i], y[j])
        b = min(y[i], 1 - y[j])
        if rng.random() < b / (a + b):
            y[i] += a
            y[j] -= a
        else:
            y[i] -= b
            y[j] += b
        assert abs(y[i] + y[j] - before) < 1e-9
        frac = [k for k in (i, j) if _is_fractional(y[k])] + frac[2:]

    if frac:
        (i,) = frac
        y[i] = 1.0 if rng.random() < y[i] else 0.0

    bits = (y > 0.5).astype(np.int8)
    return RoundedVector(bits=bits, input_sum=float(np.sum(x)))


def random_permutation(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random ordering of ``range(n)``."""
    if n < 0:
        raise ValueError("permutation length must be nonnegative")
    return rng.permutation(n)


def spawn_generators(
    seed: Optional[int], n: int
) -> list[np.random.Generator]:
    """Independent child generators derived from one root seed."""
    root = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in root.spawn(n)]
