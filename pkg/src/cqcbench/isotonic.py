"""Exact nondecreasing L2 projection via pool-adjacent-violators.

The projection is the unique minimiser of the squared Euclidean distance to
the input over all nondecreasing sequences. Pooling is exact (block means),
not an iterative approximation, so block means -- and hence the global mean --
are preserved to float precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class IsotonicResult:
    projected: np.ndarray
    input_length: int


def pava_project(values) -> IsotonicResult:
    """Project a sequence onto the cone of nondecreasing sequences.

    Left-to-right stack implementation: each new value starts a block, and
    adjacent blocks merge (weighted mean) while they violate monotonicity.
    Ties produce equal-valued blocks.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 1:
        raise ValueError("input must be a one-dimensional sequence")
    if v.size == 0:
        raise ValueError("input must be nonempty")

    means = np.empty(v.size)
    counts = np.empty(v.size, dtype=np.intp)
    top = -1
    for val in v:
        top += 1
        means[top] = val
        counts[top] = 1
        while top > 0 and means[top - 1] > means[top]:
            merged = counts[top - 1] + counts[top]
            means[top - 1] = (
                counts[top - 1] * means[top - 1] + counts[top] * means[top]
            ) / merged
            counts[top - 1] = merged
            top -= 1

    projected = np.repeat(means[: top + 1], counts[: top + 1])
    return IsotonicResult(projected=projected, input_length=v.size)
