"""Similarity ordering of a batch of systems by their generative parameters.

Greedy nearest-neighbor chaining on the Frobenius distance between parameter
matrices; an optional grouped variant caps the quadratic cost for large
batches by pre-bucketing along the first principal coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ParameterMatrix:
    """Generative parameters of one system (matrix or vector) plus its batch index."""

    values: np.ndarray
    problem_id: int = 0

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=np.float64))
        if not np.all(np.isfinite(v)):
            raise ValueError("parameter entries must be finite")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()


def frobenius_distance(P: ParameterMatrix, Q: ParameterMatrix) -> float:
    """||P - Q||_F."""
    if P.values.shape != Q.values.shape:
        raise ValueError(
            f"parameter shape mismatch: {P.values.shape} vs {Q.values.shape}"
        )
    return float(np.linalg.norm(P.values - Q.values, "fro"))


def _stacked(params: Sequence[ParameterMatrix]) -> np.ndarray:
    if not params:
        raise ValueError("empty parameter batch")
    shape = params[0].values.shape
    for p in params[1:]:
        if p.values.shape != shape:
            raise ValueError("inconsistent parameter shapes in batch")
    return np.stack([p.flat for p in params])


def _greedy_chain(flat: np.ndarray, indices: np.ndarray) -> list[int]:
    """Greedy nearest-neighbor order over ``indices``, seeded at indices[0].

    Ties go to the smallest index; ``indices`` must be ascending for that
    tie-break to be global.
    """
    remaining = list(indices[1:])
    order = [int(indices[0])]
    while remaining:
        rem = np.asarray(remaining)
        d = np.linalg.norm(flat[rem] - flat[order[-1]], axis=1)
        pick = int(np.argmin(d))  # first minimum = smallest index
        order.append(int(rem[pick]))
        del remaining[pick]
    return order


def greedy_sort(params: Sequence[ParameterMatrix]) -> list[int]:
    """Order the batch so consecutive parameter matrices are close.

    Starts at index 0 and repeatedly appends the unvisited index with the
    smallest Frobenius distance to the previous pick (ties to the smallest
    index). Returns a permutation of range(len(params)).
    """
    flat = _stacked(params)
    return _greedy_chain(flat, np.arange(len(params)))


def grouped_sort(params: Sequence[ParameterMatrix], group_size: int) -> list[int]:
    """Greedy sort within coarse groups; O(N * group_size) distance evaluations.

    Indices are bucketed into contiguous groups of at most ``group_size`` by
    their first principal coordinate, each group is greedy-sorted (seeded at
    its smallest original index), and the groups are concatenated.
    """
    if group_size < 2:
        raise ValueError("group_size must be >= 2")
    flat = _stacked(params)
    n = len(params)
    if n <= group_size:
        return _greedy_chain(flat, np.arange(n))

    centered = flat - flat.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    direction = vt[0]
    # deterministic sign: largest-magnitude component made positive
    lead = np.argmax(np.abs(direction))
    if direction[lead] < 0:
        direction = -direction
    key = centered @ direction
    by_key = np.argsort(key, kind="stable")

    order: list[int] = []
    for start in range(0, n, group_size):
        group = np.sort(by_key[start : start + group_size])
        order.extend(_greedy_chain(flat, group))
    return order
