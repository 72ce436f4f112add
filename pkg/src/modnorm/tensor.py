"""Minimal dense rank-4 tensor and the channel reductions the normalization math needs.

Data lives in a contiguous float64 numpy array in (N, C, H, W) layout. All
cross-sample reductions sum in ascending value order: the summands are sorted
before accumulation, which makes every reduction bit-reproducible *and*
invariant to permuting the samples that feed it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateSubset, ShapeError

__all__ = ["Tensor4", "channel_mean", "channel_var", "global_avg_pool", "sorted_sum"]


@dataclass(frozen=True)
class Tensor4:
    """Dense (N, C, H, W) float64 tensor."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.ndim != 4:
            raise ShapeError(f"expected rank-4 data, got rank {arr.ndim}")
        object.__setattr__(self, "data", arr)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def c(self) -> int:
        return self.data.shape[1]

    @property
    def spatial_size(self) -> int:
        return self.data.shape[2] * self.data.shape[3]

    @classmethod
    def zeros(cls, n: int, c: int, h: int, w: int) -> "Tensor4":
        return cls(np.zeros((n, c, h, w)))


def sorted_sum(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """Sum along ``axis`` in ascending value order.

    The sorted order is canonical for any permutation of the inputs, so the
    result is bitwise identical under sample reshuffling.
    """
    return np.sum(np.sort(values, axis=axis), axis=axis)


def _check_subset(x: Tensor4, subset: Sequence[int]) -> np.ndarray:
    idx = np.asarray(list(subset), dtype=np.intp)
    if idx.size == 0:
        raise DegenerateSubset("empty sample subset")
    if x.spatial_size == 0:
        raise DegenerateSubset("zero spatial size")
    if idx.min() < 0 or idx.max() >= x.n:
        raise IndexError(f"sample index out of range for N={x.n}")
    return idx


def channel_mean(x: Tensor4, subset: Iterable[int]) -> np.ndarray:
    """Per-channel mean of x over (n in subset, h, w); denominator |subset|*H*W."""
    idx = _check_subset(x, tuple(subset))
    vals = x.data[idx].transpose(1, 0, 2, 3).reshape(x.c, -1)
    return sorted_sum(vals) / vals.shape[1]


def channel_var(x: Tensor4, subset: Iterable[int], mean: np.ndarray) -> np.ndarray:
    """Biased per-channel variance over the subset, around the given mean.

    Two-pass form: deviations from the explicit mean, then their squared sum.
    """
    idx = _check_subset(x, tuple(subset))
    mean = np.asarray(mean, dtype=np.float64)
    if mean.shape != (x.c,):
        raise ShapeError(f"mean must have length C={x.c}, got shape {mean.shape}")
    vals = x.data[idx].transpose(1, 0, 2, 3).reshape(x.c, -1)
    dev2 = (vals - mean[:, None]) ** 2
    return sorted_sum(dev2) / vals.shape[1]


def global_avg_pool(x: Tensor4) -> np.ndarray:
    """(N, C) matrix of spatial means."""
    if x.spatial_size == 0:
        raise DegenerateSubset("zero spatial size")
    return x.data.mean(axis=(2, 3))
