"""Batch normalization layers: whole-batch BN and the two per-modality variants.

Normalization groups:
  * BN            — one group covering the whole mini-batch.
  * MBN_shared    — one group per modality sub-batch, single (gamma, beta) pair.
  * MBN_specific  — one group per modality sub-batch, (gamma, beta) per modality.

Each layer keeps exponentially averaged running statistics per group key
('ALL' for BN, 'V'/'I' otherwise) for evaluation mode, where every sample is
normalized independently with the stored statistics of its modality.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DegenerateSubset, MissingModalityTag, ShapeError
from .tensor import Tensor4, channel_mean, channel_var

__all__ = [
    "MODALITIES",
    "NormKind",
    "NormConfig",
    "NormLayer",
    "NormCache",
    "validate_tags",
]

MODALITIES = ("V", "I")


class NormKind(str, Enum):
    BN = "BN"
    MBN_SHARED = "MBN_shared"
    MBN_SPECIFIC = "MBN_specific"


@dataclass(frozen=True)
class NormConfig:
    kind: NormKind
    epsilon: float = 1e-5
    momentum_alpha: float = 0.1
    affine_bias_enabled: bool = True

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if not (0 < self.momentum_alpha <= 1):
            raise ConfigError(f"momentum_alpha must be in (0, 1], got {self.momentum_alpha}")


def validate_tags(tags: Sequence[str], n: int) -> np.ndarray:
    if tags is None:
        raise MissingModalityTag("modality tags required")
    tags = np.asarray(tags, dtype="U1")
    if tags.shape != (n,):
        raise ShapeError(f"expected {n} tags, got shape {tags.shape}")
    bad = ~np.isin(tags, MODALITIES)
    if bad.any():
        raise MissingModalityTag(f"unknown modality tag {tags[bad][0]!r}")
    return tags


@dataclass
class NormCache:
    """Intermediates saved by forward_train for the exact backward pass."""

    dims: tuple[int, int, int, int]
    xhat: np.ndarray                       # pre-affine normalized tensor, (N,C,H,W)
    groups: list[tuple[str, np.ndarray, np.ndarray]]  # (group key, sample idx, invstd per channel)
    affine_key_of: dict[str, str]          # group key -> gamma/beta key


class NormLayer:
    """One normalization layer with learnable affine and running statistics."""

    def __init__(self, config: NormConfig, num_channels: int):
        self.config = config
        self.num_channels = num_channels
        if config.kind is NormKind.MBN_SPECIFIC:
            affine_keys = list(MODALITIES)
        else:
            affine_keys = ["shared"]
        stat_keys = ["ALL"] if config.kind is NormKind.BN else list(MODALITIES)
        self.gamma = {k: np.ones(num_channels) for k in affine_keys}
        self.beta = {k: np.zeros(num_channels) for k in affine_keys}
        self.running_mean = {k: np.zeros(num_channels) for k in stat_keys}
        self.running_var = {k: np.ones(num_channels) for k in stat_keys}
        self.t = 0

    # -- group bookkeeping ------------------------------------------------

    def _train_groups(self, n: int, tags: Optional[Sequence[str]]) -> list[tuple[str, np.ndarray]]:
        if self.config.kind is NormKind.BN:
            return [("ALL", np.arange(n))]
        tags = validate_tags(tags, n)
        groups = []
        for m in MODALITIES:
            idx = np.flatnonzero(tags == m)
            if idx.size == 0:
                # Single-modality batch: per-modality normalization degenerates
                # to whole-batch normalization over the present sub-batch.
                warnings.warn(f"modality {m} missing from training batch; "
                              "normalizing the present modality only")
                continue
            groups.append((m, idx))
        if not groups:
            raise DegenerateSubset("batch contains no valid modality group")
        return groups

    def _affine_key(self, group_key: str) -> str:
        if self.config.kind is NormKind.MBN_SPECIFIC:
            return group_key
        return "shared"

    # -- forward ----------------------------------------------------------

    def forward_train(self, x: Tensor4, tags: Optional[Sequence[str]] = None) -> tuple[Tensor4, NormCache]:
        """Normalize per group with batch statistics; update running stats."""
        n, c, h, w = x.dims
        if c != self.num_channels:
            raise ShapeError(f"expected {self.num_channels} channels, got {c}")
        groups = self._train_groups(n, tags)
        eps = self.config.epsilon
        xhat = np.empty_like(x.data)
        y = np.empty_like(x.data)
        cache_groups = []
        affine_key_of = {}
        for key, idx in groups:
            if idx.size * h * w == 1:
                warnings.warn(f"normalization group {key!r} holds a single scalar; output is 0 pre-affine")
            mu = channel_mean(x, idx)
            var = channel_var(x, idx, mu)
            invstd = 1.0 / np.sqrt(var + eps)
            xhat[idx] = (x.data[idx] - mu[None, :, None, None]) * invstd[None, :, None, None]
            ak = self._affine_key(key)
            y[idx] = self.gamma[ak][None, :, None, None] * xhat[idx]
            if self.config.affine_bias_enabled:
                y[idx] += self.beta[ak][None, :, None, None]
            self.update_running_stats(mu, var, key)
            cache_groups.append((key, idx, invstd))
            affine_key_of[key] = ak
        self.t += 1
        return Tensor4(y), NormCache((n, c, h, w), xhat, cache_groups, affine_key_of)

    def forward_eval(self, x: Tensor4, tags: Optional[Sequence[str]] = None) -> Tensor4:
        """Normalize each sample with its modality's running statistics."""
        n, c, h, w = x.dims
        if c != self.num_channels:
            raise ShapeError(f"expected {self.num_channels} channels, got {c}")
        eps = self.config.epsilon
        y = np.empty_like(x.data)
        if self.config.kind is NormKind.BN:
            sample_keys = [("ALL", np.arange(n))]
        else:
            tags = validate_tags(tags, n)
            sample_keys = [(m, np.flatnonzero(tags == m)) for m in MODALITIES]
        for key, idx in sample_keys:
            if idx.size == 0:
                continue
            invstd = 1.0 / np.sqrt(self.running_var[key] + eps)
            xh = (x.data[idx] - self.running_mean[key][None, :, None, None]) * invstd[None, :, None, None]
            ak = self._affine_key(key)
            out = self.gamma[ak][None, :, None, None] * xh
            if self.config.affine_bias_enabled:
                out = out + self.beta[ak][None, :, None, None]
            y[idx] = out
        return Tensor4(y)

    # -- backward ---------------------------------------------------------

    def backward(self, cache: NormCache, dy: Tensor4) -> tuple[Tensor4, dict[str, np.ndarray]]:
        """Exact gradients, with group mean and variance treated as functions of x.

        Returns (dL/dx, grads) where grads maps 'gamma@<key>' / 'beta@<key>'
        to per-channel gradient vectors. Bias gradients are zero when the
        affine bias is disabled.
        """
        if dy.dims != cache.dims:
            raise ShapeError(f"dy dims {dy.dims} do not match cache dims {cache.dims}")
        xhat = cache.xhat
        dx = np.empty_like(dy.data)
        grads = {}
        for ak in self.gamma:
            grads[f"gamma@{ak}"] = np.zeros(self.num_channels)
            grads[f"beta@{ak}"] = np.zeros(self.num_channels)
        for key, idx, invstd in cache.groups:
            ak = cache.affine_key_of[key]
            dy_g = dy.data[idx]
            xhat_g = xhat[idx]
            grads[f"gamma@{ak}"] += np.sum(dy_g * xhat_g, axis=(0, 2, 3))
            if self.config.affine_bias_enabled:
                grads[f"beta@{ak}"] += np.sum(dy_g, axis=(0, 2, 3))
            m = dy_g.shape[0] * dy_g.shape[2] * dy_g.shape[3]
            dxhat = dy_g * self.gamma[ak][None, :, None, None]
            sum_dxhat = np.sum(dxhat, axis=(0, 2, 3))
            sum_dxhat_xhat = np.sum(dxhat * xhat_g, axis=(0, 2, 3))
            dx[idx] = (invstd[None, :, None, None] / m) * (
                m * dxhat
                - sum_dxhat[None, :, None, None]
                - xhat_g * sum_dxhat_xhat[None, :, None, None]
            )
        return Tensor4(dx), grads

    # -- statistics and parameters ----------------------------------------

    def update_running_stats(self, batch_mean: np.ndarray, batch_var: np.ndarray, key: str) -> None:
        """Exponential moving average update for one group key."""
        a = self.config.momentum_alpha
        if batch_mean.shape != (self.num_channels,) or batch_var.shape != (self.num_channels,):
            raise ShapeError("running-stat update vectors must have length C")
        self.running_mean[key] = (1 - a) * self.running_mean[key] + a * batch_mean
        self.running_var[key] = (1 - a) * self.running_var[key] + a * batch_var

    def tie_parameters(self) -> "NormLayer":
        """Copy the V affine pair onto I so both modalities share parameters."""
        if self.config.kind is not NormKind.MBN_SPECIFIC:
            raise ConfigError("tie_parameters applies only to MBN_specific layers")
        self.gamma["I"] = self.gamma["V"].copy()
        self.beta["I"] = self.beta["V"].copy()
        return self

    def parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for k in self.gamma:
            out[f"gamma@{k}"] = self.gamma[k]
            out[f"beta@{k}"] = self.beta[k]
        return out

    def set_parameter(self, name: str, value: np.ndarray) -> None:
        kind, key = name.split("@")
        store = self.gamma if kind == "gamma" else self.beta
        if key not in store:
            raise ConfigError(f"unknown parameter {name!r}")
        store[key] = np.asarray(value, dtype=np.float64).copy()

    def statistics(self) -> dict[str, np.ndarray]:
        out = {}
        for k in self.running_mean:
            out[f"running_mean@{k}"] = self.running_mean[k]
            out[f"running_var@{k}"] = self.running_var[k]
        return out
