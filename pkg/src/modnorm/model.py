"""Desk-scale two-modality retrieval model with hand-derived backpropagation.

Architecture: S stages of (3x3 conv, norm, ReLU, 2x2 average pool), global
average pooling, a bias-free normalization head producing the embedding, and
a bias-free linear classifier used only during training. Backbone and head
normalization kinds are configured independently so every ablation row
(baseline / shared / specific / mixed) is expressible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import ModalityBatch
from .errors import ConfigError, ShapeError
from .losses import circle_loss, softmax_loss, triplet_loss
from .norm import NormConfig, NormKind, NormLayer
from .tensor import Tensor4, global_avg_pool

__all__ = ["ModelConfig", "Model", "build_model"]

_OFFSETS = [(di, dj) for di in range(3) for dj in range(3)]


@dataclass(frozen=True)
class ModelConfig:
    backbone_norm_kind: NormKind = NormKind.BN
    head_norm_kind: NormKind = NormKind.BN
    stage_widths: tuple[int, ...] = (16, 32, 64)
    embedding_dim: int = 64
    head_bias_enabled: bool = False
    loss_kind: str = "circle"               # "circle" | "softmax_plus_triplet"
    triplet_margin: float = 0.3
    circle_margin: float = 0.25
    circle_scale: float = 64.0
    norm_epsilon: float = 1e-5
    norm_momentum: float = 0.1

    def __post_init__(self):
        if self.embedding_dim != self.stage_widths[-1]:
            raise ConfigError("embedding_dim must equal the last stage width")
        if self.loss_kind not in ("circle", "softmax_plus_triplet"):
            raise ConfigError(f"unknown loss kind {self.loss_kind!r}")
        if any(wd < 1 for wd in self.stage_widths):
            raise ConfigError("stage widths must be >= 1")


# -- primitive layers -----------------------------------------------------


def _im2col(x: np.ndarray) -> np.ndarray:
    """(N, C, H, W) -> (N, C*9, H*W) patches of the 3x3 neighborhood, pad 1."""
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.empty((n, c, 9, h * w))
    for k, (di, dj) in enumerate(_OFFSETS):
        cols[:, :, k] = xp[:, :, di:di + h, dj:dj + w].reshape(n, c, h * w)
    return cols.reshape(n, c * 9, h * w)


def _col2im(dcols: np.ndarray, shape: tuple[int, int, int, int]) -> np.ndarray:
    n, c, h, w = shape
    dcols = dcols.reshape(n, c, 9, h * w)
    dxp = np.zeros((n, c, h + 2, w + 2))
    for k, (di, dj) in enumerate(_OFFSETS):
        dxp[:, :, di:di + h, dj:dj + w] += dcols[:, :, k].reshape(n, c, h, w)
    return dxp[:, :, 1:-1, 1:-1]


def _conv_forward(x: np.ndarray, weight: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, c, h, w = x.shape
    c_out = weight.shape[0]
    cols = _im2col(x)
    wm = weight.reshape(c_out, -1)
    y = np.matmul(wm, cols).reshape(n, c_out, h, w)
    return y, cols


def _conv_backward(dy: np.ndarray, cols: np.ndarray, weight: np.ndarray,
                   x_shape: tuple[int, int, int, int]) -> tuple[np.ndarray, np.ndarray]:
    n, c_out, h, w = dy.shape
    dym = dy.reshape(n, c_out, h * w)
    dweight = np.einsum("nos,ncs->oc", dym, cols).reshape(weight.shape)
    dcols = np.matmul(weight.reshape(c_out, -1).T, dym)
    return _col2im(dcols, x_shape), dweight


def _pool_forward(x: np.ndarray) -> np.ndarray:
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"2x2 pooling needs even spatial dims, got {h}x{w}")
    return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def _pool_backward(dy: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(dy, 2, axis=2), 2, axis=3) / 4.0


# -- model ----------------------------------------------------------------


class Model:
    def __init__(self, config: ModelConfig, in_channels: int, class_ids: np.ndarray, seed: int):
        self.config = config
        self.in_channels = in_channels
        self.class_ids = np.sort(np.asarray(class_ids))
        self._class_index = {int(cid): i for i, cid in enumerate(self.class_ids)}
        rng = np.random.default_rng(seed)

        self.conv_weights: list[np.ndarray] = []
        self.stage_norms: list[NormLayer] = []
        prev = in_channels
        for width in config.stage_widths:
            fan_in = prev * 9
            self.conv_weights.append(rng.standard_normal((width, prev, 3, 3)) * np.sqrt(2.0 / fan_in))
            self.stage_norms.append(NormLayer(
                NormConfig(config.backbone_norm_kind, config.norm_epsilon, config.norm_momentum), width))
            prev = width
        self.head_norm = NormLayer(
            NormConfig(config.head_norm_kind, config.norm_epsilon, config.norm_momentum,
                       affine_bias_enabled=config.head_bias_enabled),
            config.embedding_dim)
        self.fc_weight = rng.standard_normal((self.class_ids.size, config.embedding_dim)) \
            * np.sqrt(1.0 / config.embedding_dim)

    @property
    def num_classes(self) -> int:
        return self.class_ids.size

    def class_indices(self, identities: np.ndarray) -> np.ndarray:
        try:
            return np.array([self._class_index[int(i)] for i in identities], dtype=np.int64)
        except KeyError as exc:
            raise ConfigError(f"identity {exc} not in the training class set") from exc

    # -- parameter access -------------------------------------------------

    def parameters(self) -> dict[str, np.ndarray]:
        params = {}
        for i, w in enumerate(self.conv_weights):
            params[f"stage{i + 1}.conv.weight"] = w
        for i, layer in enumerate(self.stage_norms):
            for name, arr in layer.parameters().items():
                params[f"stage{i + 1}.norm.{name}"] = arr
        for name, arr in self.head_norm.parameters().items():
            params[f"head.norm.{name}"] = arr
        params["fc.weight"] = self.fc_weight
        return params

    def norm_parameter_names(self) -> set[str]:
        return {name for name in self.parameters() if ".norm." in name}

    def norm_layers(self) -> dict[str, NormLayer]:
        layers = {f"stage{i + 1}.norm": layer for i, layer in enumerate(self.stage_norms)}
        layers["head.norm"] = self.head_norm
        return layers

    # -- forward / backward ------------------------------------------------

    def _forward(self, batch: ModalityBatch, train: bool, collect: bool = False):
        x = batch.images.data
        tags = batch.tags
        caches = []
        taps = [("input", Tensor4(x))] if collect else None
        for i, (weight, norm) in enumerate(zip(self.conv_weights, self.stage_norms)):
            x_shape = x.shape
            y, cols = _conv_forward(x, weight)
            if train:
                normed, ncache = norm.forward_train(Tensor4(y), tags)
            else:
                normed, ncache = norm.forward_eval(Tensor4(y), tags), None
            if collect:
                taps.append((f"stage{i + 1}", Tensor4(ncache.xhat.copy()) if ncache is not None else normed))
            relu_mask = normed.data > 0
            activated = normed.data * relu_mask
            pooled = _pool_forward(activated)
            caches.append({"x_shape": x_shape, "cols": cols, "ncache": ncache,
                           "relu_mask": relu_mask, "pre_pool_shape": activated.shape})
            x = pooled
        pooled_shape = x.shape
        emb_in = global_avg_pool(Tensor4(x))  # (N, D)
        emb4 = Tensor4(emb_in[:, :, None, None])
        if train:
            head_out, head_cache = self.head_norm.forward_train(emb4, tags)
        else:
            head_out, head_cache = self.head_norm.forward_eval(emb4, tags), None
        if collect:
            taps.append(("head", Tensor4(head_cache.xhat.copy()) if head_cache is not None else head_out))
        emb = head_out.data[:, :, 0, 0]
        cache = {"stages": caches, "pooled_shape": pooled_shape, "head_cache": head_cache, "emb": emb}
        return emb, cache, taps

    def embed(self, batch: ModalityBatch, mode: str = "eval"):
        """Post-head-norm embeddings; in train mode also classifier logits."""
        if mode not in ("train", "eval"):
            raise ConfigError(f"unknown mode {mode!r}")
        emb, cache, _ = self._forward(batch, train=(mode == "train"))
        if mode == "train":
            logits = emb @ self.fc_weight.T
            return emb, logits, cache
        return emb

    def backward(self, cache, demb: np.ndarray) -> dict[str, np.ndarray]:
        """Backpropagate a gradient on the embeddings through the network."""
        grads: dict[str, np.ndarray] = {}
        d4, head_grads = self.head_norm.backward(cache["head_cache"], Tensor4(demb[:, :, None, None]))
        for name, g in head_grads.items():
            grads[f"head.norm.{name}"] = g
        # undo global average pooling
        n, c, h, w = cache["pooled_shape"]
        dx = np.broadcast_to(d4.data[:, :, 0, 0][:, :, None, None] / (h * w), (n, c, h, w)).copy()
        for i in reversed(range(len(self.conv_weights))):
            sc = cache["stages"][i]
            dx = _pool_backward(dx)
            dx = dx * sc["relu_mask"]
            dnormed, norm_grads = self.stage_norms[i].backward(sc["ncache"], Tensor4(dx))
            for name, g in norm_grads.items():
                grads[f"stage{i + 1}.norm.{name}"] = g
            dx, dweight = _conv_backward(dnormed.data, sc["cols"], self.conv_weights[i], sc["x_shape"])
            grads[f"stage{i + 1}.conv.weight"] = dweight
        grads["input"] = dx  # kept for gradient checking; not a parameter
        return grads

    def loss_and_grads(self, batch: ModalityBatch) -> tuple[dict[str, float], dict[str, np.ndarray]]:
        """Train-mode forward, loss per configured kind, full parameter grads."""
        emb, logits, cache = self.embed(batch, mode="train")
        labels = self.class_indices(batch.identities)
        cfg = self.config
        if cfg.loss_kind == "circle":
            loss, demb, dfc = circle_loss(emb, self.fc_weight, labels,
                                          margin=cfg.circle_margin, scale=cfg.circle_scale)
            losses = {"loss": loss, "circle": loss}
        else:
            ce, dlogits = softmax_loss(logits, labels)
            tri, demb = triplet_loss(emb, batch.identities, margin=cfg.triplet_margin)
            demb = demb + dlogits @ self.fc_weight
            dfc = dlogits.T @ emb
            losses = {"loss": ce + tri, "softmax": ce, "triplet": tri}
        grads = self.backward(cache, demb)
        grads.pop("input")
        grads["fc.weight"] = dfc
        return losses, grads

    # -- analysis ----------------------------------------------------------

    def stage_taps(self, batch: ModalityBatch, pre_affine: bool = True,
                   train: bool = True) -> list[tuple[str, Tensor4]]:
        """Activations at the input and after every normalization layer.

        Train-mode taps are pre-affine by default (the normalized values
        before gamma/beta); running statistics are restored afterwards so the
        call is side-effect free.
        """
        snapshot = self._stats_snapshot()
        try:
            if pre_affine:
                _, _, taps = self._forward(batch, train=train, collect=True)
            else:
                taps = self._post_affine_taps(batch, train)
        finally:
            self._stats_restore(snapshot)
        return taps

    def _post_affine_taps(self, batch: ModalityBatch, train: bool) -> list[tuple[str, Tensor4]]:
        x = batch.images.data
        tags = batch.tags
        taps = [("input", Tensor4(x))]
        for i, (weight, norm) in enumerate(zip(self.conv_weights, self.stage_norms)):
            y, _ = _conv_forward(x, weight)
            normed = norm.forward_train(Tensor4(y), tags)[0] if train else norm.forward_eval(Tensor4(y), tags)
            taps.append((f"stage{i + 1}", normed))
            x = _pool_forward(normed.data * (normed.data > 0))
        emb4 = Tensor4(global_avg_pool(Tensor4(x))[:, :, None, None])
        head = self.head_norm.forward_train(emb4, tags)[0] if train else self.head_norm.forward_eval(emb4, tags)
        taps.append(("head", head))
        return taps

    def _stats_snapshot(self):
        snap = []
        for layer in [*self.stage_norms, self.head_norm]:
            snap.append(({k: v.copy() for k, v in layer.running_mean.items()},
                         {k: v.copy() for k, v in layer.running_var.items()},
                         layer.t))
        return snap

    def _stats_restore(self, snap) -> None:
        for layer, (mean, var, t) in zip([*self.stage_norms, self.head_norm], snap):
            layer.running_mean = mean
            layer.running_var = var
            layer.t = t


def build_model(config: ModelConfig, in_channels: int, class_ids: np.ndarray, seed: int) -> Model:
    """Deterministically initialized model; same seed gives identical parameters."""
    return Model(config, in_channels, class_ids, seed)
