"""Training losses with hand-derived gradients.

All losses take float64 arrays and return the scalar loss plus gradients with
respect to every differentiable input, so they can be chained into the manual
backward pass of the model.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateBatch, NormalizationError, ShapeError

__all__ = ["softmax_loss", "triplet_loss", "circle_loss"]


def softmax_loss(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch; gradient is (softmax - onehot)/N."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"logits {logits.shape} incompatible with labels {labels.shape}")
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ShapeError("label out of range")
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=1))
    loss = float(np.mean(lse - shifted[np.arange(n), labels]))
    probs = np.exp(shifted - lse[:, None])
    dlogits = probs
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n


def _pairwise_distances(embeddings: np.ndarray) -> np.ndarray:
    diff = embeddings[:, None, :] - embeddings[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def triplet_loss(embeddings: np.ndarray, labels: np.ndarray, margin: float = 0.3
                 ) -> tuple[float, np.ndarray]:
    """Batch-hard triplet loss on Euclidean distances.

    Per anchor: hardest (farthest) positive minus hardest (closest) negative,
    hinged at zero, averaged over anchors that have at least one positive.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    n = embeddings.shape[0]
    if labels.shape != (n,):
        raise ShapeError("labels must match the number of embeddings")
    if np.unique(labels).size < 2:
        raise DegenerateBatch("triplet loss needs at least two identities in the batch")
    dist = _pairwise_distances(embeddings)
    same = labels[:, None] == labels[None, :]
    pos_mask = same & ~np.eye(n, dtype=bool)
    neg_mask = ~same
    anchors = np.flatnonzero(pos_mask.any(axis=1))
    if anchors.size == 0:
        raise DegenerateBatch("no anchor has a positive pair")

    grad = np.zeros_like(embeddings)
    total = 0.0
    for i in anchors:
        p = np.flatnonzero(pos_mask[i])[np.argmax(dist[i, pos_mask[i]])]
        j = np.flatnonzero(neg_mask[i])[np.argmin(dist[i, neg_mask[i]])]
        value = dist[i, p] - dist[i, j] + margin
        if value <= 0:
            continue
        total += value
        if dist[i, p] > 0:
            g = (embeddings[i] - embeddings[p]) / dist[i, p]
            grad[i] += g
            grad[p] -= g
        if dist[i, j] > 0:
            g = (embeddings[i] - embeddings[j]) / dist[i, j]
            grad[i] -= g
            grad[j] += g
    count = anchors.size
    return total / count, grad / count


def circle_loss(embeddings: np.ndarray, class_weights: np.ndarray, labels: np.ndarray,
                margin: float = 0.25, scale: float = 64.0
                ) -> tuple[float, np.ndarray, np.ndarray]:
    """Classification-form circle loss on cosine similarities.

    Both embeddings and class weights are L2-normalized; logits are rescaled
    per-pair with a margin-dependent weight and fed through cross-entropy.
    Returns (loss, d/d embeddings, d/d class_weights).
    """
    e = np.asarray(embeddings, dtype=np.float64)
    w = np.asarray(class_weights, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, num_classes = e.shape[0], w.shape[0]
    if e.shape[1] != w.shape[1] or labels.shape != (n,):
        raise ShapeError("embedding, weight, and label shapes are inconsistent")
    ne = np.linalg.norm(e, axis=1)
    nw = np.linalg.norm(w, axis=1)
    if np.any(ne == 0) or np.any(nw == 0):
        raise NormalizationError("zero-norm embedding or class weight")
    sim = (e @ w.T) / np.outer(ne, nw)

    onehot = np.zeros((n, num_classes), dtype=bool)
    onehot[np.arange(n), labels] = True
    alpha_p = np.maximum(0.0, 1.0 + margin - sim)
    alpha_n = np.maximum(0.0, sim + margin)
    z = np.where(onehot,
                 scale * alpha_p * (sim - (1.0 - margin)),
                 scale * alpha_n * (sim - margin))
    loss, dz = softmax_loss(z, labels)

    # dz/dsim through the clamped per-pair weight (subgradient at the kink)
    dz_dsim = np.where(onehot,
                       scale * (alpha_p - (sim - (1.0 - margin)) * (alpha_p > 0)),
                       scale * (alpha_n + (sim - margin) * (alpha_n > 0)))
    g = dz * dz_dsim  # dL/dsim

    de = ((g / nw[None, :]) @ w) / ne[:, None] \
        - np.sum(g * sim, axis=1)[:, None] * e / (ne ** 2)[:, None]
    dw = ((g / ne[:, None]).T @ e) / nw[:, None] \
        - np.sum(g * sim, axis=0)[:, None] * w / (nw ** 2)[:, None]
    return loss, de, dw
