"""Training loop and retrieval evaluation over the synthetic dataset."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ModalityBatch, PKBatchSpec, PKSampler, SyntheticDataset
from .errors import ProtocolError
from .model import Model, ModelConfig, build_model
from .optim import AdamW
from .retrieval import RetrievalResult, evaluate_embeddings
from .schedule import TrainSchedule, lr_at

__all__ = ["EpochLog", "train", "evaluate_retrieval"]


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    loss: float
    rank1: float
    map: float


def evaluate_retrieval(model: Model, dataset: SyntheticDataset,
                       query_modality: str = "I", batch_size: int = 64) -> RetrievalResult:
    """Cross-modality retrieval on the held-out identity split.

    Queries are the ``query_modality`` samples; the gallery is the other
    modality. Embeddings are computed in eval mode.
    """
    gallery_modality = "V" if query_modality == "I" else "I"
    test_ids = dataset.test_identities
    mask = np.isin(dataset.identities, test_ids)
    q_idx = np.flatnonzero(mask & (dataset.tags == query_modality))
    g_idx = np.flatnonzero(mask & (dataset.tags == gallery_modality))
    if q_idx.size == 0 or g_idx.size == 0:
        raise ProtocolError("empty query or gallery set")
    q_emb = _embed_all(model, dataset, q_idx, batch_size)
    g_emb = _embed_all(model, dataset, g_idx, batch_size)
    return evaluate_embeddings(q_emb, dataset.identities[q_idx], g_emb, dataset.identities[g_idx])


def _embed_all(model: Model, dataset: SyntheticDataset, indices: np.ndarray, batch_size: int) -> np.ndarray:
    chunks = []
    for start in range(0, indices.size, batch_size):
        chunk = dataset.subset_batch(indices[start:start + batch_size])
        chunks.append(model.embed(chunk, mode="eval"))
    return np.concatenate(chunks, axis=0)


def train(model: Model, dataset: SyntheticDataset, schedule: TrainSchedule,
          sampler_spec: PKBatchSpec, sampler_seed: int,
          eval_every: int = 1) -> list[EpochLog]:
    """Train in place for the scheduled number of epochs; returns per-epoch logs."""
    sampler = PKSampler(dataset, sampler_spec, seed=sampler_seed)
    steps_per_epoch = sampler.batches_per_epoch
    optimizer = AdamW(param_names=list(model.parameters()),
                      weight_decay=schedule.weight_decay,
                      no_decay=model.norm_parameter_names())
    logs = []
    for epoch in range(schedule.total_epochs):
        batches = sampler.epoch()
        epoch_loss = 0.0
        for step, batch in enumerate(batches):
            losses, grads = model.loss_and_grads(batch)
            lr = lr_at(schedule, epoch, step, steps_per_epoch)
            optimizer.step(model.parameters(), grads, lr)
            epoch_loss += losses["loss"]
        if eval_every and (epoch + 1) % eval_every == 0:
            result = evaluate_retrieval(model, dataset)
            rank1, mean_ap = result.rank_at(1), result.map
        else:
            rank1, mean_ap = float("nan"), float("nan")
        logs.append(EpochLog(epoch=epoch, loss=epoch_loss / max(1, steps_per_epoch),
                             rank1=rank1, map=mean_ap))
    return logs
