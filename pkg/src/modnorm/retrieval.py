"""Cosine-similarity retrieval evaluation: CMC curve and mean average precision."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ProtocolError, ShapeError

__all__ = ["RetrievalResult", "rank_gallery", "evaluate_embeddings"]


@dataclass(frozen=True)
class RetrievalResult:
    cmc: np.ndarray          # cumulative match rate per rank, length = gallery size
    map: float
    per_query_ap: np.ndarray

    def rank_at(self, r: int) -> float:
        return float(self.cmc[r - 1])


def rank_gallery(query: np.ndarray, gallery: np.ndarray) -> np.ndarray:
    """Gallery indices sorted by descending cosine similarity per query.

    Ties are broken by ascending gallery index (stable sort on -similarity).
    """
    qn = np.linalg.norm(query, axis=1, keepdims=True)
    gn = np.linalg.norm(gallery, axis=1, keepdims=True)
    sim = (query / qn) @ (gallery / gn).T
    return np.argsort(-sim, axis=1, kind="stable")


def evaluate_embeddings(query: np.ndarray, query_ids: np.ndarray,
                        gallery: np.ndarray, gallery_ids: np.ndarray) -> RetrievalResult:
    """CMC and mAP of cosine ranking of the gallery for each query."""
    query = np.asarray(query, dtype=np.float64)
    gallery = np.asarray(gallery, dtype=np.float64)
    query_ids = np.asarray(query_ids)
    gallery_ids = np.asarray(gallery_ids)
    if query.shape[0] != query_ids.shape[0] or gallery.shape[0] != gallery_ids.shape[0]:
        raise ShapeError("embedding/id count mismatch")
    missing = np.setdiff1d(query_ids, gallery_ids)
    if missing.size:
        raise ProtocolError(f"query identity {missing[0]} absent from gallery")

    num_q, num_g = query.shape[0], gallery.shape[0]
    order = rank_gallery(query, gallery)
    cmc_hits = np.zeros(num_g)
    aps = np.empty(num_q)
    for qi in range(num_q):
        matches = gallery_ids[order[qi]] == query_ids[qi]
        first = int(np.flatnonzero(matches)[0])
        cmc_hits[first:] += 1.0
        hit_positions = np.flatnonzero(matches) + 1
        precisions = np.arange(1, hit_positions.size + 1) / hit_positions
        aps[qi] = float(precisions.mean())
    return RetrievalResult(cmc=cmc_hits / num_q, map=float(aps.mean()), per_query_ap=aps)
