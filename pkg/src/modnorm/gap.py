"""Distribution-gap statistics for two-modality mini-batches.

Two gap types are measured:
  * intra-batch modality gap — per-channel |mean_V - mean_I| and |std_V - std_I|
    within one mini-batch;
  * inter-batch dispersion — per modality, the spread of sub-batch channel
    statistics across a collection of mini-batches.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateSubset, InsufficientData
from .norm import MODALITIES, validate_tags
from .tensor import Tensor4, channel_mean, channel_var

__all__ = [
    "GapReport",
    "modality_channel_stats",
    "intra_batch_gap",
    "inter_batch_gap",
    "histogram",
    "per_stage_gap_trace",
    "write_gap_csv",
    "write_batch_stats_csv",
    "write_histogram_csv",
    "write_stage_trace_csv",
]


def modality_channel_stats(x: Tensor4, tags: Sequence[str]) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Per-modality (mean, biased std) per channel; modalities must both be present."""
    tags = validate_tags(tags, x.n)
    out = {}
    for m in MODALITIES:
        idx = np.flatnonzero(tags == m)
        if idx.size == 0:
            raise DegenerateSubset(f"modality {m} missing from batch")
        mu = channel_mean(x, idx)
        std = np.sqrt(channel_var(x, idx, mu))
        out[m] = (mu, std)
    return out


def intra_batch_gap(x: Tensor4, tags: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """(mean-gap, std-gap) per channel between the V and I sub-batches."""
    stats = modality_channel_stats(x, tags)
    mean_gap = np.abs(stats["V"][0] - stats["I"][0])
    std_gap = np.abs(stats["V"][1] - stats["I"][1])
    return mean_gap, std_gap


def inter_batch_gap(batches: Sequence[tuple[Tensor4, Sequence[str]]]) -> dict[str, dict[str, np.ndarray]]:
    """Across-batch standard deviation of sub-batch channel means and stds.

    Returns {modality: {"mean_dispersion": (C,), "std_dispersion": (C,)}}.
    """
    if len(batches) < 2:
        raise InsufficientData("inter-batch dispersion needs at least 2 batches")
    per_mod_means = {m: [] for m in MODALITIES}
    per_mod_stds = {m: [] for m in MODALITIES}
    for x, tags in batches:
        stats = modality_channel_stats(x, tags)
        for m in MODALITIES:
            per_mod_means[m].append(stats[m][0])
            per_mod_stds[m].append(stats[m][1])
    out = {}
    for m in MODALITIES:
        means = np.stack(per_mod_means[m])
        stds = np.stack(per_mod_stds[m])
        out[m] = {
            "mean_dispersion": means.std(axis=0),
            "std_dispersion": stds.std(axis=0),
        }
    return out


def histogram(values: np.ndarray, bin_count: int) -> tuple[np.ndarray, np.ndarray]:
    """Equal-width bins over [min, max]; right-most bin closed.

    A degenerate range (max == min) collapses to a single zero-width bin
    holding every value, so counts always sum to the sample count.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise InsufficientData("histogram of empty input")
    if bin_count < 1:
        raise InsufficientData(f"bin_count must be >= 1, got {bin_count}")
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        return np.array([lo, hi]), np.array([values.size], dtype=np.int64)
    edges = np.linspace(lo, hi, bin_count + 1)
    counts, _ = np.histogram(values, bins=edges)
    return edges, counts.astype(np.int64)


def per_stage_gap_trace(model, batch) -> list[tuple[str, float]]:
    """Channel-averaged intra-batch mean-gap at the input and at every
    normalization tap of a model (train-mode, pre-affine by default)."""
    taps = model.stage_taps(batch)
    trace = []
    for label, tensor in taps:
        mean_gap, _ = intra_batch_gap(tensor, batch.tags)
        trace.append((label, float(mean_gap.mean())))
    return trace


@dataclass(frozen=True)
class GapReport:
    """Aggregated gap statistics over a collection of analyzed batches."""

    per_channel_intra_gap: np.ndarray   # mean over batches of |mu_V - mu_I| per channel
    per_channel_std_gap: np.ndarray
    per_batch_modality_stats: list[tuple[int, str, np.ndarray, np.ndarray]]  # (batch, modality, mean, std)
    inter_batch_dispersion: dict[str, dict[str, np.ndarray]]
    summary: dict[str, dict[str, float]]

    @classmethod
    def from_batches(cls, batches: Sequence[tuple[Tensor4, Sequence[str]]]) -> "GapReport":
        mean_gaps, std_gaps, per_batch = [], [], []
        for b, (x, tags) in enumerate(batches):
            mg, sg = intra_batch_gap(x, tags)
            mean_gaps.append(mg)
            std_gaps.append(sg)
            stats = modality_channel_stats(x, tags)
            for m in MODALITIES:
                per_batch.append((b, m, stats[m][0], stats[m][1]))
        intra = np.mean(mean_gaps, axis=0)
        stdg = np.mean(std_gaps, axis=0)
        dispersion = inter_batch_gap(batches) if len(batches) >= 2 else {}
        summary = {name: _vector_summary(vec) for name, vec in
                   (("intra_mean_gap", intra), ("intra_std_gap", stdg))}
        return cls(intra, stdg, per_batch, dispersion, summary)


def _vector_summary(vec: np.ndarray) -> dict[str, float]:
    return {
        "min": float(vec.min()),
        "q1": float(np.quantile(vec, 0.25)),
        "mean": float(vec.mean()),
        "median": float(np.quantile(vec, 0.5)),
        "q3": float(np.quantile(vec, 0.75)),
        "max": float(vec.max()),
    }


# -- CSV emission ---------------------------------------------------------


def _open_csv(path: Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path.open("w", newline="", encoding="utf-8")


def write_gap_csv(path: Path, mean_gap: np.ndarray, std_gap: np.ndarray) -> None:
    with _open_csv(path) as f:
        w = csv.writer(f)
        w.writerow(["channel", "mean_gap", "std_gap"])
        for c in range(mean_gap.size):
            w.writerow([c, repr(float(mean_gap[c])), repr(float(std_gap[c]))])


def write_batch_stats_csv(path: Path, per_batch: Sequence[tuple[int, str, np.ndarray, np.ndarray]]) -> None:
    with _open_csv(path) as f:
        w = csv.writer(f)
        w.writerow(["batch", "modality", "channel", "mean", "std"])
        for b, m, mean, std in per_batch:
            for c in range(mean.size):
                w.writerow([b, m, c, repr(float(mean[c])), repr(float(std[c]))])


def write_histogram_csv(path: Path, edges: np.ndarray, counts: np.ndarray) -> None:
    with _open_csv(path) as f:
        w = csv.writer(f)
        w.writerow(["bin_left", "bin_right", "count"])
        for i in range(counts.size):
            w.writerow([repr(float(edges[i])), repr(float(edges[i + 1])), int(counts[i])])


def write_stage_trace_csv(path: Path, trace: Sequence[tuple[str, float]]) -> None:
    with _open_csv(path) as f:
        w = csv.writer(f)
        w.writerow(["stage", "gap"])
        for label, gap in trace:
            w.writerow([label, repr(float(gap))])
