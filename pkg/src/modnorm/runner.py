"""Command implementations shared by the HTTP service and the CLI.

Every command is a pure function of (config, seeds): re-running with the same
inputs rewrites byte-identical outputs. Independent (configuration, seed)
runs can execute in parallel, capped by the MODNORM_THREADS environment
variable; each run writes only under its own subdirectory.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .config import ExperimentConfig
from .data import PKSampler, generate_dataset, save_dataset
from .gap import (histogram, intra_batch_gap, modality_channel_stats,
                  per_stage_gap_trace, write_batch_stats_csv, write_gap_csv,
                  write_histogram_csv, write_stage_trace_csv)
from .model import build_model
from .norm import NormKind
from .train import evaluate_retrieval, train

__all__ = ["cmd_generate", "cmd_train", "cmd_gap", "cmd_report"]

HISTOGRAM_BINS = 50
GAP_BATCH_COUNT = 3


def _max_workers() -> int:
    raw = os.environ.get("MODNORM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def cmd_generate(config: ExperimentConfig) -> dict:
    """Write the dataset blob and manifest under the output directory."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = generate_dataset(config.dataset)
    blob = out / "dataset.bin"
    manifest = out / "dataset.manifest"
    save_dataset(dataset, blob, manifest)
    return {"files": [str(blob), str(manifest)],
            "num_samples": dataset.num_samples,
            "modality_offset": [float(v) for v in dataset.modality_offset]}


def _train_one(config: ExperimentConfig, name: str, backbone: NormKind, head: NormKind,
               seed: int) -> dict:
    dataset = generate_dataset(config.dataset)
    model_cfg = config.model_for(backbone, head)
    model = build_model(model_cfg, in_channels=config.dataset.image_dims[0],
                        class_ids=dataset.train_identities, seed=seed)
    logs = train(model, dataset, config.schedule, config.sampler, sampler_seed=seed + 1)
    if logs:
        final_rank1, final_map = logs[-1].rank1, logs[-1].map
    else:
        result = evaluate_retrieval(model, dataset)
        final_rank1, final_map = result.rank_at(1), result.map

    run_dir = Path(config.out_dir) / name / f"seed{seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    metrics = run_dir / "metrics.csv"
    with metrics.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "loss", "rank1", "map"])
        for log in logs:
            w.writerow([log.epoch, repr(log.loss), repr(log.rank1), repr(log.map)])
    save_checkpoint(model, run_dir / "checkpoint.bin", run_dir / "checkpoint.manifest")
    return {"configuration": name, "seed": seed, "rank1": final_rank1, "map": final_map,
            "files": [str(metrics), str(run_dir / "checkpoint.bin"),
                      str(run_dir / "checkpoint.manifest")]}


def cmd_train(config: ExperimentConfig) -> dict:
    """Train every (configuration, seed) pair and aggregate a summary CSV."""
    jobs = [(name, backbone, head, seed)
            for name, backbone, head in config.configurations
            for seed in config.seeds]
    workers = _max_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(lambda j: _train_one(config, *j), jobs))
    else:
        runs = [_train_one(config, *job) for job in jobs]

    summary_path = Path(config.out_dir) / "summary.csv"
    summary_rows = []
    with summary_path.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["configuration", "seeds", "rank1_mean", "rank1_std", "map_mean", "map_std"])
        for name, _, _ in config.configurations:
            rank1 = np.array([r["rank1"] for r in runs if r["configuration"] == name])
            maps = np.array([r["map"] for r in runs if r["configuration"] == name])
            row = [name, len(rank1), repr(float(rank1.mean())), repr(float(rank1.std())),
                   repr(float(maps.mean())), repr(float(maps.std()))]
            w.writerow(row)
            summary_rows.append({"configuration": name, "seeds": len(rank1),
                                 "rank1_mean": float(rank1.mean()), "rank1_std": float(rank1.std()),
                                 "map_mean": float(maps.mean()), "map_std": float(maps.std())})
    files = [str(summary_path)] + [p for r in runs for p in r["files"]]
    return {"runs": runs, "summary": summary_rows, "files": files}


def cmd_gap(config: ExperimentConfig, pre_affine: bool = True) -> dict:
    """Emit the gap CSV bundle: histograms for sampled batches under whole-batch
    and per-modality normalization, the per-batch statistics table, and the
    per-stage gap trace for a BN model and an MBN model."""
    dataset = generate_dataset(config.dataset)
    seed = config.seeds[0]
    bn_model = build_model(config.model_for(NormKind.BN, NormKind.BN),
                           in_channels=config.dataset.image_dims[0],
                           class_ids=dataset.train_identities, seed=seed)
    mbn_model = build_model(config.model_for(NormKind.MBN_SHARED, NormKind.MBN_SHARED),
                            in_channels=config.dataset.image_dims[0],
                            class_ids=dataset.train_identities, seed=seed)
    sampler = PKSampler(dataset, config.sampler, seed=seed + 1)
    batches = sampler.epoch()[:GAP_BATCH_COUNT]

    out = Path(config.out_dir) / "gap"
    out.mkdir(parents=True, exist_ok=True)
    files = []

    # Histograms of the first channel of the stage-1 normalized output, per
    # batch, under the two normalization methods.
    whole_stats, modality_stats = [], []
    stage_gap = {"whole": [], "modality": []}
    for b, batch in enumerate(batches):
        taps = {"whole": bn_model.stage_taps(batch, pre_affine=pre_affine),
                "modality": mbn_model.stage_taps(batch, pre_affine=pre_affine)}
        for method, tap_list in taps.items():
            stage1 = dict(tap_list)["stage1"]
            edges, counts = histogram(stage1.data[:, 0], HISTOGRAM_BINS)
            path = out / f"hist_batch{b}_{method}.csv"
            write_histogram_csv(path, edges, counts)
            files.append(str(path))
            stats = modality_channel_stats(stage1, batch.tags)
            target = whole_stats if method == "whole" else modality_stats
            for m, (mean, std) in stats.items():
                target.append((b, m, mean, std))
            mean_gap, _ = intra_batch_gap(stage1, batch.tags)
            stage_gap[method].append(float(mean_gap.mean()))

    for method, stats in (("whole", whole_stats), ("modality", modality_stats)):
        path = out / f"batch_stats_{method}.csv"
        write_batch_stats_csv(path, stats)
        files.append(str(path))

    trace_bn = per_stage_gap_trace(bn_model, batches[0])
    trace_mbn = per_stage_gap_trace(mbn_model, batches[0])
    for label, trace in (("bn", trace_bn), ("mbn", trace_mbn)):
        path = out / f"stage_trace_{label}.csv"
        write_stage_trace_csv(path, trace)
        files.append(str(path))

    # Channel-level gaps of the stage-1 output of the first batch, per method.
    for method, model in (("whole", bn_model), ("modality", mbn_model)):
        stage1 = dict(model.stage_taps(batches[0], pre_affine=pre_affine))["stage1"]
        mean_gap, std_gap = intra_batch_gap(stage1, batches[0].tags)
        path = out / f"channel_gap_{method}.csv"
        write_gap_csv(path, mean_gap, std_gap)
        files.append(str(path))

    return {
        "files": files,
        "stage_trace_bn": trace_bn,
        "stage_trace_mbn": trace_mbn,
        "per_batch_gap": stage_gap,
    }


def cmd_report(out_dir: str | Path) -> dict:
    """Merge the summary and gap CSVs into one Markdown report."""
    out = Path(out_dir)
    sections = []
    summary = out / "summary.csv"
    if summary.exists():
        rows = list(csv.reader(summary.open(encoding="utf-8")))
        sections.append(_markdown_table("Retrieval summary", rows))
    for label in ("bn", "mbn"):
        trace = out / "gap" / f"stage_trace_{label}.csv"
        if trace.exists():
            rows = list(csv.reader(trace.open(encoding="utf-8")))
            sections.append(_markdown_table(f"Per-stage modality gap ({label.upper()} model)", rows))
    report = out / "report.md"
    report.write_text("\n\n".join(sections) + "\n", encoding="utf-8")
    return {"files": [str(report)]}


def _markdown_table(title: str, rows: list[list[str]]) -> str:
    if not rows:
        return f"## {title}\n\n(no data)"
    header, body = rows[0], rows[1:]
    lines = [f"## {title}", "",
             "| " + " | ".join(header) + " |",
             "| " + " | ".join("---" for _ in header) + " |"]
    for row in body:
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines)
