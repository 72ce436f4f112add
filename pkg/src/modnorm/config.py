"""Experiment configuration: key=value sections in an INI-style text file."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .data import PKBatchSpec, SyntheticDatasetSpec
from .errors import ConfigError
from .model import ModelConfig
from .norm import NormKind
from .schedule import TrainSchedule

__all__ = ["ExperimentConfig", "NORM_PRESETS", "load_experiment_config", "default_config_text"]

# Named norm configurations mirroring the ablation rows: whether the backbone
# and the head use per-modality normalization, and of which flavor.
NORM_PRESETS: dict[str, tuple[NormKind, NormKind]] = {
    "baseline": (NormKind.BN, NormKind.BN),
    "shared": (NormKind.MBN_SHARED, NormKind.MBN_SHARED),
    "specific": (NormKind.MBN_SPECIFIC, NormKind.MBN_SPECIFIC),
    "mixed": (NormKind.MBN_SHARED, NormKind.MBN_SPECIFIC),
}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: SyntheticDatasetSpec = SyntheticDatasetSpec()
    model: ModelConfig = ModelConfig()
    schedule: TrainSchedule = TrainSchedule()
    sampler: PKBatchSpec = PKBatchSpec()
    seeds: tuple[int, ...] = (0,)
    out_dir: str = "runs"
    configurations: tuple[tuple[str, NormKind, NormKind], ...] = (
        ("baseline", NormKind.BN, NormKind.BN),
    )

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("at least one seed is required")

    def model_for(self, backbone: NormKind, head: NormKind) -> ModelConfig:
        base = self.model
        return ModelConfig(
            backbone_norm_kind=backbone, head_norm_kind=head,
            stage_widths=base.stage_widths, embedding_dim=base.embedding_dim,
            head_bias_enabled=base.head_bias_enabled, loss_kind=base.loss_kind,
            triplet_margin=base.triplet_margin, circle_margin=base.circle_margin,
            circle_scale=base.circle_scale, norm_epsilon=base.norm_epsilon,
            norm_momentum=base.norm_momentum)


def _parse_norm_kind(value: str) -> NormKind:
    for kind in NormKind:
        if kind.value.lower() == value.strip().lower():
            return kind
    raise ConfigError(f"unknown norm kind {value!r}")


def _parse_configuration(token: str) -> tuple[str, NormKind, NormKind]:
    token = token.strip()
    if token in NORM_PRESETS:
        backbone, head = NORM_PRESETS[token]
        return token, backbone, head
    parts = token.split(":")
    if len(parts) == 3:
        return parts[0], _parse_norm_kind(parts[1]), _parse_norm_kind(parts[2])
    raise ConfigError(f"configuration {token!r} is neither a preset nor name:backbone:head")


def load_experiment_config(path: Path | str | None = None, text: str | None = None,
                           dataset_seed: int | None = None,
                           seeds: tuple[int, ...] | None = None,
                           out_dir: str | None = None,
                           norm_backbone: str | None = None,
                           norm_head: str | None = None) -> ExperimentConfig:
    """Parse a config file (or inline text), applying CLI-style overrides."""
    parser = configparser.ConfigParser()
    if text is not None:
        parser.read_string(text)
    elif path is not None:
        read = parser.read(str(path))
        if not read:
            raise ConfigError(f"config file {path} not found")

    def get(section, key, cast, default):
        if parser.has_option(section, key):
            return cast(parser.get(section, key))
        return default

    def ints(raw):
        return tuple(int(v) for v in raw.split(","))

    dd = SyntheticDatasetSpec()
    dataset = SyntheticDatasetSpec(
        num_identities=get("dataset", "num_identities", int, dd.num_identities),
        images_per_identity_per_modality=get("dataset", "images_per_identity_per_modality",
                                             int, dd.images_per_identity_per_modality),
        latent_dim=get("dataset", "latent_dim", int, dd.latent_dim),
        image_dims=get("dataset", "image_dims", ints, dd.image_dims),
        modality_offset_scale=get("dataset", "modality_offset_scale", float, dd.modality_offset_scale),
        intra_class_noise=get("dataset", "intra_class_noise", float, dd.intra_class_noise),
        rng_seed=dataset_seed if dataset_seed is not None else get("dataset", "rng_seed", int, dd.rng_seed),
    )

    md = ModelConfig()
    model = ModelConfig(
        stage_widths=get("model", "stage_widths", ints, md.stage_widths),
        embedding_dim=get("model", "embedding_dim", int, md.embedding_dim),
        head_bias_enabled=get("model", "head_bias_enabled", lambda v: v.lower() == "true",
                              md.head_bias_enabled),
        loss_kind=get("model", "loss_kind", str, md.loss_kind),
        triplet_margin=get("model", "triplet_margin", float, md.triplet_margin),
        circle_margin=get("model", "circle_margin", float, md.circle_margin),
        circle_scale=get("model", "circle_scale", float, md.circle_scale),
        norm_epsilon=get("model", "norm_epsilon", float, md.norm_epsilon),
        norm_momentum=get("model", "norm_momentum", float, md.norm_momentum),
    )

    def decays(raw):
        out = []
        for tok in raw.split(","):
            if not tok.strip():
                continue
            epoch, factor = tok.split(":")
            out.append((int(epoch), float(factor)))
        return tuple(out)

    sd = TrainSchedule()
    schedule = TrainSchedule(
        total_epochs=get("schedule", "total_epochs", int, sd.total_epochs),
        warmup_epochs=get("schedule", "warmup_epochs", int, sd.warmup_epochs),
        decay_epochs=get("schedule", "decay_epochs", decays, sd.decay_epochs),
        base_lr=get("schedule", "base_lr", float, sd.base_lr),
        weight_decay=get("schedule", "weight_decay", float, sd.weight_decay),
    )

    pk = PKBatchSpec()
    sampler = PKBatchSpec(
        persons_per_batch=get("sampler", "persons_per_batch", int, pk.persons_per_batch),
        images_per_modality=get("sampler", "images_per_modality", int, pk.images_per_modality),
    )

    if seeds is None:
        seeds = get("experiment", "seeds", ints, (0,))
    if out_dir is None:
        out_dir = get("experiment", "out_dir", str, "runs")
    raw_confs = get("experiment", "configurations", str, "baseline")
    configurations = tuple(_parse_configuration(tok) for tok in raw_confs.split(",") if tok.strip())
    if norm_backbone is not None or norm_head is not None:
        backbone = _parse_norm_kind(norm_backbone) if norm_backbone else NormKind.BN
        head = _parse_norm_kind(norm_head) if norm_head else NormKind.BN
        configurations = (("custom", backbone, head),)

    return ExperimentConfig(dataset=dataset, model=model, schedule=schedule,
                            sampler=sampler, seeds=tuple(seeds), out_dir=out_dir,
                            configurations=configurations)


def default_config_text() -> str:
    """A complete config file with the desk-scale defaults."""
    return """\
[dataset]
num_identities = 32
images_per_identity_per_modality = 12
latent_dim = 16
image_dims = 8,8,8
modality_offset_scale = 1.0
intra_class_noise = 0.1
rng_seed = 0

[model]
stage_widths = 16,32,64
embedding_dim = 64
loss_kind = circle
triplet_margin = 0.3
circle_margin = 0.25
circle_scale = 64.0
norm_epsilon = 1e-5
norm_momentum = 0.1

[schedule]
total_epochs = 20
warmup_epochs = 2
decay_epochs = 12:0.1,16:0.1
base_lr = 6e-4
weight_decay = 5e-4

[sampler]
persons_per_batch = 4
images_per_modality = 4

[experiment]
seeds = 0,1,2,3,4
out_dir = runs
configurations = baseline,shared,specific,mixed
"""
