"""Synthetic two-modality identity dataset and the 2PK balanced batch sampler.

Each identity owns a latent vector which is expanded through a fixed random
projection into a (C, H, W) image. Infrared samples additionally pass through
a per-channel affine distortion (scale and offset drawn once per dataset),
which manufactures a measurable modality distribution gap at the input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, SamplerError
from .norm import MODALITIES
from .tensor import Tensor4

__all__ = [
    "SyntheticDatasetSpec",
    "SyntheticDataset",
    "ModalityBatch",
    "PKBatchSpec",
    "PKSampler",
    "generate_dataset",
    "sample_pk_batch",
    "save_dataset",
    "load_dataset",
]


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    num_identities: int = 32
    images_per_identity_per_modality: int = 12
    latent_dim: int = 16
    image_dims: tuple[int, int, int] = (8, 8, 8)  # (C, H, W)
    modality_offset_scale: float = 1.0
    intra_class_noise: float = 0.1
    rng_seed: int = 0

    def __post_init__(self):
        counts = (self.num_identities, self.images_per_identity_per_modality, self.latent_dim) + self.image_dims
        if any(v < 1 for v in counts):
            raise ConfigError("all dataset counts must be >= 1")
        if self.modality_offset_scale < 0 or self.intra_class_noise < 0:
            raise ConfigError("noise and offset scales must be >= 0")


@dataclass(frozen=True)
class ModalityBatch:
    """A mini-batch of images with per-sample modality tags and identity labels."""

    images: Tensor4
    identities: np.ndarray   # int labels, shape (N,)
    tags: np.ndarray         # 'V'/'I', shape (N,)


@dataclass
class SyntheticDataset:
    spec: SyntheticDatasetSpec
    images: np.ndarray       # (num_samples, C, H, W) float64, canonical order
    identities: np.ndarray   # (num_samples,)
    tags: np.ndarray         # (num_samples,) of 'V'/'I'
    modality_offset: np.ndarray  # (C,) offset applied to infrared samples
    modality_scale: np.ndarray   # (C,) scale applied to infrared samples

    @property
    def num_samples(self) -> int:
        return self.images.shape[0]

    @property
    def train_identities(self) -> np.ndarray:
        n = self.spec.num_identities
        return np.arange(0, n - n // 4)

    @property
    def test_identities(self) -> np.ndarray:
        n = self.spec.num_identities
        return np.arange(n - n // 4, n)

    def indices_of(self, identity: int, modality: str) -> np.ndarray:
        return np.flatnonzero((self.identities == identity) & (self.tags == modality))

    def subset_batch(self, indices: np.ndarray) -> ModalityBatch:
        return ModalityBatch(
            images=Tensor4(self.images[indices]),
            identities=self.identities[indices].copy(),
            tags=self.tags[indices].copy(),
        )


def generate_dataset(spec: SyntheticDatasetSpec) -> SyntheticDataset:
    """Deterministically expand identity latents into a bimodal sample set."""
    rng = np.random.default_rng(spec.rng_seed)
    c, h, w = spec.image_dims
    proj = rng.standard_normal((spec.latent_dim, c * h * w)) / np.sqrt(spec.latent_dim)
    latents = rng.standard_normal((spec.num_identities, spec.latent_dim))
    offset = spec.modality_offset_scale * rng.standard_normal(c)
    scale = np.exp(0.25 * spec.modality_offset_scale * rng.standard_normal(c))

    per_id = spec.images_per_identity_per_modality
    total = spec.num_identities * 2 * per_id
    images = np.empty((total, c, h, w))
    identities = np.empty(total, dtype=np.int64)
    tags = np.empty(total, dtype="U1")
    pos = 0
    for ident in range(spec.num_identities):
        base = (latents[ident] @ proj).reshape(c, h, w)
        for modality in MODALITIES:
            for _ in range(per_id):
                img = base + spec.intra_class_noise * rng.standard_normal((c, h, w))
                if modality == "I":
                    img = scale[:, None, None] * img + offset[:, None, None]
                images[pos] = img
                identities[pos] = ident
                tags[pos] = modality
                pos += 1
    return SyntheticDataset(spec, images, identities, tags, offset, scale)


# -- 2PK sampling ---------------------------------------------------------


@dataclass(frozen=True)
class PKBatchSpec:
    persons_per_batch: int = 4   # P
    images_per_modality: int = 4  # K

    def __post_init__(self):
        if self.persons_per_batch < 1 or self.images_per_modality < 1:
            raise ConfigError("P and K must be >= 1")

    @property
    def batch_size(self) -> int:
        return 2 * self.persons_per_batch * self.images_per_modality


def sample_pk_batch(dataset: SyntheticDataset, spec: PKBatchSpec, rng: np.random.Generator,
                    identity_pool: np.ndarray | None = None) -> ModalityBatch:
    """Draw one 2PK batch: P distinct identities, K images per modality each."""
    pool = dataset.train_identities if identity_pool is None else np.asarray(identity_pool)
    if spec.persons_per_batch > pool.size:
        raise SamplerError(f"cannot pick {spec.persons_per_batch} distinct identities from {pool.size}")
    persons = rng.choice(pool, size=spec.persons_per_batch, replace=False)
    indices = []
    for ident in persons:
        for modality in MODALITIES:
            candidates = dataset.indices_of(int(ident), modality)
            if candidates.size < spec.images_per_modality:
                raise SamplerError(
                    f"identity {ident} has {candidates.size} {modality} images, need {spec.images_per_modality}")
            indices.extend(rng.choice(candidates, size=spec.images_per_modality, replace=False))
    return dataset.subset_batch(np.asarray(indices, dtype=np.intp))


class PKSampler:
    """Epoch-structured 2PK sampler: identities partitioned per epoch, image
    pools drawn without replacement and reshuffled when exhausted."""

    def __init__(self, dataset: SyntheticDataset, spec: PKBatchSpec, seed: int,
                 identity_pool: np.ndarray | None = None):
        self.dataset = dataset
        self.spec = spec
        self.rng = np.random.default_rng(seed)
        self.identity_pool = dataset.train_identities if identity_pool is None else np.asarray(identity_pool)
        if spec.persons_per_batch > self.identity_pool.size:
            raise SamplerError("P exceeds the identity pool size")
        per_id = dataset.spec.images_per_identity_per_modality
        if spec.images_per_modality > per_id:
            raise SamplerError("K exceeds the per-identity image count")
        self._pools: dict[tuple[int, str], list[int]] = {}
        self._cursor: dict[tuple[int, str], int] = {}
        for ident in self.identity_pool:
            for m in MODALITIES:
                self._pools[(int(ident), m)] = list(dataset.indices_of(int(ident), m))
                self._reshuffle((int(ident), m))

    def _reshuffle(self, key: tuple[int, str]) -> None:
        pool = np.asarray(self._pools[key])
        self.rng.shuffle(pool)
        self._pools[key] = list(pool)
        self._cursor[key] = 0

    def _take(self, key: tuple[int, str], k: int) -> list[int]:
        if self._cursor[key] + k > len(self._pools[key]):
            self._reshuffle(key)
        start = self._cursor[key]
        self._cursor[key] = start + k
        return self._pools[key][start:start + k]

    @property
    def batches_per_epoch(self) -> int:
        return self.identity_pool.size // self.spec.persons_per_batch

    def epoch(self) -> list[ModalityBatch]:
        """One epoch of batches; every identity appears in exactly one batch
        when P divides the pool size."""
        order = self.identity_pool.copy()
        self.rng.shuffle(order)
        batches = []
        p, k = self.spec.persons_per_batch, self.spec.images_per_modality
        for b in range(self.batches_per_epoch):
            persons = order[b * p:(b + 1) * p]
            indices = []
            for ident in persons:
                for m in MODALITIES:
                    indices.extend(self._take((int(ident), m), k))
            batches.append(self.dataset.subset_batch(np.asarray(indices, dtype=np.intp)))
        return batches


# -- serialization --------------------------------------------------------


def _format_floats(vec: np.ndarray) -> str:
    return ",".join(repr(float(v)) for v in vec)


def save_dataset(dataset: SyntheticDataset, blob_path: Path, manifest_path: Path) -> None:
    """Write images as a flat little-endian float32 blob plus a key=value manifest."""
    blob_path = Path(blob_path)
    blob_path.parent.mkdir(parents=True, exist_ok=True)
    blob_path.write_bytes(dataset.images.astype("<f4").tobytes())
    s = dataset.spec
    c, h, w = s.image_dims
    lines = [
        f"num_identities={s.num_identities}",
        f"images_per_identity_per_modality={s.images_per_identity_per_modality}",
        f"latent_dim={s.latent_dim}",
        f"image_dims={c},{h},{w}",
        f"modality_offset_scale={repr(s.modality_offset_scale)}",
        f"intra_class_noise={repr(s.intra_class_noise)}",
        f"rng_seed={s.rng_seed}",
        f"modality_offset={_format_floats(dataset.modality_offset)}",
        f"modality_scale={_format_floats(dataset.modality_scale)}",
    ]
    Path(manifest_path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_dataset(blob_path: Path, manifest_path: Path) -> SyntheticDataset:
    kv = {}
    for line in Path(manifest_path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            kv[key.strip()] = value.strip()
    dims = tuple(int(v) for v in kv["image_dims"].split(","))
    spec = SyntheticDatasetSpec(
        num_identities=int(kv["num_identities"]),
        images_per_identity_per_modality=int(kv["images_per_identity_per_modality"]),
        latent_dim=int(kv["latent_dim"]),
        image_dims=dims,  # type: ignore[arg-type]
        modality_offset_scale=float(kv["modality_offset_scale"]),
        intra_class_noise=float(kv["intra_class_noise"]),
        rng_seed=int(kv["rng_seed"]),
    )
    c, h, w = dims
    per_id = spec.images_per_identity_per_modality
    total = spec.num_identities * 2 * per_id
    raw = np.frombuffer(Path(blob_path).read_bytes(), dtype="<f4").astype(np.float64)
    images = raw.reshape(total, c, h, w)
    identities = np.repeat(np.arange(spec.num_identities), 2 * per_id)
    tags = np.tile(np.repeat(np.array(MODALITIES, dtype="U1"), per_id), spec.num_identities)
    offset = np.array([float(v) for v in kv["modality_offset"].split(",")])
    scale = np.array([float(v) for v in kv["modality_scale"].split(",")])
    return SyntheticDataset(spec, images, identities, tags, offset, scale)
