"""Checkpoint serialization: a flat little-endian float32 blob plus a text
manifest listing (name, shape, offset, norm kind, modality key) per tensor."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ConfigError
from .model import Model

__all__ = ["save_checkpoint", "load_checkpoint"]


def _named_tensors(model: Model) -> list[tuple[str, np.ndarray, str, str]]:
    """(name, array, norm_kind, modality_key) in canonical order."""
    entries: list[tuple[str, np.ndarray, str, str]] = []
    for i, w in enumerate(model.conv_weights):
        entries.append((f"stage{i + 1}.conv.weight", w, "-", "-"))
    for prefix, layer in model.norm_layers().items():
        kind = layer.config.kind.value
        for name, arr in sorted(layer.parameters().items()):
            entries.append((f"{prefix}.{name}", arr, kind, name.split("@")[1]))
        for name, arr in sorted(layer.statistics().items()):
            entries.append((f"{prefix}.{name}", arr, kind, name.split("@")[1]))
    entries.append(("fc.weight", model.fc_weight, "-", "-"))
    return entries


def save_checkpoint(model: Model, blob_path: Path, manifest_path: Path) -> None:
    blob_path, manifest_path = Path(blob_path), Path(manifest_path)
    blob_path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["name,shape,offset,norm_kind,modality_key"]
    parts = []
    offset = 0
    for name, arr, kind, key in _named_tensors(model):
        raw = arr.astype("<f4").tobytes()
        shape = "x".join(str(d) for d in arr.shape)
        lines.append(f"{name},{shape},{offset},{kind},{key}")
        parts.append(raw)
        offset += len(raw)
    blob_path.write_bytes(b"".join(parts))
    manifest_path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_checkpoint(model: Model, blob_path: Path, manifest_path: Path) -> Model:
    """Load tensors into an already-built model of matching architecture."""
    raw = Path(blob_path).read_bytes()
    lines = Path(manifest_path).read_text(encoding="utf-8").splitlines()[1:]
    targets = {name: arr for name, arr, _, _ in _named_tensors(model)}
    for line in lines:
        if not line.strip():
            continue
        name, shape_s, offset_s, _, _ = line.split(",")
        shape = tuple(int(d) for d in shape_s.split("x"))
        count = int(np.prod(shape))
        offset = int(offset_s)
        values = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).astype(np.float64)
        if name not in targets:
            raise ConfigError(f"checkpoint tensor {name!r} not present in model")
        if targets[name].shape != shape:
            raise ConfigError(f"shape mismatch for {name}: {targets[name].shape} vs {shape}")
        targets[name][...] = values.reshape(shape)
    return model
