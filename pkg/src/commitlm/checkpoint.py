"""Checkpoint directories: a JSON manifest plus one little-endian f32 blob."""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np
import torch

from .errors import CorruptFile, VersionMismatch
from .model import CommitTransformer, ModelConfig
from .training import ModelState

CHECKPOINT_VERSION = "commitlm-ckpt-1"
MANIFEST = "manifest.json"
BLOB = "tensors.f32"


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def save_checkpoint(state: ModelState, path: Path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    table = {}
    chunks = []
    offset = 0
    for name, tensor in sorted(state.named_tensors().items()):
        raw = tensor.detach().cpu().numpy().astype("<f4").tobytes()
        table[name] = {
            "dtype": "f32",
            "shape": list(tensor.shape),
            "offset": offset,
            "nbytes": len(raw),
            "sha256": hashlib.sha256(raw).hexdigest(),
        }
        chunks.append(raw)
        offset += len(raw)
    manifest = {
        "version": CHECKPOINT_VERSION,
        "config": state.config.to_dict(),
        "step": state.step,
        "blob": BLOB,
        "tensors": table,
    }
    _atomic_write(path / BLOB, b"".join(chunks))
    _atomic_write(path / MANIFEST, (json.dumps(manifest, indent=1, sort_keys=True) + "\n").encode())


def load_checkpoint(path: Path) -> ModelState:
    path = Path(path)
    try:
        manifest = json.loads((path / MANIFEST).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptFile(f"unreadable manifest in {path}: {exc}") from exc
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise VersionMismatch(f"checkpoint version {manifest.get('version')!r}, expected {CHECKPOINT_VERSION!r}")
    blob = (path / manifest.get("blob", BLOB)).read_bytes()
    config = ModelConfig(**manifest["config"])
    model = CommitTransformer(config)
    tensors = {}
    for name, entry in manifest["tensors"].items():
        lo, n = entry["offset"], entry["nbytes"]
        raw = blob[lo:lo + n]
        if len(raw) != n or hashlib.sha256(raw).hexdigest() != entry["sha256"]:
            raise CorruptFile(f"tensor {name} fails its checksum")
        arr = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"])
        tensors[name] = torch.from_numpy(arr.astype(np.float32))
    params = {k[len("param/"):]: v for k, v in tensors.items() if k.startswith("param/")}
    missing = set(model.state_dict()) - set(params)
    if missing:
        raise CorruptFile(f"checkpoint lacks tensors: {sorted(missing)}")
    model.load_state_dict(params)
    model.eval()
    return ModelState(
        config,
        model,
        {k[len("adam_m/"):]: v for k, v in tensors.items() if k.startswith("adam_m/")},
        {k[len("adam_v/"):]: v for k, v in tensors.items() if k.startswith("adam_v/")},
        manifest["step"],
    )
