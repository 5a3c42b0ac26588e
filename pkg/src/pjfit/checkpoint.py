"""Checkpoint format: a versioned JSON manifest plus a flat binary blob.

The manifest lists every parameter with name, shape, dtype, and byte
offset into the blob; the blob holds little-endian float32 values in
manifest order. Loading then saving reproduces both files byte for byte.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .data import Vocabulary
from .errors import ConfigError
from .model import ModelConfig, ModelParams, init_model_params

FORMAT_VERSION = 1
BLOB_DTYPE = np.dtype("<f4")


def blob_path_for(manifest_path: str | Path) -> Path:
    return Path(manifest_path).with_suffix(".bin")


def save_checkpoint(
    params: ModelParams, vocab: Vocabulary, manifest_path: str | Path
) -> Path:
    """Write ``<path>`` (manifest JSON) and ``<path stem>.bin`` (blob)."""
    manifest_path = Path(manifest_path)
    blob_path = blob_path_for(manifest_path)

    entries = []
    offset = 0
    chunks = []
    for name, tensor in params.named_parameters().items():
        flat = np.ascontiguousarray(tensor.data, dtype=BLOB_DTYPE).reshape(-1)
        raw = flat.tobytes()
        entries.append(
            {
                "name": name,
                "shape": list(tensor.data.shape),
                "dtype": "float32",
                "offset": offset,
                "size": int(flat.size),
            }
        )
        chunks.append(raw)
        offset += len(raw)

    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": params.kind,
        "config": params.config.to_dict(),
        "vocab": list(vocab.id_to_token),
        "min_count": vocab.min_count,
        "blob": blob_path.name,
        "blob_bytes": offset,
        "parameters": entries,
    }
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    blob_path.write_bytes(b"".join(chunks))
    return manifest_path


def load_checkpoint(manifest_path: str | Path) -> tuple[ModelParams, Vocabulary]:
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{manifest_path}: invalid manifest ({exc})") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ConfigError(
            f"{manifest_path}: unsupported format version "
            f"{manifest.get('format_version')!r}"
        )

    config = ModelConfig.from_dict(manifest["config"])
    tokens = manifest["vocab"]
    if len(tokens) != config.vocab_size:
        raise ConfigError(
            f"{manifest_path}: vocabulary mismatch: manifest lists "
            f"{len(tokens)} tokens but the model expects {config.vocab_size}"
        )
    vocab = Vocabulary(
        token_to_id={t: i for i, t in enumerate(tokens)},
        id_to_token=list(tokens),
        min_count=int(manifest.get("min_count", 1)),
    )

    blob = (manifest_path.parent / manifest["blob"]).read_bytes()
    if len(blob) != manifest["blob_bytes"]:
        raise ConfigError(
            f"{manifest_path}: blob is {len(blob)} bytes, manifest says "
            f"{manifest['blob_bytes']}"
        )

    # Build a skeleton with the right structure, then overwrite every buffer.
    params = init_model_params(
        manifest["kind"], config, np.random.default_rng(0), dtype=np.float32
    )
    named = params.named_parameters()
    listed = {e["name"] for e in manifest["parameters"]}
    if listed != set(named):
        raise ConfigError(
            f"{manifest_path}: parameter names do not match the model structure"
        )
    for entry in manifest["parameters"]:
        shape = tuple(entry["shape"])
        n = entry["size"]
        start = entry["offset"]
        values = np.frombuffer(blob, dtype=BLOB_DTYPE, count=n, offset=start)
        target = named[entry["name"]]
        if shape != target.data.shape:
            raise ConfigError(
                f"{manifest_path}: {entry['name']} has shape {shape}, "
                f"model expects {target.data.shape}"
            )
        target.data = values.reshape(shape).astype(np.float32)
    return params, vocab
