"""Binary checkpoint container: a JSON header (model config, parameter
partition, vocab hash) followed by named float64 little-endian blobs.

The byte layout is fully deterministic (sorted parameter names, canonical
JSON), so save -> load -> save produces byte-identical files.
"""
from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from . import codec, model as M

MAGIC = b"GACN"
VERSION = 1


class CheckpointError(ValueError):
    pass


def vocab_hash(vocab: codec.Vocab) -> str:
    """SHA-256 over the vocabulary's canonical hex-line serialization."""
    payload = "\n".join(t.hex() for t in vocab.tokens).encode("ascii")
    return hashlib.sha256(payload).hexdigest()


def save_checkpoint(path, model: M.Model, vocab: codec.Vocab):
    names = sorted(model.params)
    header = {
        "version": VERSION,
        "model_config": model.config.to_dict(),
        "trainable": sorted(n for n in names if model.params[n].requires_grad),
        "vocab_sha256": vocab_hash(vocab),
        "params": [{"name": n, "shape": list(model.params[n].data.shape)}
                   for n in names],
    }
    header_bytes = json.dumps(header, sort_keys=True,
                              separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        for n in names:
            f.write(np.ascontiguousarray(model.params[n].data,
                                         dtype="<f8").tobytes())


def load_checkpoint(path, vocab: codec.Vocab | None = None) -> tuple[M.Model, dict]:
    """Rebuild the model; with a vocab given, verify its hash matches."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (header_len,) = struct.unpack("<Q", blob[8:16])
    try:
        header = json.loads(blob[16:16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt header: {e}") from None
    if vocab is not None and header["vocab_sha256"] != vocab_hash(vocab):
        raise CheckpointError(f"{path}: checkpoint was saved with a different vocabulary")

    config = M.ModelConfig.from_dict(header["model_config"])
    model = M.init_model(config, seed=0)
    if sorted(model.params) != [p["name"] for p in header["params"]]:
        raise CheckpointError(f"{path}: parameter names disagree with the model config")
    offset = 16 + header_len
    for spec in header["params"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        end = offset + 8 * count
        if end > len(blob):
            raise CheckpointError(f"{path}: truncated blob for parameter {spec['name']}")
        data = np.frombuffer(blob[offset:end], dtype="<f8").reshape(shape)
        model.params[spec["name"]].data = data.astype(np.float64).copy()
        offset = end
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes")
    trainable = set(header["trainable"])
    for n, p in model.params.items():
        p.requires_grad = n in trainable
    return model, header
