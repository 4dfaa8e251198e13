"""Binary checkpoint format.

Layout: 8-byte magic "C2TCKPT1", a little-endian uint32 header length, a JSON
header (model config, vocabulary hash, feature vocabularies, parameter
manifest with name/shape/byte offset), then raw little-endian float32
parameter data in manifest order.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .encoding import FeatureVocab, VarBounds, Vocab
from .model import Model, ModelConfig

MAGIC = b"C2TCKPT1"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def vocab_hash(vocab: Vocab) -> str:
    payload = json.dumps(list(vocab.tokens), ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def save_checkpoint(
    model: Model,
    path: str | Path,
    vocab: Vocab,
    header_vocab: FeatureVocab,
    value_vocab: FeatureVocab,
    bounds: VarBounds,
    pipeline: str = "templated",
    extra: dict | None = None,
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = []
    blobs = []
    offset = 0
    for name, arr in model.params.items():
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(data)
        offset += len(data)
    header = {
        "version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "vocab_size": model.vocab_size,
        "vocab_hash": vocab_hash(vocab),
        "header_vocab": list(header_vocab.tokens),
        "value_vocab": list(value_vocab.tokens),
        "bounds": bounds.to_dict(),
        "pipeline": pipeline,
        "extra": extra or {},
        "params": manifest,
    }
    header_bytes = json.dumps(header, ensure_ascii=False).encode("utf-8")
    with path.open("wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        for blob in blobs:
            f.write(blob)


class Checkpoint:
    def __init__(self, model: Model, header: dict):
        self.model = model
        self.vocab_hash: str = header["vocab_hash"]
        self.header_vocab = FeatureVocab(tokens=tuple(header["header_vocab"]))
        self.value_vocab = FeatureVocab(tokens=tuple(header["value_vocab"]))
        self.bounds = VarBounds.from_dict(header["bounds"])
        self.pipeline: str = header.get("pipeline", "templated")
        self.extra: dict = header.get("extra", {})


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < len(MAGIC) + 4 or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes; not a checkpoint or wrong version")
    (header_len,) = struct.unpack("<I", raw[len(MAGIC): len(MAGIC) + 4])
    header_end = len(MAGIC) + 4 + header_len
    if len(raw) < header_end:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[len(MAGIC) + 4: header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: unreadable header ({e})") from e
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {header.get('version')} unsupported (expected {FORMAT_VERSION})"
        )

    config = ModelConfig.from_dict(header["config"])
    model = Model(
        config,
        vocab_size=header["vocab_size"],
        n_header_features=len(header["header_vocab"]) + 2,
        n_value_features=len(header["value_vocab"]) + 2,
    )
    data = raw[header_end:]
    expected = set(model.params)
    seen = set()
    for entry in header["params"]:
        name, shape, offset = entry["name"], tuple(entry["shape"]), entry["offset"]
        if name not in expected:
            raise CheckpointError(f"{path}: unknown parameter '{name}' in manifest")
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(data):
            raise CheckpointError(f"{path}: truncated parameter data for '{name}'")
        arr = np.frombuffer(data[offset:end], dtype="<f4").reshape(shape).astype(np.float32)
        if model.params[name].shape != arr.shape:
            raise CheckpointError(
                f"{path}: parameter '{name}' has shape {arr.shape}, expected {model.params[name].shape}"
            )
        model.params[name] = arr
        seen.add(name)
    missing = expected - seen
    if missing:
        raise CheckpointError(f"{path}: missing parameters {sorted(missing)}")
    return Checkpoint(model, header)
