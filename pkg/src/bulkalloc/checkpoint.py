"""Versioned binary checkpoint container.

Layout (all integers little-endian)::

    8 bytes   magic  b"BKALCKPT"
    4 bytes   uint32 format version
    4 bytes   uint32 header length H
    H bytes   UTF-8 JSON header (sorted keys, compact separators)
    payload   float64 little-endian arrays, C order, in header order:
              every weight array, then every Adam first moment, then every
              Adam second moment
    32 bytes  SHA-256 of everything above

The header carries ``model`` (hidden, dense, input_dim), ``arrays`` (ordered
``[name, shape]`` pairs), ``adam`` (step and constants) and free-form
``metadata``.  Encoding is deterministic, so save -> load -> save is
byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import AdamState, ModelWeights, param_shapes

MAGIC = b"BKALCKPT"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sII")


class CheckpointError(Exception):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    weights: ModelWeights
    adam: AdamState
    metadata: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION


def to_bytes(ckpt: Checkpoint) -> bytes:
    w = ckpt.weights
    header = {
        "model": {"hidden": w.hidden, "dense": w.dense, "input_dim": w.input_dim},
        "arrays": [[name, list(a.shape)] for name, a in w.params.items()],
        "adam": {
            "step": ckpt.adam.step,
            "lr": ckpt.adam.lr,
            "beta1": ckpt.adam.beta1,
            "beta2": ckpt.adam.beta2,
            "eps": ckpt.adam.eps,
        },
        "metadata": ckpt.metadata,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [_PREFIX.pack(MAGIC, ckpt.version, len(head)), head]
    for group in (w.params, ckpt.adam.m, ckpt.adam.v):
        for name in w.params:
            parts.append(np.ascontiguousarray(group[name], dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def from_bytes(blob: bytes) -> Checkpoint:
    if len(blob) < _PREFIX.size + 32:
        raise CorruptCheckpointError("checkpoint is truncated")
    magic, version, head_len = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CorruptCheckpointError("not a checkpoint file (bad magic)")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"checkpoint format version {version}, this build reads {FORMAT_VERSION}")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptCheckpointError("checksum mismatch (truncated or modified file)")
    try:
        header = json.loads(body[_PREFIX.size : _PREFIX.size + head_len].decode("utf-8"))
        model = header["model"]
        expected = param_shapes(model["hidden"], model["dense"], model["input_dim"])
        names = [name for name, _ in header["arrays"]]
        shapes = {name: tuple(shape) for name, shape in header["arrays"]}
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptCheckpointError(f"unreadable header: {exc}") from exc
    if names != list(expected) or any(shapes[n] != expected[n] for n in names):
        raise CheckpointError(f"array layout {shapes} does not match the model shapes {expected}")

    offset = _PREFIX.size + head_len
    groups = []
    for _ in range(3):
        arrays = {}
        for name in names:
            count = int(np.prod(shapes[name], dtype=int))
            end = offset + 8 * count
            if end > len(body):
                raise CorruptCheckpointError("payload shorter than the header promises")
            arrays[name] = np.frombuffer(body[offset:end], dtype="<f8").astype(float).reshape(shapes[name])
            offset = end
        groups.append(arrays)
    if offset != len(body):
        raise CorruptCheckpointError("trailing bytes after payload")

    weights = ModelWeights(groups[0], model["hidden"], model["dense"], model["input_dim"])
    a = header["adam"]
    adam = AdamState(groups[1], groups[2], a["step"], a["lr"], a["beta1"], a["beta2"], a["eps"])
    return Checkpoint(weights, adam, header["metadata"], version)


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    path.write_bytes(to_bytes(ckpt))
    return path


def load_checkpoint(path) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())
