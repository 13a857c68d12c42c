"""Versioned binary checkpoints.

Layout::

    b"LVIZCKPT"            8-byte magic
    uint32 LE              format version
    uint64 LE              header length in bytes
    header                 UTF-8 JSON: spec, metadata, tensor names/shapes,
                           payload byte count and CRC-32
    payload                float64 LE values, tensors in declaration order

The JSON header is written with sorted keys so save -> load -> save is
byte-identical.
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (CheckpointCorruptError, CheckpointError, CheckpointTruncatedError,
                     CheckpointVersionError, ShapeError)
from .io import atomic_write_bytes
from .model import ModelParams, ModelSpec, check_params

MAGIC = b"LVIZCKPT"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


@dataclass
class Checkpoint:
    spec: ModelSpec
    params: ModelParams
    metadata: dict = field(default_factory=dict)


def to_bytes(ckpt: Checkpoint) -> bytes:
    tensors = ckpt.params.named_tensors()
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in tensors)
    header = {
        "spec": ckpt.spec.to_dict(),
        "metadata": ckpt.metadata,
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in tensors],
        "payload_bytes": len(payload),
        "payload_crc32": zlib.crc32(payload),
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREFIX.pack(MAGIC, VERSION, len(hbytes)) + hbytes + payload


def from_bytes(data: bytes) -> Checkpoint:
    if len(data) < _PREFIX.size:
        raise CheckpointTruncatedError(f"file is {len(data)} bytes, shorter than the fixed prefix")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointCorruptError(f"bad magic bytes {magic!r}")
    if version != VERSION:
        raise CheckpointVersionError(f"checkpoint version {version}, this build reads version {VERSION}")
    body = data[_PREFIX.size:]
    if len(body) < hlen:
        raise CheckpointTruncatedError(f"header declares {hlen} bytes, only {len(body)} present")
    try:
        header = json.loads(body[:hlen].decode("utf-8"))
        spec = ModelSpec.from_dict(header["spec"])
        entries = header["tensors"]
        declared = int(header["payload_bytes"])
        crc = int(header["payload_crc32"])
    except (ValueError, KeyError, TypeError, ShapeError) as exc:
        raise CheckpointCorruptError(f"unreadable header: {exc}") from exc
    payload = body[hlen:]
    if len(payload) < declared:
        raise CheckpointTruncatedError(f"payload has {len(payload)} of {declared} declared bytes")
    if len(payload) > declared:
        raise CheckpointCorruptError(f"{len(payload) - declared} unexpected trailing bytes")
    shapes = [tuple(int(d) for d in e["shape"]) for e in entries]
    needed = 8 * sum(int(np.prod(s, dtype=np.int64)) for s in shapes)
    if needed != declared:
        raise CheckpointCorruptError(
            f"declared tensor shapes need {needed} payload bytes but header declares {declared}")
    if zlib.crc32(payload) != crc:
        raise CheckpointCorruptError("payload checksum mismatch")
    arrays, offset = [], 0
    for shape in shapes:
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).astype(np.float64)
        arrays.append(arr.reshape(shape))
        offset += 8 * count
    try:
        params = ModelParams.from_tensors(arrays)
        check_params(spec, params)
    except (ShapeError, IndexError) as exc:
        raise CheckpointCorruptError(f"tensors do not match the stored spec: {exc}") from exc
    if not all(np.isfinite(a).all() for a in arrays):
        raise CheckpointCorruptError("non-finite parameter values")
    return Checkpoint(spec, params, header.get("metadata", {}))


def save(ckpt: Checkpoint, path) -> None:
    check_params(ckpt.spec, ckpt.params)
    atomic_write_bytes(Path(path), to_bytes(ckpt))


def load(path) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return from_bytes(data)
