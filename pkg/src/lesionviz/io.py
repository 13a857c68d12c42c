"""File helpers: atomic writes and 16-bit binary PGM (P5)."""
from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import DataIOError

PGM_MAXVAL = 65535


def atomic_write_bytes(path: Path, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise DataIOError(f"cannot write {path}: {exc}") from exc


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def encode_pgm(image: np.ndarray) -> bytes:
    """Encode a ``[H, W]`` or ``[1, H, W]`` image with values in [0, 1]."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3 and img.shape[0] == 1:
        img = img[0]
    if img.ndim != 2:
        raise ValueError(f"PGM needs a single-channel 2D image, got shape {np.shape(image)}")
    q = np.rint(np.clip(img, 0.0, 1.0) * PGM_MAXVAL).astype(">u2")
    h, w = img.shape
    return f"P5\n{w} {h}\n{PGM_MAXVAL}\n".encode("ascii") + q.tobytes()


def _header_tokens(data: bytes):
    """Yield (token, end_offset) for the first four header tokens, skipping comments."""
    pos, n = 0, len(data)
    while True:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            return
        yield data[start:pos], pos


def decode_pgm(data: bytes) -> np.ndarray:
    """Decode a binary P5 PGM (8- or 16-bit) to a float ``[H, W]`` image in [0, 1]."""
    tokens = []
    for tok, end in _header_tokens(data):
        tokens.append(tok)
        if len(tokens) == 4:
            break
    if len(tokens) < 4 or tokens[0] != b"P5":
        raise ValueError("not a binary PGM (P5) file")
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise ValueError(f"bad PGM header: {exc}") from exc
    if not (0 < maxval <= 65535) or w <= 0 or h <= 0:
        raise ValueError(f"bad PGM header values w={w} h={h} maxval={maxval}")
    dtype = ">u2" if maxval > 255 else "u1"
    start = end + 1
    count = w * h
    need = count * np.dtype(dtype).itemsize
    if len(data) - start < need:
        raise ValueError(f"PGM raster truncated: {len(data) - start} of {need} bytes")
    raster = np.frombuffer(data, dtype=dtype, count=count, offset=start)
    return raster.reshape(h, w).astype(np.float64) / maxval


def write_pgm(path, image: np.ndarray) -> None:
    atomic_write_bytes(Path(path), encode_pgm(image))


def read_pgm(path) -> np.ndarray:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataIOError(f"cannot read image {path}: {exc}") from exc
    try:
        return decode_pgm(data)
    except ValueError as exc:
        raise DataIOError(f"{path}: {exc}") from exc
