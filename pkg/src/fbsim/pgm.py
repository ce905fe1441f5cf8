"""Minimal PGM (netpbm greyscale) reading and writing."""
from __future__ import annotations

import re

import numpy as np


class PGMError(ValueError):
    pass


def encode_ascii(image: np.ndarray, maxval: int) -> bytes:
    """ASCII "P2" encoding, one image row per line."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise PGMError("PGM images are two-dimensional")
    if not (1 <= maxval <= 65535):
        raise PGMError(f"maxval must lie in [1, 65535], got {maxval}")
    if img.size and (img.min() < 0 or img.max() > maxval):
        raise PGMError("pixel values outside [0, maxval]")
    h, w = img.shape
    lines = ["P2", f"{w} {h}", str(maxval)]
    lines += [" ".join(str(int(v)) for v in row) for row in img]
    return ("\n".join(lines) + "\n").encode("ascii")


def _tokens(data: bytes):
    """Header tokens with '#' comments stripped, plus the offset after the last one."""
    out, i, n = [], 0, len(data)
    while len(out) < 4 and i < n:
        c = data[i:i + 1]
        if c == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < n and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
                j += 1
            out.append(data[i:j])
            i = j
    return out, i


def decode(data: bytes) -> tuple[np.ndarray, int]:
    """Parse a P2 or P5 image; returns (pixels, maxval)."""
    head, pos = _tokens(data)
    if len(head) < 4 or head[0] not in (b"P2", b"P5"):
        raise PGMError("not a P2/P5 PGM file")
    try:
        w, h, maxval = (int(x) for x in head[1:4])
    except ValueError as exc:
        raise PGMError("malformed PGM header") from exc
    if w < 1 or h < 1 or not (1 <= maxval <= 65535):
        raise PGMError("invalid PGM dimensions or maxval")
    if head[0] == b"P2":
        body = re.sub(rb"#[^\r\n]*", b"", data[pos:])
        try:
            vals = [int(x) for x in body.split()]
        except ValueError as exc:
            raise PGMError("non-integer PGM sample") from exc
        if len(vals) != w * h:
            raise PGMError(f"expected {w * h} samples, found {len(vals)}")
        img = np.array(vals, dtype=np.int64).reshape(h, w)
    else:
        raw = data[pos + 1:]
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        if len(raw) < w * h * dtype.itemsize:
            raise PGMError("truncated P5 raster")
        img = np.frombuffer(raw[: w * h * dtype.itemsize], dtype=dtype).reshape(h, w).astype(np.int64)
    if img.max() > maxval:
        raise PGMError("sample exceeds maxval")
    return img, maxval
