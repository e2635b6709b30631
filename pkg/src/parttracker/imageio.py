"""Minimal image I/O: PGM/PPM read/write without dependencies, PNG via Pillow.

Binary (P5/P6) and ASCII (P2/P3) netpbm variants are supported, 8-bit
only.  Grayscale images come back as uint8 (H, W); color as (H, W, 3).
"""

from __future__ import annotations

import os
import re

import numpy as np

from .errors import InvalidInputError

_TOKEN = re.compile(rb"(?:\s|^)(?:#[^\n]*\n\s*)*([^\s#]+)")


def _read_tokens(data: bytes, count: int, start: int):
    """Read whitespace/comment-separated header tokens, return (tokens, end)."""
    toks = []
    pos = start
    while len(toks) < count:
        m = _TOKEN.match(data, pos)
        if not m:
            raise InvalidInputError("truncated netpbm header")
        toks.append(m.group(1))
        pos = m.end()
    return toks, pos


def read_image(path) -> np.ndarray:
    """Load PGM/PPM (or PNG if Pillow is installed) as a uint8 array."""
    path = os.fspath(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        try:
            from PIL import Image
        except ImportError as exc:
            raise InvalidInputError(
                f"{path}: PNG input needs Pillow (pip install parttracker[png])"
            ) from exc
        img = Image.open(path)
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB")
        return np.asarray(img, dtype=np.uint8)
    magic = data[:2]
    if magic not in (b"P2", b"P3", b"P5", b"P6"):
        raise InvalidInputError(f"{path}: unsupported image format (magic {magic!r})")
    (w, h, maxval), pos = _read_tokens(data, 3, 2)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise InvalidInputError(f"{path}: malformed netpbm header")
    if w <= 0 or h <= 0:
        raise InvalidInputError(f"{path}: bad dimensions {w}x{h}")
    if maxval != 255:
        raise InvalidInputError(f"{path}: only 8-bit images supported, maxval={maxval}")
    channels = 3 if magic in (b"P3", b"P6") else 1
    count = w * h * channels
    if magic in (b"P5", b"P6"):
        raw = data[pos + 1 : pos + 1 + count]  # single whitespace after maxval
        if len(raw) < count:
            raise InvalidInputError(f"{path}: truncated pixel data")
        flat = np.frombuffer(raw, dtype=np.uint8, count=count)
    else:
        vals = data[pos:].split()
        if len(vals) < count:
            raise InvalidInputError(f"{path}: truncated pixel data")
        flat = np.array(vals[:count], dtype=np.intp)
        if flat.min() < 0 or flat.max() > 255:
            raise InvalidInputError(f"{path}: pixel value out of range")
        flat = flat.astype(np.uint8)
    if channels == 1:
        return flat.reshape(h, w)
    return flat.reshape(h, w, 3)


def write_pgm(path, img: np.ndarray) -> None:
    """Write a grayscale uint8 array as binary PGM."""
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise InvalidInputError(f"PGM wants a 2-D array, got shape {arr.shape}")
    arr = np.clip(arr, 0, 255).astype(np.uint8)
    h, w = arr.shape
    with open(os.fspath(path), "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def write_ppm(path, img: np.ndarray) -> None:
    """Write an RGB uint8 array as binary PPM."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidInputError(f"PPM wants an (H, W, 3) array, got shape {arr.shape}")
    arr = np.clip(arr, 0, 255).astype(np.uint8)
    h, w = arr.shape[:2]
    with open(os.fspath(path), "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())
