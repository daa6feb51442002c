"""Image file I/O: PFM float maps and PNG previews/masks.

PFM is the float channel store (little-endian, negative scale header,
rows bottom-to-top per the format).  8-bit PNG is for clamped RGB
previews, 16-bit grayscale PNG for per-channel weight masks.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import FormatError


def write_pfm(path, data):
    """Write (H,W,3) as color 'PF' or (H,W) as grayscale 'Pf', float32 LE."""
    a = np.asarray(data, dtype=np.float32)
    if a.ndim == 3 and a.shape[2] == 3:
        header = b"PF\n"
    elif a.ndim == 2:
        header = b"Pf\n"
    else:
        raise FormatError(f"PFM needs (H,W) or (H,W,3), got {a.shape}")
    h, w = a.shape[:2]
    with open(path, "wb") as f:
        f.write(header)
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")  # negative scale: little-endian
        f.write(a[::-1].astype("<f4").tobytes())


def read_pfm(path):
    with open(path, "rb") as f:
        magic = _read_token(f)
        if magic == b"PF":
            channels = 3
        elif magic == b"Pf":
            channels = 1
        else:
            raise FormatError(f"{path}: not a PFM file (magic {magic!r})")
        w = int(_read_token(f))
        h = int(_read_token(f))
        scale = float(_read_token(f))
        dtype = "<f4" if scale < 0 else ">f4"
        count = w * h * channels
        raw = f.read(4 * count)
        if len(raw) != 4 * count:
            raise FormatError(f"{path}: truncated PFM payload")
        a = np.frombuffer(raw, dtype=dtype).astype(np.float32)
    a = a.reshape(h, w, channels)[::-1]
    if abs(scale) != 1.0:
        a = a * abs(scale)
    return a[:, :, 0] if channels == 1 else a


def _read_token(f):
    # whitespace-delimited ASCII token
    tok = b""
    while True:
        c = f.read(1)
        if not c:
            raise FormatError("unexpected end of PFM header")
        if c in b" \t\n\r":
            if tok:
                return tok
            continue
        tok += c


def write_png8(path, rgb):
    """Clamp linear RGB to [0,1] and store as 8-bit PNG (export-time clamp)."""
    a = np.clip(np.asarray(rgb, dtype=np.float64), 0.0, 1.0)
    img = Image.fromarray((a * 255.0 + 0.5).astype(np.uint8), mode="RGB")
    img.save(path, format="PNG")


def read_png8(path):
    img = Image.open(path).convert("RGB")
    return np.asarray(img, dtype=np.float32) / 255.0


def write_png16(path, gray):
    """Store a [0,1] float channel as 16-bit grayscale PNG."""
    a = np.clip(np.asarray(gray, dtype=np.float64), 0.0, 1.0)
    img = Image.fromarray((a * 65535.0 + 0.5).astype(np.uint16))
    img.save(path, format="PNG")


def read_png16(path):
    img = Image.open(path)
    a = np.asarray(img, dtype=np.float64)
    return (a / 65535.0).astype(np.float32)
