"""PPM (P6) and PFM image codecs.

Both formats are trivial headers over raw samples, which keeps the
on-disk artifacts inspectable and the round-trip contract exact:
``write`` then ``read`` reproduces bits at matching depth.  LDR frames
travel as 8- or 16-bit PPM, HDR radiance as 32-bit float color PFM
(the ``PF`` variant; scale sign encodes endianness, rows are stored
bottom-up).

All writes go through a temp file in the target directory followed by an
atomic rename, so readers never observe partial files.  Malformed input
is reported with the byte offset where parsing stopped.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .tensor import Tensor

__all__ = ["CodecError", "read_ppm", "write_ppm", "read_pfm", "write_pfm", "atomic_write_bytes"]


class CodecError(ValueError):
    """Malformed or unsupported image file."""

    def __init__(self, path, message: str, offset: int | None = None):
        self.path = str(path)
        self.offset = offset
        suffix = f" at byte offset {offset}" if offset is not None else ""
        super().__init__(f"{path}: {message}{suffix}")


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write via temp file + rename so no reader ever sees a partial file."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _HeaderScanner:
    """Whitespace/comment-aware token reader that remembers byte offsets."""

    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def token(self, what: str) -> bytes:
        blob, n = self.blob, len(self.blob)
        while self.pos < n:
            c = blob[self.pos : self.pos + 1]
            if c == b"#":  # comment runs to end of line
                while self.pos < n and blob[self.pos : self.pos + 1] not in (b"\n", b"\r"):
                    self.pos += 1
            elif c.isspace():
                self.pos += 1
            else:
                break
        if self.pos >= n:
            raise CodecError(self.path, f"unexpected end of header, expected {what}", self.pos)
        start = self.pos
        while self.pos < n and not blob[self.pos : self.pos + 1].isspace():
            self.pos += 1
        return blob[start : self.pos]

    def integer(self, what: str, lo: int, hi: int) -> int:
        tok = self.token(what)
        start_of_token = self.pos - len(tok)
        try:
            value = int(tok)
        except ValueError:
            raise CodecError(
                self.path, f"expected integer {what}, found {tok!r}", start_of_token
            ) from None
        if not lo <= value <= hi:
            raise CodecError(
                self.path, f"{what} {value} outside [{lo}, {hi}]", start_of_token
            )
        return value

    def skip_single_whitespace(self):
        # exactly one whitespace byte separates the header from the payload
        self.pos += 1


# ---------------------------------------------------------------------------
# PPM
# ---------------------------------------------------------------------------


def read_ppm(path) -> Tensor:
    """Binary P6 PPM -> float32 tensor (1, 3, H, W) scaled into [0, 1]."""
    with open(path, "rb") as f:
        blob = f.read()
    s = _HeaderScanner(blob, path)
    magic = s.token("magic")
    if magic != b"P6":
        raise CodecError(path, f"not a binary PPM: magic {magic!r}", 0)
    width = s.integer("width", 1, 1 << 20)
    height = s.integer("height", 1, 1 << 20)
    maxval = s.integer("maxval", 1, 65535)
    s.skip_single_whitespace()

    bytes_per_sample = 1 if maxval < 256 else 2
    expected = width * height * 3 * bytes_per_sample
    payload = blob[s.pos : s.pos + expected]
    if len(payload) != expected:
        raise CodecError(
            path,
            f"truncated payload: expected {expected} bytes, found {len(payload)}",
            s.pos + len(payload),
        )
    dtype = np.uint8 if bytes_per_sample == 1 else np.dtype(">u2")
    samples = np.frombuffer(payload, dtype=dtype).astype(np.float32)
    arr = samples.reshape(height, width, 3).transpose(2, 0, 1)[None]
    return Tensor(arr / np.float32(maxval))


def write_ppm(path, img: Tensor, maxval: int = 255) -> None:
    """Float tensor in [0,1] -> binary P6 at 8- or 16-bit depth."""
    if maxval not in (255, 65535):
        raise ValueError(f"maxval must be 255 or 65535, got {maxval}")
    if img.shape[0] != 1 or img.shape[1] != 3:
        raise ValueError(f"expected a (1, 3, H, W) image, got {img.shape}")
    data = img.data
    if not np.all(np.isfinite(data)):
        raise ValueError("image contains non-finite values")
    _, _, h, w = img.shape
    scaled = np.round(np.clip(data[0], 0.0, 1.0) * maxval).astype(
        np.uint8 if maxval == 255 else np.dtype(">u2")
    )
    header = f"P6\n{w} {h}\n{maxval}\n".encode("ascii")
    atomic_write_bytes(path, header + scaled.transpose(1, 2, 0).tobytes())


# ---------------------------------------------------------------------------
# PFM
# ---------------------------------------------------------------------------


def read_pfm(path) -> Tensor:
    """Color PFM -> float32 tensor (1, 3, H, W).

    Grayscale ('Pf') files are rejected; NaN samples are rejected with the
    offending pixel named in image (top-down) coordinates.
    """
    with open(path, "rb") as f:
        blob = f.read()
    s = _HeaderScanner(blob, path)
    magic = s.token("magic")
    if magic == b"Pf":
        raise CodecError(path, "grayscale PFM ('Pf') is not supported, need color 'PF'", 0)
    if magic != b"PF":
        raise CodecError(path, f"not a PFM: magic {magic!r}", 0)
    width = s.integer("width", 1, 1 << 20)
    height = s.integer("height", 1, 1 << 20)
    scale_tok = s.token("scale")
    try:
        scale = float(scale_tok)
    except ValueError:
        raise CodecError(
            path, f"expected scale float, found {scale_tok!r}", s.pos - len(scale_tok)
        ) from None
    if scale == 0.0:
        raise CodecError(path, "scale must be nonzero", s.pos - len(scale_tok))
    s.skip_single_whitespace()

    expected = width * height * 3 * 4
    payload = blob[s.pos : s.pos + expected]
    if len(payload) != expected:
        raise CodecError(
            path,
            f"truncated payload: expected {expected} bytes, found {len(payload)}",
            s.pos + len(payload),
        )
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    samples = np.frombuffer(payload, dtype=dtype).astype(np.float32)
    rows = samples.reshape(height, width, 3)[::-1]  # stored bottom-up
    nan_pos = np.argwhere(np.isnan(rows))
    if len(nan_pos):
        r, c, ch = nan_pos[0]
        raise CodecError(path, f"NaN sample at pixel (row {r}, col {c}, channel {ch})")
    if abs(scale) != 1.0:
        rows = rows * np.float32(abs(scale))
    return Tensor(rows.transpose(2, 0, 1)[None].copy())


def write_pfm(path, img: Tensor) -> None:
    """Float32 tensor (1, 3, H, W) -> little-endian color PFM (scale -1.0)."""
    if img.shape[0] != 1 or img.shape[1] != 3:
        raise ValueError(f"expected a (1, 3, H, W) image, got {img.shape}")
    data = img.data.astype(np.float32, copy=False)
    if np.isnan(data).any():
        raise ValueError("image contains NaN values")
    _, _, h, w = img.shape
    header = f"PF\n{w} {h}\n-1.0\n".encode("ascii")
    rows = data[0].transpose(1, 2, 0)[::-1]  # bottom-up on disk
    payload = np.ascontiguousarray(rows, dtype="<f4").tobytes()
    atomic_write_bytes(path, header + payload)
