"""Reading and writing of grayscale images, label maps and bubble tables.

Images are plain 2-D numpy arrays: intensities are floats in [0, 1] and
label maps are non-negative integers with 0 as background.  Both are stored
as binary portable graymaps (P5); intensities with maxval 255, label maps
with maxval 65535 (big-endian samples).
"""

from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np

from .errors import ContractError, FormatError

_WHITESPACE = b" \t\n\r\v\f"


def check_gray(img: np.ndarray, name: str = "image") -> np.ndarray:
    """Validate a GrayImage and return it as a float array."""
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ContractError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise ContractError(f"{name} values must lie in [0, 1]")
    return arr


def quantize(img: np.ndarray) -> np.ndarray:
    """Map intensities to 8-bit levels with round-half-up."""
    return np.floor(np.asarray(img, dtype=np.float64) * 255.0 + 0.5).astype(np.uint8)


def _read_header(buf: bytes, path) -> tuple[int, int, int, int]:
    # Returns (width, height, maxval, payload offset).
    if buf[:2] != b"P5":
        raise FormatError(f"{path}: bad magic {buf[:2]!r}, expected b'P5'")
    fields = []
    pos = 2
    names = ("width", "height", "maxval")
    while len(fields) < 3:
        while pos < len(buf) and buf[pos] in _WHITESPACE:
            pos += 1
        if pos < len(buf) and buf[pos : pos + 1] == b"#":
            while pos < len(buf) and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and buf[pos] not in _WHITESPACE and buf[pos : pos + 1] != b"#":
            pos += 1
        token = buf[start:pos]
        field = names[len(fields)]
        if not token.isdigit():
            raise FormatError(f"{path}: malformed header field {field}: {token!r}")
        fields.append(int(token))
    if pos >= len(buf) or buf[pos] not in _WHITESPACE:
        raise FormatError(f"{path}: malformed header, missing separator after maxval")
    width, height, maxval = fields
    if width < 1:
        raise FormatError(f"{path}: malformed header field width: {width}")
    if height < 1:
        raise FormatError(f"{path}: malformed header field height: {height}")
    return width, height, maxval, pos + 1


def _read_pgm(path, expect_maxval: int) -> np.ndarray:
    buf = Path(path).read_bytes()
    width, height, maxval, offset = _read_header(buf, path)
    if maxval != expect_maxval:
        raise FormatError(f"{path}: unsupported maxval {maxval} (expected {expect_maxval})")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    payload = buf[offset:]
    if len(payload) < need:
        raise FormatError(f"{path}: truncated payload ({len(payload)} of {need} bytes)")
    return np.frombuffer(payload[:need], dtype=dtype).reshape(height, width)


def _write_pgm(path, samples: np.ndarray, maxval: int) -> None:
    h, w = samples.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(samples.tobytes())


def load_image(path) -> np.ndarray:
    """Load an 8-bit P5 graymap as a float64 image in [0, 1]."""
    raw = _read_pgm(path, 255)
    return raw.astype(np.float64) / 255.0


def save_image(img: np.ndarray, path) -> None:
    img = check_gray(img)
    _write_pgm(path, quantize(img), 255)


def save_label_map(labels: np.ndarray, path) -> None:
    """Write a label map as a 16-bit big-endian P5 graymap."""
    lm = np.asarray(labels)
    if lm.ndim != 2:
        raise ContractError(f"label map must be 2-D, got shape {lm.shape}")
    if lm.size and (lm.min() < 0 or lm.max() > 65535):
        raise ContractError(
            f"label range [{lm.min()}, {lm.max()}] outside 16-bit range [0, 65535]"
        )
    _write_pgm(path, lm.astype(">u2"), 65535)


def load_label_map(path) -> np.ndarray:
    return _read_pgm(path, 65535).astype(np.int32)


def match_intensity(img: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Histogram-match ``img`` to the intensity distribution of ``reference``.

    Both images are quantized to 256 levels.  Each source level ``s`` is sent
    to the smallest reference level whose CDF reaches the source CDF at ``s``.
    A constant source has no usable CDF and is mapped to the reference
    median level instead.
    """
    src = quantize(check_gray(img, "img"))
    ref = quantize(check_gray(reference, "reference"))
    ref_cdf = np.cumsum(np.bincount(ref.ravel(), minlength=256)) / ref.size
    if src.min() == src.max():
        level = int(np.searchsorted(ref_cdf, 0.5, side="left"))
        return np.full(src.shape, level / 255.0)
    src_cdf = np.cumsum(np.bincount(src.ravel(), minlength=256)) / src.size
    # Tolerance guards against rounding in the cumulative sums.
    lut = np.searchsorted(ref_cdf, src_cdf - 1e-12, side="left")
    lut = np.minimum(lut, 255)
    return lut[src] / 255.0


BUBBLE_CSV_HEADER = ("id", "cx", "cy", "r_eq", "aspect", "theta", "area_px")


def write_bubble_table(path, rows) -> None:
    """Write ground-truth rows ``(id, cx, cy, r_eq, aspect, theta, area_px)``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BUBBLE_CSV_HEADER)
        for bid, cx, cy, r_eq, aspect, theta, area in rows:
            writer.writerow(
                [int(bid), f"{cx:.6f}", f"{cy:.6f}", f"{r_eq:.6f}", f"{aspect:.6f}",
                 f"{theta:.6f}", int(area)]
            )


def read_bubble_table(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != BUBBLE_CSV_HEADER:
            raise FormatError(f"{path}: bad bubble table header {reader.fieldnames}")
        rows = []
        for rec in reader:
            rows.append(
                {
                    "id": int(rec["id"]),
                    "cx": float(rec["cx"]),
                    "cy": float(rec["cy"]),
                    "r_eq": float(rec["r_eq"]),
                    "aspect": float(rec["aspect"]),
                    "theta": float(rec["theta"]),
                    "area_px": int(rec["area_px"]),
                }
            )
    return rows


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
