"""Pixel normalization and the 512x512x3 model-input contract."""

from __future__ import annotations

import re
from collections import Counter
from pathlib import Path
from typing import Iterable

import numpy as np
from PIL import Image

from radeval.errors import ContractError, MalformedFileError
from radeval.geometry import LetterboxTransform
from radeval.ingest.dicom import DicomImage

MODEL_SIZE = 512
MODEL_CHANNELS = 3
LETTERBOX_FILL = 114
UNKNOWN_BODY_PART = "UNKNOWN"


def normalize_pixels(img: DicomImage) -> np.ndarray:
    """Map stored pixel values to an 8-bit grayscale image (bright = dense).

    Linear VOI windowing is applied first when the file carries a window,
    MONOCHROME1 images are inverted, and the result is min-max scaled with
    ``floor(255 * (v - min) / (max - min))``. A constant image maps to zeros.
    """
    v = np.asarray(img.pixels)
    if img.window_center is not None and img.window_width is not None:
        lo = img.window_center - img.window_width / 2.0
        hi = img.window_center + img.window_width / 2.0
        v = np.clip(v.astype(np.float64), lo, hi)
    else:
        v = v.astype(np.int64)
    if v.size == 0:
        return np.zeros(v.shape, dtype=np.uint8)
    if img.photometric == "MONOCHROME1":
        v = v.max() - v
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros(v.shape, dtype=np.uint8)
    if v.dtype.kind == "i":
        out = (255 * (v - lo)) // (hi - lo)
    else:
        out = np.floor(255.0 * (v - lo) / (hi - lo))
    return np.clip(out, 0, 255).astype(np.uint8)


def letterbox_image(gray: np.ndarray, size: int = MODEL_SIZE, fill: int = LETTERBOX_FILL):
    """Resize ``gray`` into a ``size x size`` canvas, keeping aspect ratio.

    Returns the uint8 canvas and the :class:`LetterboxTransform` used.
    """
    gray = np.asarray(gray)
    if gray.ndim != 2 or gray.shape[0] == 0 or gray.shape[1] == 0:
        raise ContractError(f"expected a non-empty 2-D image, got shape {gray.shape}")
    h, w = gray.shape
    t = LetterboxTransform.fit(w, h, size, size)
    canvas = np.full((size, size), fill, dtype=np.uint8)
    rw, rh = t.resized_size
    if (rw, rh) == (w, h):
        resized = gray.astype(np.uint8)
    else:
        resized = np.asarray(Image.fromarray(gray.astype(np.uint8)).resize((rw, rh), Image.BILINEAR))
    top, left = int(t.pad_top), int(t.pad_left)
    canvas[top:top + rh, left:left + rw] = resized
    return canvas, t


def to_model_input(gray: np.ndarray, size: int = MODEL_SIZE, fill: int = LETTERBOX_FILL):
    """Letterbox, replicate to 3 channels and scale to [0, 1].

    Returns a float32 ``(1, 3, size, size)`` tensor and the letterbox transform.
    """
    canvas, t = letterbox_image(gray, size, fill)
    x = canvas.astype(np.float32) / np.float32(255.0)
    return np.repeat(x[None, None], MODEL_CHANNELS, axis=1), t


def body_part_distribution(images: Iterable[DicomImage]) -> dict[str, int]:
    """Histogram of BodyPartExamined, most common first; missing tags count as UNKNOWN."""
    counts = Counter((img.body_part or UNKNOWN_BODY_PART) for img in images)
    return dict(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])))


def write_pgm(path: str | Path, gray: np.ndarray) -> None:
    gray = np.asarray(gray, dtype=np.uint8)
    h, w = gray.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + gray.tobytes())


_PGM_HEADER = re.compile(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s")


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = _PGM_HEADER.match(data)
    if not m:
        raise MalformedFileError(f"{path}: not a binary PGM")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise MalformedFileError(f"{path}: only 8-bit PGM is supported")
    body = data[m.end():]
    if len(body) < w * h:
        raise MalformedFileError(f"{path}: truncated PGM payload")
    return np.frombuffer(body[:w * h], dtype=np.uint8).reshape(h, w).copy()
