"""Axis-aligned boxes, IoU, box-format conversion and the letterbox transform.

All pixel boxes use the half-open convention ``[min, max)``: a box spanning
pixels 0..9 is written ``(0, 0, 10, 10)`` and has area ``width * height``
with no +1 correction. Normalized boxes are ``(cx, cy, w, h)`` relative to
the image width/height.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence, Union

from radeval.errors import ContractError, MalformedAnnotationError

_NORM_TOL = 1e-6


@dataclass(frozen=True)
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if not (self.x_max >= self.x_min and self.y_max >= self.y_min):
            raise ContractError(f"inverted box {self.as_tuple()}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def clamp(self, width: float, height: float) -> "BBox":
        """Clip the box to the image ``[0, width) x [0, height)``."""
        x0 = min(max(self.x_min, 0.0), width)
        y0 = min(max(self.y_min, 0.0), height)
        x1 = min(max(self.x_max, 0.0), width)
        y1 = min(max(self.y_max, 0.0), height)
        return BBox(x0, y0, x1, y1)


class BoxFormat(enum.Enum):
    XYXY_PIXEL = "xyxy_pixel"
    XYWH_CENTER_NORMALIZED = "xywh_center_normalized"


BoxLike = Union[BBox, Sequence[float]]


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0.0 when the union is empty."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, inter / union)


def _as_tuple(box: BoxLike) -> tuple[float, float, float, float]:
    if isinstance(box, BBox):
        return box.as_tuple()
    if len(box) != 4:
        raise MalformedAnnotationError(f"expected 4 box coordinates, got {len(box)}")
    return tuple(float(v) for v in box)  # type: ignore[return-value]


def convert(box: BoxLike, src: BoxFormat, dst: BoxFormat, img_w: int, img_h: int):
    """Re-express ``box`` from ``src`` format into ``dst`` format.

    Pixel output is returned as a :class:`BBox`, normalized output as a
    ``(cx, cy, w, h)`` tuple.

    Raises:
        MalformedAnnotationError: a normalized input lies outside [0, 1].
        ContractError: non-positive image dimensions.
    """
    if img_w <= 0 or img_h <= 0:
        raise ContractError(f"image size must be positive, got {img_w}x{img_h}")
    vals = _as_tuple(box)
    if src is BoxFormat.XYWH_CENTER_NORMALIZED:
        for v in vals:
            if not (-_NORM_TOL <= v <= 1.0 + _NORM_TOL):
                raise MalformedAnnotationError(f"normalized coordinate {v!r} outside [0, 1]")
        cx, cy, w, h = vals
        if w < 0 or h < 0:
            raise MalformedAnnotationError(f"negative normalized size in {vals}")
        xyxy = (
            (cx - w / 2.0) * img_w,
            (cy - h / 2.0) * img_h,
            (cx + w / 2.0) * img_w,
            (cy + h / 2.0) * img_h,
        )
    else:
        xyxy = vals
        if xyxy[2] < xyxy[0] or xyxy[3] < xyxy[1]:
            raise MalformedAnnotationError(f"inverted pixel box {xyxy}")

    if dst is BoxFormat.XYXY_PIXEL:
        return BBox(*xyxy)
    x0, y0, x1, y1 = xyxy
    return (
        (x0 + x1) / 2.0 / img_w,
        (y0 + y1) / 2.0 / img_h,
        (x1 - x0) / img_w,
        (y1 - y0) / img_h,
    )


@dataclass(frozen=True)
class LetterboxTransform:
    """Aspect-preserving resize plus padding from a source image to a fixed canvas."""

    src_width: int
    src_height: int
    dst_width: int
    dst_height: int
    scale: float
    pad_left: float
    pad_top: float

    @classmethod
    def fit(cls, src_width: int, src_height: int, dst_width: int = 512, dst_height: int = 512):
        if min(src_width, src_height, dst_width, dst_height) <= 0:
            raise ContractError(
                f"letterbox dimensions must be positive: {src_width}x{src_height} -> {dst_width}x{dst_height}"
            )
        scale = min(dst_width / src_width, dst_height / src_height)
        # remainder of an odd padding goes to the bottom/right
        pad_left = float(math.floor((dst_width - scale * src_width) / 2.0))
        pad_top = float(math.floor((dst_height - scale * src_height) / 2.0))
        return cls(src_width, src_height, dst_width, dst_height, scale, pad_left, pad_top)

    @property
    def resized_size(self) -> tuple[int, int]:
        """Integer (width, height) of the resized image before padding."""
        return (
            max(1, int(round(self.scale * self.src_width))),
            max(1, int(round(self.scale * self.src_height))),
        )

    def to_dict(self) -> dict:
        return {
            "src_width": self.src_width,
            "src_height": self.src_height,
            "dst_width": self.dst_width,
            "dst_height": self.dst_height,
            "scale": self.scale,
            "pad_left": self.pad_left,
            "pad_top": self.pad_top,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LetterboxTransform":
        try:
            t = cls(
                int(d["src_width"]), int(d["src_height"]),
                int(d["dst_width"]), int(d["dst_height"]),
                float(d["scale"]), float(d["pad_left"]), float(d["pad_top"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedAnnotationError(f"bad letterbox record {d!r}: {exc}") from None
        if t.scale <= 0 or min(t.src_width, t.src_height, t.dst_width, t.dst_height) <= 0:
            raise MalformedAnnotationError(f"bad letterbox record {d!r}")
        return t

    @classmethod
    def identity(cls, width: int, height: int) -> "LetterboxTransform":
        return cls(width, height, width, height, 1.0, 0.0, 0.0)


def letterbox_apply(t: LetterboxTransform, b: BBox) -> BBox:
    """Map a source-image box into canvas space."""
    s = t.scale
    return BBox(
        b.x_min * s + t.pad_left,
        b.y_min * s + t.pad_top,
        b.x_max * s + t.pad_left,
        b.y_max * s + t.pad_top,
    )


def letterbox_invert(t: LetterboxTransform, b: BBox) -> BBox:
    """Map a canvas-space box back to source-image pixels."""
    s = t.scale
    return BBox(
        (b.x_min - t.pad_left) / s,
        (b.y_min - t.pad_top) / s,
        (b.x_max - t.pad_left) / s,
        (b.y_max - t.pad_top) / s,
    )
