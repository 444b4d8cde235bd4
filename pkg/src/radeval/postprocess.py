"""Decode YOLO detection-head grids and run class-aware NMS."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from radeval.errors import ContractError, MalformedAnnotationError
from radeval.geometry import BBox, iou
from radeval.metrics import Detection, score_order

DEFAULT_EVAL_CONF = 0.001
DEFAULT_VIS_CONF = 0.25
DEFAULT_NMS_IOU = 0.45


@dataclass(frozen=True)
class AnchorLevel:
    stride: int
    anchors: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if self.stride <= 0:
            raise ContractError(f"stride must be positive, got {self.stride}")
        if not self.anchors:
            raise ContractError("an anchor level needs at least one anchor")
        for w, h in self.anchors:
            if not (w > 0 and h > 0):
                raise ContractError(f"anchor sizes must be positive, got ({w}, {h})")


@dataclass(frozen=True)
class AnchorSet:
    levels: tuple[AnchorLevel, ...]
    class_names: Optional[tuple[str, ...]] = None

    def __post_init__(self) -> None:
        strides = [lv.stride for lv in self.levels]
        if not strides or any(b <= a for a, b in zip(strides, strides[1:])):
            raise ContractError(f"strides must be non-empty and strictly increasing, got {strides}")

    @classmethod
    def from_json(cls, obj: dict) -> "AnchorSet":
        try:
            levels = tuple(
                AnchorLevel(int(lv["stride"]), tuple((float(w), float(h)) for w, h in lv["anchors"]))
                for lv in obj["levels"]
            )
            names = obj.get("class_names")
            return cls(levels, tuple(str(n) for n in names) if names is not None else None)
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedAnnotationError(f"bad anchors document: {exc}") from None

    @classmethod
    def load(cls, path: str | Path) -> "AnchorSet":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


# YOLOv5 default COCO anchors (P3/8, P4/16, P5/32)
DEFAULT_ANCHORS = AnchorSet((
    AnchorLevel(8, ((10, 13), (16, 30), (33, 23))),
    AnchorLevel(16, ((30, 61), (62, 45), (59, 119))),
    AnchorLevel(32, ((116, 90), (156, 198), (373, 326))),
))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # two-branch form avoids overflow warnings for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def decode_grid(grid: np.ndarray, level: AnchorLevel) -> dict[str, np.ndarray]:
    """Per-slot decoded arrays, each shaped ``(A, S_y, S_x)``.

    Keys: ``cx``, ``cy``, ``w``, ``h`` (model-input pixels), ``conf`` and ``cls``.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 4:
        raise ContractError(f"head grid must be 4-D (A, S_y, S_x, 5+C), got shape {grid.shape}")
    n_anchor, sy, sx, depth = grid.shape
    if n_anchor != len(level.anchors):
        raise ContractError(f"grid has {n_anchor} anchor slots, level defines {len(level.anchors)}")
    if depth < 6:
        raise ContractError(f"head depth must be 5 + C with C >= 1, got {depth}")

    sig = _sigmoid(grid)
    cls_prob = sig[..., 5:]
    stride = float(level.stride)
    rows = np.arange(sy, dtype=np.float64)[None, :, None]
    cols = np.arange(sx, dtype=np.float64)[None, None, :]
    anchor_w = np.array([a[0] for a in level.anchors], dtype=np.float64)[:, None, None]
    anchor_h = np.array([a[1] for a in level.anchors], dtype=np.float64)[:, None, None]
    return {
        "cx": (2.0 * sig[..., 0] - 0.5 + cols) * stride,
        "cy": (2.0 * sig[..., 1] - 0.5 + rows) * stride,
        "w": (2.0 * sig[..., 2]) ** 2 * anchor_w,
        "h": (2.0 * sig[..., 3]) ** 2 * anchor_h,
        "conf": sig[..., 4] * np.max(cls_prob, axis=-1),
        "cls": np.argmax(cls_prob, axis=-1),
    }


def decode_head(
    grid: np.ndarray,
    level: AnchorLevel,
    conf_threshold: float = DEFAULT_EVAL_CONF,
    image_id: str = "",
) -> list[Detection]:
    """Turn one head grid of shape ``(A, S_y, S_x, 5 + C)`` into xyxy detections.

    Boxes are in model-input pixels. Output order is anchor-major, then row,
    then column.
    """
    g = decode_grid(grid, level)
    out = []
    for idx in zip(*np.nonzero(g["conf"] >= conf_threshold)):
        hw, hh = g["w"][idx] / 2.0, g["h"][idx] / 2.0
        x, y = g["cx"][idx], g["cy"][idx]
        out.append(Detection(
            image_id,
            int(g["cls"][idx]),
            float(g["conf"][idx]),
            BBox(float(x - hw), float(y - hh), float(x + hw), float(y + hh)),
        ))
    return out


def nms(dets: Sequence[Detection], iou_threshold: float = DEFAULT_NMS_IOU) -> list[Detection]:
    """Greedy class-aware NMS; a box is dropped only when IoU is strictly above the threshold."""
    if not (0.0 < iou_threshold <= 1.0):
        raise ContractError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    kept: list[Detection] = []
    kept_by_key: dict[tuple[str, int], list[BBox]] = {}
    for i in score_order(dets):
        d = dets[i]
        boxes = kept_by_key.setdefault((d.image_id, d.class_id), [])
        if any(iou(d.box, k) > iou_threshold for k in boxes):
            continue
        boxes.append(d.box)
        kept.append(d)
    return kept
