"""CSV exchange formats for predictions, ground truth and PR curves.

Prediction files carry the header ``image_id,class,score,x_min,y_min,x_max,y_max``;
truth files are identical without ``score``. Coordinates are half-open
xyxy pixels in the original image.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from radeval.errors import ContractError, MalformedAnnotationError
from radeval.geometry import BBox
from radeval.metrics import Detection, GroundTruthBox, PRCurve

PRED_HEADER = ["image_id", "class", "score", "x_min", "y_min", "x_max", "y_max"]
TRUTH_HEADER = ["image_id", "class", "x_min", "y_min", "x_max", "y_max"]
CURVE_HEADER = ["recall", "precision"]


@dataclass(frozen=True)
class PredictionRecord:
    image_id: str
    class_name: str
    score: Optional[float]  # None for ground-truth rows
    box: BBox


def _float(text: str, what: str, line: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise MalformedAnnotationError(f"{what} {text!r} is not a number", line=line) from None
    if not math.isfinite(v):
        raise MalformedAnnotationError(f"{what} {text!r} is not finite", line=line)
    return v


def _read(path: str | Path, header: list[str]) -> list[PredictionRecord]:
    has_score = "score" in header
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            return out
        if [h.strip() for h in first] != header:
            raise MalformedAnnotationError(f"expected header {','.join(header)}", line=1)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise MalformedAnnotationError(f"expected {len(header)} fields, got {len(row)}", line=line)
            image_id, cls = row[0].strip(), row[1].strip()
            if not image_id or not cls:
                raise MalformedAnnotationError("empty image_id or class", line=line)
            score = None
            if has_score:
                score = _float(row[2], "score", line)
                if not 0.0 <= score <= 1.0:
                    raise MalformedAnnotationError(f"score {score} outside [0, 1]", line=line)
            coords = [_float(v, name, line) for v, name in zip(row[-4:], header[-4:])]
            try:
                box = BBox(*coords)
            except ContractError as exc:
                raise MalformedAnnotationError(str(exc), line=line) from None
            out.append(PredictionRecord(image_id, cls, score, box))
    return out


def load_predictions(path: str | Path) -> list[PredictionRecord]:
    return _read(path, PRED_HEADER)


def load_truth(path: str | Path) -> list[PredictionRecord]:
    return _read(path, TRUTH_HEADER)


def write_predictions(path: str | Path, records: Iterable[PredictionRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PRED_HEADER)
        for r in records:
            w.writerow([r.image_id, r.class_name, repr(r.score), *map(repr, r.box.as_tuple())])


def write_truth(path: str | Path, records: Iterable[PredictionRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUTH_HEADER)
        for r in records:
            w.writerow([r.image_id, r.class_name, *map(repr, r.box.as_tuple())])


def class_index(*record_lists: Sequence[PredictionRecord]) -> dict[str, int]:
    """Stable name -> id mapping over every class seen in the inputs."""
    names = sorted({r.class_name for recs in record_lists for r in recs})
    return {n: i for i, n in enumerate(names)}


def to_detections(records: Sequence[PredictionRecord], index: dict[str, int]) -> list[Detection]:
    return [Detection(r.image_id, index[r.class_name], r.score, r.box) for r in records]


def to_ground_truth(records: Sequence[PredictionRecord], index: dict[str, int]) -> list[GroundTruthBox]:
    return [GroundTruthBox(r.image_id, index[r.class_name], r.box) for r in records]


def write_curve(path: str | Path, curve: PRCurve) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        for r, p in curve.points():
            w.writerow([repr(r), repr(p)])


def read_curve(path: str | Path) -> PRCurve:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != CURVE_HEADER:
            raise MalformedAnnotationError("expected header recall,precision", line=1)
        pts = [(_float(r, "recall", reader.line_num), _float(p, "precision", reader.line_num))
               for r, p in reader]
    return PRCurve(tuple(r for r, _ in pts), tuple(p for _, p in pts))
