"""Detection matching, precision/recall curves, AP/mAP and confusion matrices.

Matching protocol: detections are visited in descending score order (ties
keep input order); each one claims the highest-IoU unmatched ground truth of
the same image and class whose IoU is at least the threshold, or is a false
positive. AP is the area under the all-points precision envelope.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Optional, Sequence

import numpy as np

from radeval.errors import ContractError, MalformedAnnotationError, UndefinedMetricError
from radeval.geometry import BBox, iou

N_STUDY_CLASSES = 4
STUDY_CLASS_NAMES = ("negative", "typical", "indeterminate", "atypical")


@dataclass(frozen=True)
class Detection:
    image_id: str
    class_id: int
    score: float
    box: BBox

    def __post_init__(self) -> None:
        if not (0.0 <= self.score <= 1.0):
            raise ContractError(f"detection score {self.score!r} outside [0, 1]")


@dataclass(frozen=True)
class GroundTruthBox:
    image_id: str
    class_id: int
    box: BBox


@dataclass(frozen=True)
class MatchOutcome:
    det_index: int
    is_tp: bool
    gt_index: Optional[int] = None


@dataclass(frozen=True)
class PRCurve:
    """(recall, precision) points in descending-score order."""

    recall: tuple[float, ...] = ()
    precision: tuple[float, ...] = ()

    def __len__(self) -> int:
        return len(self.recall)

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.recall, self.precision))


@dataclass
class EvalReport:
    per_class_ap: dict[int, float]
    map_score: float
    iou_threshold: float
    n_detections: int
    n_ground_truth: int
    curves: dict[int, PRCurve] = field(default_factory=dict)
    confusion: Optional[np.ndarray] = None

    def to_dict(self, class_names: Optional[Mapping[int, str]] = None) -> dict:
        def name(c: int) -> str:
            return class_names[c] if class_names else str(c)

        out = {
            "iou_threshold": self.iou_threshold,
            "map": self.map_score,
            "per_class_ap": {name(c): ap for c, ap in sorted(self.per_class_ap.items())},
            "n_detections": self.n_detections,
            "n_ground_truth": self.n_ground_truth,
        }
        if self.confusion is not None:
            out["confusion_matrix"] = self.confusion.tolist()
        return out


def score_order(dets: Sequence[Detection]) -> list[int]:
    """Indices of ``dets`` by descending score; equal scores keep input order."""
    return sorted(range(len(dets)), key=lambda i: -dets[i].score)


def match_detections(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthBox],
    iou_threshold: float = 0.5,
) -> list[MatchOutcome]:
    """Greedy one-to-one matching; outcomes are returned in visiting order."""
    if not (0.0 < iou_threshold <= 1.0):
        raise ContractError(f"iou_threshold must be in (0, 1], got {iou_threshold}")

    pool: dict[tuple[str, int], list[int]] = defaultdict(list)
    for j, g in enumerate(gts):
        pool[(g.image_id, g.class_id)].append(j)
    taken = [False] * len(gts)

    outcomes = []
    for i in score_order(dets):
        d = dets[i]
        best_j, best_iou = None, -1.0
        for j in pool.get((d.image_id, d.class_id), ()):
            if taken[j]:
                continue
            v = iou(d.box, gts[j].box)
            # strict '>' keeps the first ground truth on IoU ties
            if v >= iou_threshold and v > best_iou:
                best_j, best_iou = j, v
        if best_j is None:
            outcomes.append(MatchOutcome(i, False))
        else:
            taken[best_j] = True
            outcomes.append(MatchOutcome(i, True, best_j))
    return outcomes


def pr_curve(outcomes: Sequence[MatchOutcome], n_gt: int) -> PRCurve:
    if n_gt < 0:
        raise ContractError(f"n_gt must be non-negative, got {n_gt}")
    recall, precision = [], []
    tp = 0
    for k, o in enumerate(outcomes, start=1):
        tp += o.is_tp
        recall.append(tp / n_gt if n_gt else 0.0)
        precision.append(tp / k)
    return PRCurve(tuple(recall), tuple(precision))


def average_precision(curve: PRCurve) -> float:
    """Area under the monotone precision envelope of ``curve``."""
    n = len(curve)
    if n == 0:
        return 0.0
    env = list(curve.precision)
    for k in range(n - 2, -1, -1):
        env[k] = max(env[k], env[k + 1])
    ap = 0.0
    prev_r = 0.0
    for r, p in zip(curve.recall, env):
        if r > prev_r:
            ap += (r - prev_r) * p
            prev_r = r
    return ap


def mean_average_precision(per_class: Mapping[Hashable, float]) -> float:
    if not per_class:
        raise UndefinedMetricError("mAP of an empty class set is undefined")
    # math.fsum makes the mean independent of iteration order
    return math.fsum(per_class.values()) / len(per_class)


def evaluate(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthBox],
    iou_threshold: float = 0.5,
) -> EvalReport:
    """Per-class AP and mAP over every class seen in ``dets`` or ``gts``."""
    classes = sorted({d.class_id for d in dets} | {g.class_id for g in gts})
    per_class: dict[int, float] = {}
    curves: dict[int, PRCurve] = {}
    for c in classes:
        cdets = [d for d in dets if d.class_id == c]
        cgts = [g for g in gts if g.class_id == c]
        curve = pr_curve(match_detections(cdets, cgts, iou_threshold), len(cgts))
        curves[c] = curve
        per_class[c] = average_precision(curve)
    return EvalReport(
        per_class_ap=per_class,
        map_score=mean_average_precision(per_class),
        iou_threshold=iou_threshold,
        n_detections=len(dets),
        n_ground_truth=len(gts),
        curves=curves,
    )


def confusion_matrix(pred: Sequence[int], truth: Sequence[int]) -> np.ndarray:
    """4x4 study-level matrix, ``M[t][p]`` counting truth ``t`` predicted as ``p``."""
    if len(pred) != len(truth):
        raise ContractError(f"length mismatch: {len(pred)} predictions vs {len(truth)} labels")
    m = np.zeros((N_STUDY_CLASSES, N_STUDY_CLASSES), dtype=np.int64)
    for k, (p, t) in enumerate(zip(pred, truth)):
        for v in (p, t):
            if isinstance(v, bool) or int(v) != v or not 0 <= v < N_STUDY_CLASSES:
                raise MalformedAnnotationError(f"sample {k}: class {v!r} not in 0..3")
        m[int(t), int(p)] += 1
    return m


def precision_recall_from_confusion(m) -> list[tuple[Optional[float], Optional[float]]]:
    """Per-class (precision, recall); ``None`` marks a 0/0 ratio."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractError(f"confusion matrix must be square, got shape {m.shape}")
    out = []
    for c in range(m.shape[0]):
        col, row = int(m[:, c].sum()), int(m[c, :].sum())
        hit = int(m[c, c])
        out.append((hit / col if col else None, hit / row if row else None))
    return out
