"""Study-level label table: one id column plus four one-hot appearance flags."""

from __future__ import annotations

import csv
import enum
import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from radeval.errors import MalformedAnnotationError
from radeval.metrics import GroundTruthBox


class StudyClass(enum.IntEnum):
    NEGATIVE = 0
    TYPICAL = 1
    INDETERMINATE = 2
    ATYPICAL = 3


# header keyword -> class; matched case-insensitively against each flag column
_HEADER_KEYS = {
    "negative": StudyClass.NEGATIVE,
    "typical": StudyClass.TYPICAL,
    "indeterminate": StudyClass.INDETERMINATE,
    "atypical": StudyClass.ATYPICAL,
}


@dataclass(frozen=True)
class StudyLabel:
    study_id: str
    label: StudyClass


@dataclass
class ImageAnnotation:
    image_id: str
    study_id: str
    boxes: list[GroundTruthBox] = field(default_factory=list)


def _column_class(name: str) -> StudyClass:
    words = name.strip().lower().replace("_", " ").split()
    # "atypical" contains "typical", so match on whole words
    for key, cls in _HEADER_KEYS.items():
        if key in words:
            return cls
    raise MalformedAnnotationError(f"unrecognized label column {name!r}", line=1)


def load_study_labels(text: str) -> list[StudyLabel]:
    """Parse comma-separated study labels; line numbers in errors count the header as line 1."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise MalformedAnnotationError("label table is empty", line=1)
    header = rows[0]
    if len(header) != 5:
        raise MalformedAnnotationError(f"expected 5 columns (id + 4 flags), got {len(header)}", line=1)
    classes = [_column_class(h) for h in header[1:]]
    if sorted(classes) != list(StudyClass):
        raise MalformedAnnotationError("label columns must cover each appearance class once", line=1)

    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 5:
            raise MalformedAnnotationError(f"expected 5 fields, got {len(row)}", line=lineno)
        study_id = row[0].strip()
        if not study_id:
            raise MalformedAnnotationError("empty study id", line=lineno)
        flags = []
        for value in row[1:]:
            value = value.strip()
            if value not in ("0", "1"):
                raise MalformedAnnotationError(f"flag value {value!r} is not 0 or 1", line=lineno)
            flags.append(value == "1")
        hot = [cls for cls, f in zip(classes, flags) if f]
        if len(hot) != 1:
            raise MalformedAnnotationError(
                f"study {study_id!r} has {len(hot)} positive flags, expected exactly one", line=lineno
            )
        out.append(StudyLabel(study_id, hot[0]))
    return out


def label_counts(labels: Sequence[StudyLabel]) -> dict[str, int]:
    counts = Counter(lab.label for lab in labels)
    return {cls.name.lower(): counts.get(cls, 0) for cls in StudyClass}
