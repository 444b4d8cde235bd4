"""DICOM ingestion, pixel preprocessing and study-level labels."""

from radeval.ingest.dicom import DicomImage, encode_image, parse_dicom
from radeval.ingest.labels import ImageAnnotation, StudyClass, StudyLabel, load_study_labels
from radeval.ingest.preprocess import (
    body_part_distribution,
    letterbox_image,
    normalize_pixels,
    to_model_input,
)

__all__ = [
    "DicomImage", "encode_image", "parse_dicom", "ImageAnnotation", "StudyClass", "StudyLabel",
    "load_study_labels", "body_part_distribution", "letterbox_image", "normalize_pixels",
    "to_model_input",
]
