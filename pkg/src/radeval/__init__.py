"""Chest-radiograph detection evaluation toolkit.

Box geometry, mAP evaluation, YOLO head decoding and NMS, reference
YOLOv5 building blocks, and DICOM ingestion, tied together by the
``radeval`` command line tool.
"""

__version__ = "0.1.0"
