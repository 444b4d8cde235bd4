"""Flat binary tensor container shared by refnet weights and raw head grids.

Layout::

    uint64 LE   header length H
    H bytes     UTF-8 JSON: {name: {"shape": [...], "offset": int}, "__metadata__": {...}}
    data        little-endian float32 values; offsets are bytes from the start of data

Each tensor occupies ``prod(shape) * 4`` bytes at its offset.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Mapping, Optional

import numpy as np

from radeval.errors import MalformedAnnotationError

_LEN = struct.Struct("<Q")
_F32 = np.dtype("<f4")
META_KEY = "__metadata__"


class TensorFileError(MalformedAnnotationError):
    """The tensor container header or payload is inconsistent."""


def dumps(tensors: Mapping[str, np.ndarray], metadata: Optional[dict] = None) -> bytes:
    header: dict[str, Any] = {}
    chunks = []
    offset = 0
    for name, arr in tensors.items():
        if name == META_KEY:
            raise ValueError(f"{META_KEY!r} is reserved")
        data = np.ascontiguousarray(arr, dtype=_F32).tobytes()
        header[name] = {"shape": list(np.shape(arr)), "offset": offset}
        chunks.append(data)
        offset += len(data)
    if metadata is not None:
        header[META_KEY] = metadata
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    return _LEN.pack(len(head)) + head + b"".join(chunks)


def loads(buf: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if len(buf) < _LEN.size:
        raise TensorFileError("tensor file shorter than its length prefix")
    (hlen,) = _LEN.unpack_from(buf, 0)
    if hlen > len(buf) - _LEN.size:
        raise TensorFileError(f"header length {hlen} exceeds file size {len(buf)}")
    try:
        header = json.loads(buf[_LEN.size:_LEN.size + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TensorFileError(f"unreadable header: {exc}") from None
    if not isinstance(header, dict):
        raise TensorFileError("header must be a JSON object")
    data = memoryview(buf)[_LEN.size + hlen:]
    meta = header.pop(META_KEY, {}) or {}
    tensors = {}
    for name, info in header.items():
        try:
            shape = tuple(int(s) for s in info["shape"])
            offset = int(info["offset"])
        except (KeyError, TypeError, ValueError):
            raise TensorFileError(f"tensor {name!r}: header entry needs shape and offset") from None
        if offset < 0 or any(s < 0 for s in shape):
            raise TensorFileError(f"tensor {name!r}: negative shape or offset")
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4
        if offset + nbytes > len(data):
            raise TensorFileError(f"tensor {name!r}: payload runs past end of file")
        arr = np.frombuffer(data[offset:offset + nbytes], dtype=_F32).reshape(shape)
        tensors[name] = arr.astype(np.float32)
    return tensors, meta


def save(path: str | Path, tensors: Mapping[str, np.ndarray], metadata: Optional[dict] = None) -> None:
    Path(path).write_bytes(dumps(tensors, metadata))


def load(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    return loads(Path(path).read_bytes())
