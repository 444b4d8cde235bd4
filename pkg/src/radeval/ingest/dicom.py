"""Minimal DICOM Part-10 reader for single-frame grayscale radiographs.

Only the two uncompressed little-endian transfer syntaxes are understood.
Parsing keeps every data element verbatim, so :func:`serialize` reproduces
the input bytes of a well-formed file.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from radeval.errors import MalformedFileError, UnsupportedDicomError, UnsupportedSyntaxError

IMPLICIT_VR_LE = "1.2.840.10008.1.2"
EXPLICIT_VR_LE = "1.2.840.10008.1.2.1"
SUPPORTED_SYNTAXES = {IMPLICIT_VR_LE: False, EXPLICIT_VR_LE: True}  # uid -> explicit VR

PREAMBLE_LEN = 128
MAGIC = b"DICM"
UNDEFINED_LENGTH = 0xFFFFFFFF
MAX_NESTING = 32

# VRs whose explicit encoding uses 2 reserved bytes and a 32-bit length
_LONG_VRS = {"OB", "OD", "OF", "OL", "OV", "OW", "SQ", "UC", "UN", "UR", "UT", "SV", "UV"}

TRANSFER_SYNTAX = (0x0002, 0x0010)
ROWS = (0x0028, 0x0010)
COLUMNS = (0x0028, 0x0011)
BITS_ALLOCATED = (0x0028, 0x0100)
SAMPLES_PER_PIXEL = (0x0028, 0x0002)
PHOTOMETRIC = (0x0028, 0x0004)
NUMBER_OF_FRAMES = (0x0028, 0x0008)
PIXEL_REPRESENTATION = (0x0028, 0x0103)
WINDOW_CENTER = (0x0028, 0x1050)
WINDOW_WIDTH = (0x0028, 0x1051)
BODY_PART = (0x0018, 0x0015)
STUDY_UID = (0x0020, 0x000D)
SOP_UID = (0x0008, 0x0018)
PIXEL_DATA = (0x7FE0, 0x0010)

ITEM = (0xFFFE, 0xE000)
ITEM_DELIM = (0xFFFE, 0xE00D)
SEQ_DELIM = (0xFFFE, 0xE0DD)

# VRs for the tags this module writes in implicit-VR datasets
IMPLICIT_VRS = {
    ROWS: "US", COLUMNS: "US", BITS_ALLOCATED: "US", SAMPLES_PER_PIXEL: "US",
    PIXEL_REPRESENTATION: "US", PHOTOMETRIC: "CS", NUMBER_OF_FRAMES: "IS",
    WINDOW_CENTER: "DS", WINDOW_WIDTH: "DS", BODY_PART: "CS", STUDY_UID: "UI",
    SOP_UID: "UI", PIXEL_DATA: "OW", TRANSFER_SYNTAX: "UI",
}


@dataclass
class DataElement:
    tag: tuple[int, int]
    vr: Optional[str]
    value: bytes
    undefined_length: bool = False
    offset: int = 0

    def __repr__(self) -> str:
        return f"DataElement(({self.tag[0]:04X},{self.tag[1]:04X}), {self.vr}, {len(self.value)} bytes)"


@dataclass
class Dataset:
    elements: list[DataElement]
    transfer_syntax: str
    meta: list[DataElement] = field(default_factory=list)
    preamble: Optional[bytes] = None

    @property
    def explicit_vr(self) -> bool:
        return SUPPORTED_SYNTAXES.get(self.transfer_syntax, True)

    def get(self, tag: tuple[int, int]) -> Optional[DataElement]:
        for el in self.elements:
            if el.tag == tag:
                return el
        return None


@dataclass
class DicomImage:
    rows: int
    cols: int
    bits_allocated: int
    photometric: str
    pixels: np.ndarray
    body_part: Optional[str] = None
    study_id: str = ""
    image_id: str = ""
    window_center: Optional[float] = None
    window_width: Optional[float] = None
    dataset: Optional[Dataset] = field(default=None, repr=False, compare=False)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf

    def need(self, pos: int, n: int, what: str, start: int) -> None:
        if pos + n > len(self.buf):
            raise MalformedFileError(f"truncated {what}", offset=start)

    def read_element(self, pos: int, explicit: bool, depth: int) -> tuple[DataElement, int]:
        buf, start = self.buf, pos
        self.need(pos, 8, "element header", start)
        group, elem = struct.unpack_from("<HH", buf, pos)
        tag = (group, elem)
        if explicit:
            raw_vr = buf[pos + 4:pos + 6]
            if not (65 <= raw_vr[0] <= 90 and 65 <= raw_vr[1] <= 90):
                raise MalformedFileError(f"invalid VR {raw_vr!r} for tag ({group:04X},{elem:04X})", offset=start)
            vr = raw_vr.decode("ascii")
            if vr in _LONG_VRS:
                self.need(pos, 12, "element header", start)
                (length,) = struct.unpack_from("<I", buf, pos + 8)
                pos += 12
            else:
                (length,) = struct.unpack_from("<H", buf, pos + 6)
                pos += 8
        else:
            vr = None
            (length,) = struct.unpack_from("<I", buf, pos + 4)
            pos += 8

        if length == UNDEFINED_LENGTH:
            if tag == PIXEL_DATA:
                raise MalformedFileError("encapsulated pixel data in an uncompressed transfer syntax", offset=start)
            if explicit and vr not in ("SQ", "UN"):
                raise MalformedFileError(f"undefined length on VR {vr}", offset=start)
            end = self.skip_sequence(pos, explicit, depth + 1)
            return DataElement(tag, vr, buf[pos:end], True, start), end

        self.need(pos, length, f"value of ({group:04X},{elem:04X})", start)
        return DataElement(tag, vr, buf[pos:pos + length], False, start), pos + length

    def skip_sequence(self, pos: int, explicit: bool, depth: int) -> int:
        """Return the position just past the sequence delimitation item."""
        if depth > MAX_NESTING:
            raise MalformedFileError("sequences nested too deeply", offset=pos)
        while True:
            start = pos
            self.need(pos, 8, "sequence item header", start)
            group, elem, length = struct.unpack_from("<HHI", self.buf, pos)
            pos += 8
            if (group, elem) == SEQ_DELIM:
                return pos
            if (group, elem) != ITEM:
                raise MalformedFileError(f"expected item tag, found ({group:04X},{elem:04X})", offset=start)
            if length != UNDEFINED_LENGTH:
                self.need(pos, length, "sequence item", start)
                pos += length
                continue
            while True:
                self.need(pos, 8, "item content", pos)
                if struct.unpack_from("<HH", self.buf, pos) == ITEM_DELIM:
                    pos += 8
                    break
                _, pos = self.read_element(pos, explicit, depth)

    def read_elements(self, pos: int, explicit: bool, stop_group: Optional[int] = None):
        out = []
        while pos < len(self.buf):
            if stop_group is not None:
                self.need(pos, 2, "element header", pos)
                if struct.unpack_from("<H", self.buf, pos)[0] != stop_group:
                    break
            el, pos = self.read_element(pos, explicit, 0)
            if el.tag[0] == 0xFFFE:
                raise MalformedFileError("item delimiter outside a sequence", offset=el.offset)
            out.append(el)
        return out, pos


def _text(el: DataElement) -> str:
    return el.value.decode("ascii", errors="replace").strip("\x00 ")


def _first_text(el: Optional[DataElement]) -> Optional[str]:
    if el is None:
        return None
    return _text(el).split("\\")[0].strip()


def _uint16(el: DataElement) -> int:
    if len(el.value) < 2:
        raise MalformedFileError(f"({el.tag[0]:04X},{el.tag[1]:04X}) too short for US", offset=el.offset)
    return struct.unpack_from("<H", el.value, 0)[0]


def _decimal(el: Optional[DataElement]) -> Optional[float]:
    s = _first_text(el)
    if not s:
        return None
    try:
        v = float(s)
    except ValueError:
        raise MalformedFileError(f"bad decimal string {s!r}", offset=el.offset) from None
    if not np.isfinite(v):
        raise MalformedFileError(f"non-finite decimal string {s!r}", offset=el.offset)
    return v


def parse_dataset(data: bytes) -> Dataset:
    """Split a Part-10 file (or raw implicit-VR stream) into data elements."""
    buf = bytes(data)
    reader = _Reader(buf)
    if len(buf) >= PREAMBLE_LEN + 4 and buf[PREAMBLE_LEN:PREAMBLE_LEN + 4] == MAGIC:
        preamble = buf[:PREAMBLE_LEN]
        meta, pos = reader.read_elements(PREAMBLE_LEN + 4, explicit=True, stop_group=0x0002)
        ts_el = next((el for el in meta if el.tag == TRANSFER_SYNTAX), None)
        if ts_el is None:
            raise MalformedFileError("file meta lacks TransferSyntaxUID", offset=PREAMBLE_LEN + 4)
        syntax = _text(ts_el)
    else:
        preamble, meta, pos, syntax = None, [], 0, IMPLICIT_VR_LE
    if syntax not in SUPPORTED_SYNTAXES:
        raise UnsupportedSyntaxError(f"unsupported transfer syntax {syntax}", uid=syntax)
    elements, _ = reader.read_elements(pos, explicit=SUPPORTED_SYNTAXES[syntax])
    return Dataset(elements, syntax, meta, preamble)


def _encode_element(el: DataElement, explicit: bool) -> bytes:
    length = UNDEFINED_LENGTH if el.undefined_length else len(el.value)
    head = struct.pack("<HH", *el.tag)
    if explicit:
        vr = el.vr or IMPLICIT_VRS.get(el.tag, "UN")
        if vr in _LONG_VRS:
            head += vr.encode("ascii") + b"\x00\x00" + struct.pack("<I", length)
        else:
            head += vr.encode("ascii") + struct.pack("<H", length)
    else:
        head += struct.pack("<I", length)
    return head + el.value


def serialize(ds: Dataset) -> bytes:
    out = bytearray()
    if ds.preamble is not None:
        out += ds.preamble + MAGIC
        for el in ds.meta:
            out += _encode_element(el, explicit=True)
    for el in ds.elements:
        out += _encode_element(el, ds.explicit_vr)
    return bytes(out)


def image_from_dataset(ds: Dataset) -> DicomImage:
    def required(tag, name):
        el = ds.get(tag)
        if el is None:
            raise MalformedFileError(f"missing {name}")
        return el

    pixel_el = required(PIXEL_DATA, "PixelData")
    rows = _uint16(required(ROWS, "Rows"))
    cols = _uint16(required(COLUMNS, "Columns"))
    bits = _uint16(required(BITS_ALLOCATED, "BitsAllocated"))
    photometric = _first_text(required(PHOTOMETRIC, "PhotometricInterpretation"))

    if rows == 0 or cols == 0:
        raise MalformedFileError(f"zero image dimension {rows}x{cols}")
    if bits not in (8, 16):
        raise UnsupportedDicomError(f"BitsAllocated {bits} not supported (8 or 16)")
    if photometric not in ("MONOCHROME1", "MONOCHROME2"):
        raise UnsupportedDicomError(f"photometric interpretation {photometric!r} not supported")
    spp = ds.get(SAMPLES_PER_PIXEL)
    if spp is not None and _uint16(spp) != 1:
        raise UnsupportedDicomError(f"SamplesPerPixel {_uint16(spp)} not supported")
    rep = ds.get(PIXEL_REPRESENTATION)
    if rep is not None and _uint16(rep) != 0:
        raise UnsupportedDicomError("signed pixel data not supported")
    frames = _first_text(ds.get(NUMBER_OF_FRAMES))
    if frames and frames not in ("1", "01"):
        raise UnsupportedDicomError(f"multi-frame images not supported (NumberOfFrames {frames!r})")

    nbytes = rows * cols * (bits // 8)
    if len(pixel_el.value) < nbytes:
        raise MalformedFileError(
            f"PixelData holds {len(pixel_el.value)} bytes, {rows}x{cols}x{bits}bit needs {nbytes}",
            offset=pixel_el.offset,
        )
    dtype = np.dtype("<u2") if bits == 16 else np.dtype("u1")
    pixels = np.frombuffer(pixel_el.value[:nbytes], dtype=dtype).reshape(rows, cols).copy()

    center, width = _decimal(ds.get(WINDOW_CENTER)), _decimal(ds.get(WINDOW_WIDTH))
    if center is None or width is None or width <= 0:
        center = width = None
    return DicomImage(
        rows=rows,
        cols=cols,
        bits_allocated=bits,
        photometric=photometric,
        pixels=pixels,
        body_part=_first_text(ds.get(BODY_PART)) or None,
        study_id=_first_text(ds.get(STUDY_UID)) or "",
        image_id=_first_text(ds.get(SOP_UID)) or "",
        window_center=center,
        window_width=width,
        dataset=ds,
    )


def parse_dicom(data: bytes) -> DicomImage:
    """Parse a DICOM file into a :class:`DicomImage`.

    Raises:
        UnsupportedSyntaxError: compressed or big-endian transfer syntax.
        UnsupportedDicomError: colour, signed, multi-frame or >16-bit pixels.
        MalformedFileError: truncation, missing PixelData or image tags.
    """
    return image_from_dataset(parse_dataset(data))


def _pad_even(b: bytes, pad: bytes = b" ") -> bytes:
    return b + pad if len(b) % 2 else b


def encode_image(
    pixels,
    *,
    bits_allocated: int = 16,
    photometric: str = "MONOCHROME2",
    body_part: Optional[str] = "CHEST",
    study_id: str = "",
    image_id: str = "",
    transfer_syntax: str = EXPLICIT_VR_LE,
    window: Optional[tuple[float, float]] = None,
) -> bytes:
    """Write a minimal Part-10 file around a 2-D pixel array."""
    pixels = np.asarray(pixels)
    rows, cols = pixels.shape
    dtype = np.dtype("<u2") if bits_allocated == 16 else np.dtype("u1")
    raw = pixels.astype(dtype).tobytes()

    def el(tag, vr, value: bytes) -> DataElement:
        return DataElement(tag, vr, value)

    ts = _pad_even(transfer_syntax.encode("ascii"), b"\x00")
    meta_body = _encode_element(el(TRANSFER_SYNTAX, "UI", ts), True)
    meta = [el((0x0002, 0x0000), "UL", struct.pack("<I", len(meta_body))), el(TRANSFER_SYNTAX, "UI", ts)]

    elements = []
    if image_id:
        elements.append(el(SOP_UID, "UI", _pad_even(image_id.encode("ascii"), b"\x00")))
    if body_part:
        elements.append(el(BODY_PART, "CS", _pad_even(body_part.encode("ascii"))))
    if study_id:
        elements.append(el(STUDY_UID, "UI", _pad_even(study_id.encode("ascii"), b"\x00")))
    elements += [
        el(SAMPLES_PER_PIXEL, "US", struct.pack("<H", 1)),
        el(PHOTOMETRIC, "CS", _pad_even(photometric.encode("ascii"))),
        el(ROWS, "US", struct.pack("<H", rows)),
        el(COLUMNS, "US", struct.pack("<H", cols)),
        el(BITS_ALLOCATED, "US", struct.pack("<H", bits_allocated)),
    ]
    if window is not None:
        elements.append(el(WINDOW_CENTER, "DS", _pad_even(f"{window[0]:g}".encode())))
        elements.append(el(WINDOW_WIDTH, "DS", _pad_even(f"{window[1]:g}".encode())))
    elements.append(el(PIXEL_DATA, "OW" if bits_allocated == 16 else "OB", _pad_even(raw, b"\x00")))
    if transfer_syntax == IMPLICIT_VR_LE:
        for e in elements:
            e.vr = None
    return serialize(Dataset(elements, transfer_syntax, meta, b"\x00" * PREAMBLE_LEN))
