import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import dicom_fixtures as fx
from radeval.errors import (
    ContractError,
    DicomError,
    MalformedAnnotationError,
    MalformedFileError,
    UnsupportedDicomError,
    UnsupportedSyntaxError,
)
from radeval.ingest import (
    StudyClass,
    body_part_distribution,
    encode_image,
    load_study_labels,
    normalize_pixels,
    parse_dicom,
    to_model_input,
)
from radeval.ingest.dicom import IMPLICIT_VR_LE, parse_dataset, serialize
from radeval.ingest.labels import label_counts
from radeval.ingest.preprocess import read_pgm, write_pgm

HEADER = "id,Negative for Pneumonia,Typical Appearance,Indeterminate Appearance,Atypical Appearance\n"


@pytest.mark.parametrize("make", [fx.explicit_fixture, fx.implicit_fixture, fx.raw_implicit_fixture])
def test_parse_hand_fixture(make):
    img = parse_dicom(make())
    assert (img.rows, img.cols, img.bits_allocated) == (2, 2, 16)
    assert img.photometric == "MONOCHROME2"
    assert img.pixels.tolist() == [[0, 100], [200, 300]]
    assert img.body_part == "CHEST"
    assert img.study_id == "1.2.3" and img.image_id == "1.2.3.4"


@pytest.mark.parametrize("make", [fx.explicit_fixture, fx.implicit_fixture, fx.raw_implicit_fixture,
                                  fx.sequence_fixture])
def test_serialize_round_trip(make):
    raw = make()
    assert serialize(parse_dataset(raw)) == raw


def test_sequence_is_skipped():
    img = parse_dicom(fx.sequence_fixture())
    assert img.pixels.tolist() == [[0, 100], [200, 300]]


def test_truncated_fixture_reports_offset():
    raw = fx.explicit_fixture()
    with pytest.raises(MalformedFileError) as exc:
        parse_dicom(raw[:-3])
    assert exc.value.offset is not None
    assert "offset" in str(exc.value)
    # header of the PixelData element starts 12 + 8 bytes before the end
    assert exc.value.offset == len(raw) - 8 - 12


def test_compressed_syntax_is_unsupported():
    with pytest.raises(UnsupportedSyntaxError) as exc:
        parse_dicom(fx.jpeg_fixture())
    assert exc.value.uid == "1.2.840.10008.1.2.4.50"
    assert "1.2.840.10008.1.2.4.50" in str(exc.value)


def test_missing_pixel_data():
    raw = fx.PREAMBLE + fx.meta(fx.EXPLICIT) + fx.ex(0x0028, 0x0010, b"US", fx.us(2))
    with pytest.raises(MalformedFileError, match="PixelData"):
        parse_dicom(raw)


def test_short_pixel_data():
    with pytest.raises(MalformedFileError):
        parse_dicom(fx.explicit_fixture(pixels=(1, 2, 3)))


def test_unsupported_features():
    with pytest.raises(UnsupportedDicomError):
        parse_dicom(fx.explicit_fixture(photometric=b"RGB "))
    with pytest.raises(UnsupportedDicomError):
        parse_dicom(fx.explicit_fixture(bits=32, pixels=(0, 0, 0, 0, 0, 0, 0, 0)))


def test_eight_bit_and_missing_body_part():
    img = parse_dicom(fx.explicit_fixture(bits=8, pixels=(0, 1, 2, 255), body_part=None))
    assert img.pixels.dtype == np.uint8 and img.pixels.max() == 255
    assert img.body_part is None


def test_encode_image_parses_back():
    px = np.arange(12, dtype=np.uint16).reshape(3, 4) * 1000
    for syntax in ("1.2.840.10008.1.2.1", IMPLICIT_VR_LE):
        img = parse_dicom(encode_image(px, transfer_syntax=syntax, body_part="ABDOMEN", image_id="9.9"))
        assert np.array_equal(img.pixels, px)
        assert (img.body_part, img.image_id) == ("ABDOMEN", "9.9")


def test_normalize_monochrome2():
    assert normalize_pixels(parse_dicom(fx.explicit_fixture())).ravel().tolist() == [0, 85, 170, 255]


def test_normalize_monochrome1_inverts():
    img = parse_dicom(fx.explicit_fixture(photometric=b"MONOCHROME1 "))
    assert normalize_pixels(img).ravel().tolist() == [255, 170, 85, 0]


def test_normalize_constant_is_zero():
    img = parse_dicom(fx.explicit_fixture(pixels=(7, 7, 7, 7)))
    assert not normalize_pixels(img).any()


def test_normalize_windowing_clips_first():
    # window [100, 200]: 0 -> 100, 300 -> 200
    img = parse_dicom(fx.explicit_fixture(window=(b"150 ", b"100 ")))
    assert (img.window_center, img.window_width) == (150.0, 100.0)
    assert normalize_pixels(img).ravel().tolist() == [0, 0, 255, 255]


@settings(max_examples=50)
@given(st.lists(st.integers(0, 65535), min_size=4, max_size=64))
def test_normalize_spans_full_range(values):
    px = np.array(values, dtype=np.uint16).reshape(1, -1)
    out = normalize_pixels(parse_dicom(encode_image(px)))
    if len(set(values)) > 1:
        assert out.min() == 0 and out.max() == 255
    else:
        assert not out.any()


def test_model_input_identity_size():
    gray = np.random.default_rng(0).integers(0, 256, size=(512, 512), dtype=np.uint8)
    x, t = to_model_input(gray)
    assert x.shape == (1, 3, 512, 512) and x.dtype == np.float32
    assert (t.scale, t.pad_left, t.pad_top) == (1.0, 0.0, 0.0)
    for c in range(3):
        assert np.array_equal(x[0, c], gray.astype(np.float32) / np.float32(255))


def test_model_input_landscape_letterbox():
    gray = np.full((512, 1024), 200, dtype=np.uint8)
    x, t = to_model_input(gray)
    assert (t.scale, t.pad_top, t.pad_left) == (0.5, 128.0, 0.0)
    fill = np.float32(114) / np.float32(255)
    assert np.all(x[0, :, :128] == fill) and np.all(x[0, :, 384:] == fill)
    assert np.all(x[0, :, 128:384] == np.float32(200) / np.float32(255))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 900), st.integers(1, 900))
def test_model_input_channels_identical(h, w):
    gray = np.random.default_rng(h * w).integers(0, 256, size=(h, w), dtype=np.uint8)
    x, _ = to_model_input(gray)
    assert np.array_equal(x[0, 0], x[0, 1]) and np.array_equal(x[0, 1], x[0, 2])


def test_model_input_rejects_empty():
    with pytest.raises(ContractError):
        to_model_input(np.zeros((0, 4), dtype=np.uint8))


def test_labels_valid_rows():
    labels = load_study_labels(HEADER + "s1,1,0,0,0\ns4,0,0,0,1\ns5,0,0,1,0\n")
    assert [(l.study_id, l.label) for l in labels] == [
        ("s1", StudyClass.NEGATIVE), ("s4", StudyClass.ATYPICAL), ("s5", StudyClass.INDETERMINATE)]
    assert label_counts(labels) == {"negative": 1, "typical": 0, "indeterminate": 1, "atypical": 1}


@pytest.mark.parametrize("row, line", [("s2,0,1,1,0", 3), ("s3,0,0,0,0", 3), ("s6,0,2,0,0", 3), ("s7,1,0,0", 3)])
def test_labels_reject_bad_rows(row, line):
    with pytest.raises(MalformedAnnotationError) as exc:
        load_study_labels(HEADER + "s1,1,0,0,0\n" + row + "\n")
    assert exc.value.line == line
    assert f"line {line}" in str(exc.value)


def test_labels_reject_bad_header():
    with pytest.raises(MalformedAnnotationError):
        load_study_labels("id,a,b,c,d\ns1,1,0,0,0\n")


def test_body_part_distribution():
    imgs = [parse_dicom(fx.explicit_fixture(body_part=b)) for b in (b"CHEST ", b"CHEST ", b"CHEST ", b"ABDOMEN ")]
    assert body_part_distribution(imgs) == {"CHEST": 3, "ABDOMEN": 1}
    assert body_part_distribution([]) == {}
    assert body_part_distribution([parse_dicom(fx.explicit_fixture(body_part=None))]) == {"UNKNOWN": 1}


def test_pgm_round_trip(tmp_path):
    gray = np.random.default_rng(1).integers(0, 256, size=(5, 7), dtype=np.uint8)
    write_pgm(tmp_path / "a.pgm", gray)
    assert (tmp_path / "a.pgm").read_bytes().startswith(b"P5\n7 5\n255\n")
    assert np.array_equal(read_pgm(tmp_path / "a.pgm"), gray)


def _pipeline(buf):
    try:
        img = parse_dicom(buf)
        to_model_input(normalize_pixels(img))
    except DicomError:
        pass


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=400))
def test_arbitrary_bytes_only_typed_errors(buf):
    _pipeline(buf)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mutated_fixture_only_typed_errors(seed):
    rng = np.random.default_rng(seed)
    raw = bytearray(fx.explicit_fixture() if seed % 2 else fx.implicit_fixture())
    for _ in range(rng.integers(1, 6)):
        raw[rng.integers(len(raw))] = rng.integers(256)
    _pipeline(bytes(raw[: rng.integers(len(raw) + 1)]))
