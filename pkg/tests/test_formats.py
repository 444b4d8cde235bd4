import struct

import numpy as np
import pytest

from radeval import records, tensorfile
from radeval.errors import MalformedAnnotationError
from radeval.geometry import BBox
from radeval.metrics import PRCurve


def test_tensorfile_round_trip(tmp_path):
    tensors = {"a": np.arange(6, dtype=np.float32).reshape(2, 3), "b/0": np.ones((1, 2, 2, 6), np.float32)}
    meta = {"images": {"b": {"scale": 0.5}}}
    tensorfile.save(tmp_path / "t.bin", tensors, meta)
    loaded, m = tensorfile.load(tmp_path / "t.bin")
    assert m == meta
    assert set(loaded) == set(tensors)
    for k in tensors:
        assert np.array_equal(loaded[k], tensors[k])


def test_tensorfile_layout_is_little_endian_f32():
    buf = tensorfile.dumps({"x": np.array([1.5, -2.0], np.float32)})
    (hlen,) = struct.unpack_from("<Q", buf)
    assert buf[8 + hlen:] == struct.pack("<2f", 1.5, -2.0)


@pytest.mark.parametrize("buf", [b"", b"\x05\x00\x00\x00\x00\x00\x00\x00{}", 
                                 struct.pack("<Q", 2) + b"[]",
                                 struct.pack("<Q", 36) + b'{"x": {"shape": [4], "offset": 0}} ' + b"\x00" * 8])
def test_tensorfile_rejects_bad_input(buf):
    with pytest.raises(tensorfile.TensorFileError):
        tensorfile.loads(buf)


def test_prediction_round_trip(tmp_path):
    recs = [records.PredictionRecord("img1", "opacity", 0.1 + 0.2, BBox(0.1, 2, 3.3333333333333335, 4)),
            records.PredictionRecord("img2", "opacity", 1.0, BBox(0, 0, 0, 0))]
    records.write_predictions(tmp_path / "p.csv", recs)
    assert records.load_predictions(tmp_path / "p.csv") == recs
    truth = [records.PredictionRecord(r.image_id, r.class_name, None, r.box) for r in recs]
    records.write_truth(tmp_path / "t.csv", truth)
    assert records.load_truth(tmp_path / "t.csv") == truth


@pytest.mark.parametrize("row, msg", [
    ("img,opacity,1.5,0,0,1,1", "outside"),
    ("img,opacity,0.5,0,0,1", "fields"),
    ("img,opacity,0.5,5,0,1,1", "inverted"),
    ("img,opacity,abc,0,0,1,1", "not a number"),
    ("img,opacity,0.5,0,0,nan,1", "not finite"),
])
def test_prediction_errors_carry_line(tmp_path, row, msg):
    p = tmp_path / "p.csv"
    p.write_text(",".join(records.PRED_HEADER) + "\nimg,opacity,0.5,0,0,1,1\n" + row + "\n")
    with pytest.raises(MalformedAnnotationError, match=msg) as exc:
        records.load_predictions(p)
    assert exc.value.line == 3


def test_wrong_header(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text(",".join(records.PRED_HEADER) + "\n")
    with pytest.raises(MalformedAnnotationError):
        records.load_truth(p)


def test_curve_round_trip(tmp_path):
    c = PRCurve((0.0, 0.5, 1.0), (0.0, 1 / 3, 0.5))
    records.write_curve(tmp_path / "c.csv", c)
    assert records.read_curve(tmp_path / "c.csv") == c
