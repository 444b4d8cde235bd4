"""Acceptance gate: one group of tests per criterion, summarised by conftest."""

import json
import random
import time
from fractions import Fraction

import numpy as np
import pytest

import dicom_fixtures as fx
from oracles import brute_evaluate, brute_iou, exact_ap
from radeval.cli import main
from radeval.errors import DicomError, MalformedAnnotationError, MalformedFileError, UnsupportedSyntaxError
from radeval.geometry import BBox, LetterboxTransform, iou, letterbox_apply, letterbox_invert
from radeval.ingest import load_study_labels, normalize_pixels, parse_dicom, to_model_input
from radeval.metrics import Detection, GroundTruthBox, evaluate
from radeval.postprocess import DEFAULT_ANCHORS, decode_grid, nms


# ---------------------------------------------------------------- 1

def _instance(rng):
    n_images, n_classes = rng.randint(1, 10), rng.randint(1, 3)
    gts, dets = [], []
    for _ in range(rng.randint(1, 20)):
        x, y = rng.uniform(0, 50), rng.uniform(0, 50)
        gts.append((f"im{rng.randrange(n_images)}", rng.randrange(n_classes),
                    (x, y, x + rng.uniform(1, 25), y + rng.uniform(1, 25))))
    for _ in range(rng.randint(0, 20)):
        if rng.random() < 0.6:
            img, c, (x0, y0, x1, y1) = rng.choice(gts)
            dx, dy = rng.uniform(-4, 4), rng.uniform(-4, 4)
            box = (x0 + dx, y0 + dy, x1 + dx, y1 + dy)
        else:
            img, c = f"im{rng.randrange(n_images)}", rng.randrange(n_classes)
            x, y = rng.uniform(0, 50), rng.uniform(0, 50)
            box = (x, y, x + rng.uniform(1, 25), y + rng.uniform(1, 25))
        dets.append((img, c, rng.choice([0.5, 0.9, round(rng.random(), 2)]), box))
    return dets, gts


@pytest.mark.acceptance(1)
def test_oracle_equivalence_200_instances():
    start = time.perf_counter()
    worst = 0.0
    for seed in range(200):
        rng = random.Random(seed)
        dets, gts = _instance(rng)
        aps, m = brute_evaluate(dets, gts, 0.5)
        report = evaluate([Detection(i, c, s, BBox(*b)) for i, c, s, b in dets],
                          [GroundTruthBox(i, c, BBox(*b)) for i, c, b in gts], 0.5)
        assert set(report.per_class_ap) == set(aps)
        worst = max([worst, abs(report.map_score - m)] + [abs(report.per_class_ap[c] - aps[c]) for c in aps])
    assert worst <= 1e-9
    assert time.perf_counter() - start < 10.0


# ---------------------------------------------------------------- 2

def _single_class(flags_boxes, n_gt_boxes):
    gts = [GroundTruthBox("a", 0, BBox(100.0 * k, 0, 100.0 * k + 10, 10)) for k in range(n_gt_boxes)]
    dets = []
    for rank, k in enumerate(flags_boxes):
        box = BBox(100.0 * k, 0, 100.0 * k + 10, 10) if k is not None else BBox(900, 900, 910, 910)
        dets.append(Detection("a", 0, 1.0 - 0.1 * rank, box))
    return evaluate(dets, gts, 0.5).map_score


@pytest.mark.acceptance(2)
@pytest.mark.parametrize("hits, n_gt, flags", [
    ([0, 1], 2, [True, True]),
    ([None, 0], 1, [False, True]),
    ([0, None, 1], 2, [True, False, True]),
])
def test_ap_hand_cases(hits, n_gt, flags):
    expected = exact_ap(flags, n_gt)
    assert expected in (Fraction(1), Fraction(1, 2), Fraction(5, 6))
    assert abs(_single_class(hits, n_gt) - float(expected)) <= 1e-9


@pytest.mark.acceptance(2)
def test_iou_hand_case():
    a, b = BBox(0, 0, 10, 10), BBox(5, 0, 15, 10)
    assert abs(iou(a, b) - 1 / 3) <= 1e-9
    assert abs(brute_iou(a.as_tuple(), b.as_tuple()) - 1 / 3) <= 1e-9


# ---------------------------------------------------------------- 3

@pytest.mark.acceptance(3)
def test_compare_deltas_exact(tmp_path, capsys):
    runs = []
    for name, value in [("yolov5s", "0.623"), ("faster_rcnn", "0.466"), ("efficientdet", "0.522")]:
        p = tmp_path / f"{name}.json"
        p.write_text(f'{{"map": {value}}}')
        runs.append(f"{name}={p}")
    assert main(["compare", "--runs", *runs, "--out-dir", str(tmp_path / "out"), "--no-figures"]) == 0
    result = json.loads((tmp_path / "out" / "compare.json").read_text())
    pair = {(r["higher"], r["lower"]): r["delta"] for r in result["pairwise"]}
    assert pair[("yolov5s", "faster_rcnn")] == 0.157
    assert pair[("yolov5s", "efficientdet")] == 0.101
    assert {r["model"]: r["delta_to_leader"] for r in result["rows"]} == {
        "yolov5s": None, "efficientdet": 0.101, "faster_rcnn": 0.157}


# ---------------------------------------------------------------- 4

@pytest.mark.acceptance(4)
def test_geometry_properties_10k():
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    xy = rng.uniform(0, 900, size=(10_000, 2, 2))
    wh = rng.uniform(0, 300, size=(10_000, 2, 2))
    sizes = rng.integers(1, 4000, size=(10_000, 2))
    for k in range(10_000):
        a = BBox(*xy[k, 0], *(xy[k, 0] + wh[k, 0]))
        b = BBox(*xy[k, 1], *(xy[k, 1] + wh[k, 1]))
        v = iou(a, b)
        assert v == iou(b, a)
        assert 0.0 <= v <= 1.0
        t = LetterboxTransform.fit(int(sizes[k, 0]), int(sizes[k, 1]))
        back = letterbox_invert(t, letterbox_apply(t, a))
        assert max(abs(p - q) for p, q in zip(back.as_tuple(), a.as_tuple())) <= 1e-6
    assert time.perf_counter() - start < 5.0


# ---------------------------------------------------------------- 5

@pytest.mark.acceptance(5)
def test_nms_properties_1k():
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    for _ in range(1000):
        n = int(rng.integers(0, 15))
        xy = rng.uniform(0, 60, size=(n, 2))
        wh = rng.uniform(1, 40, size=(n, 2))
        dets = [Detection(f"i{rng.integers(2)}", int(rng.integers(2)), float(rng.choice([0.5, rng.random()])),
                          BBox(*xy[k], *(xy[k] + wh[k]))) for k in range(n)]
        thr = float(rng.uniform(0.1, 0.9))
        kept = nms(dets, thr)
        assert nms(kept, thr) == kept
        for i, a in enumerate(kept):
            for b in kept[i + 1:]:
                if (a.image_id, a.class_id) == (b.image_id, b.class_id):
                    assert iou(a.box, b.box) <= thr
    assert time.perf_counter() - start < 5.0


# ---------------------------------------------------------------- 6

@pytest.mark.acceptance(6)
@pytest.mark.parametrize("level", DEFAULT_ANCHORS.levels, ids=lambda lv: f"stride{lv.stride}")
def test_zero_logit_decode(level):
    s = 512 // level.stride
    g = decode_grid(np.zeros((len(level.anchors), s, s, 6)), level)
    idx = np.arange(s)
    assert np.array_equal(g["cx"], np.broadcast_to((idx + 0.5) * level.stride, g["cx"].shape))
    assert np.array_equal(g["cy"], np.broadcast_to(((idx + 0.5) * level.stride)[:, None], g["cy"].shape))
    for a, (aw, ah) in enumerate(level.anchors):
        assert np.all(g["w"][a] == aw) and np.all(g["h"][a] == ah)
    assert np.all(g["conf"] == 0.25)


# ---------------------------------------------------------------- 7

@pytest.mark.acceptance(7)
def test_blocks_check_ten_seeds(capsys):
    start = time.perf_counter()
    for seed in range(10):
        assert main(["blocks-check", "--seed", str(seed)]) == 0
    out = capsys.readouterr().out
    assert out.count("ALL PASS") == 10 and "FAIL" not in out.replace("ALL PASS", "")
    for name in ("focus_permutation", "spp_constant", "res_identity", "backbone_strides"):
        assert out.count(f"PASS {name}") == 10
    assert time.perf_counter() - start < 30.0


# ---------------------------------------------------------------- 8

@pytest.mark.acceptance(8)
@pytest.mark.parametrize("make", [fx.explicit_fixture, fx.implicit_fixture])
def test_dicom_fixture_exact(make):
    img = parse_dicom(make())
    assert img.pixels.tolist() == [[0, 100], [200, 300]]
    assert normalize_pixels(img).ravel().tolist() == [0, 85, 170, 255]


@pytest.mark.acceptance(8)
def test_dicom_monochrome1_and_typed_errors():
    inv = parse_dicom(fx.explicit_fixture(photometric=b"MONOCHROME1 "))
    assert normalize_pixels(inv).ravel().tolist() == [255, 170, 85, 0]
    with pytest.raises(MalformedFileError):
        parse_dicom(fx.explicit_fixture()[:-3])
    with pytest.raises(UnsupportedSyntaxError):
        parse_dicom(fx.jpeg_fixture())


@pytest.mark.acceptance(8)
def test_dicom_fuzz_10k():
    rng = np.random.default_rng(8)
    seeds = [fx.explicit_fixture(), fx.implicit_fixture()]
    for k in range(10_000):
        if k % 2:
            buf = rng.integers(0, 256, size=int(rng.integers(0, 300)), dtype=np.uint8).tobytes()
        else:
            raw = bytearray(seeds[k % 4 // 2])
            for _ in range(int(rng.integers(1, 6))):
                raw[int(rng.integers(len(raw)))] = int(rng.integers(256))
            buf = bytes(raw[: int(rng.integers(len(raw) + 1))])
        try:
            to_model_input(normalize_pixels(parse_dicom(buf)), size=32)
        except DicomError:
            pass


# ---------------------------------------------------------------- 9

HEADER = "id,Negative for Pneumonia,Typical Appearance,Indeterminate Appearance,Atypical Appearance\n"


@pytest.mark.acceptance(9)
def test_labels_one_hot():
    assert len(load_study_labels(HEADER + "a,1,0,0,0\nb,0,0,0,1\n")) == 2
    for bad in ("c,0,0,0,0", "d,0,1,1,0"):
        with pytest.raises(MalformedAnnotationError, match="line 3") as exc:
            load_study_labels(HEADER + "a,1,0,0,0\n" + bad + "\n")
        assert exc.value.line == 3
