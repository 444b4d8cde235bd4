"""``radeval`` command line interface.

Exit codes: 0 success, 1 invariant/assertion failure, 2 input error.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from decimal import Decimal
from pathlib import Path
from typing import Optional, Sequence

from radeval import records, tensorfile
from radeval.errors import ContractError, MalformedAnnotationError, RadevalError
from radeval.geometry import LetterboxTransform, letterbox_invert
from radeval.ingest.dicom import parse_dicom
from radeval.ingest.labels import label_counts, load_study_labels
from radeval.ingest.preprocess import (
    LETTERBOX_FILL,
    MODEL_SIZE,
    body_part_distribution,
    letterbox_image,
    normalize_pixels,
    write_pgm,
)
from radeval.metrics import evaluate
from radeval.postprocess import DEFAULT_EVAL_CONF, DEFAULT_NMS_IOU, AnchorSet, decode_head, nms
from radeval.refnet.backbone import BackboneConfig
from radeval.refnet.check import run_checks

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
THREADS_ENV = "RADEVAL_THREADS"


class InputError(Exception):
    """Aborts a command with exit code 2."""


def _workers() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise InputError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return min(4, os.cpu_count() or 1)


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name) or "_"


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- ingest

def _ingest_one(path: Path, root: Path, size: int, fill: int):
    rel = path.relative_to(root).as_posix()
    try:
        img = parse_dicom(path.read_bytes())
        gray = normalize_pixels(img)
        canvas, t = letterbox_image(gray, size, fill)
    except (RadevalError, OSError) as exc:
        return {"file": rel, "status": "error", "error_type": type(exc).__name__, "message": str(exc)}, None
    image_id = img.image_id or path.stem
    sidecar = {
        "image_id": image_id,
        "study_id": img.study_id,
        "body_part": img.body_part,
        "source": rel,
        "rows": img.rows,
        "cols": img.cols,
        "photometric": img.photometric,
        "letterbox": t.to_dict(),
    }
    return {"file": rel, "status": "ok", "image_id": image_id}, (img, canvas, sidecar)


def cmd_ingest(args) -> int:
    root = Path(args.dicom_dir)
    if not root.is_dir() or not os.access(root, os.R_OK | os.X_OK):
        raise InputError(f"cannot read DICOM directory {root}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    labels = None
    if args.labels:
        try:
            labels = load_study_labels(Path(args.labels).read_text(encoding="utf-8"))
        except (OSError, UnicodeDecodeError) as exc:
            raise InputError(f"cannot read labels: {exc}") from None

    files = sorted(p for p in root.rglob("*") if p.is_file() and p.suffix.lower() == ".dcm")
    with ThreadPoolExecutor(max_workers=_workers()) as pool:
        results = list(pool.map(lambda p: _ingest_one(p, root, args.size, args.fill), files))

    entries, images, seen = [], [], set()
    for entry, payload in results:
        if payload is not None:
            img, canvas, sidecar = payload
            stem = _safe_name(sidecar["image_id"])
            if stem in seen:
                entry = {"file": entry["file"], "status": "error", "error_type": "DuplicateImageId",
                         "message": f"image id {sidecar['image_id']!r} already ingested"}
            else:
                seen.add(stem)
                write_pgm(out_dir / f"{stem}.pgm", canvas)
                _write_json(out_dir / f"{stem}.json", sidecar)
                images.append(img)
        entries.append(entry)

    hist = body_part_distribution(images)
    manifest = {
        "n_files": len(entries),
        "n_ok": sum(e["status"] == "ok" for e in entries),
        "n_errors": sum(e["status"] != "ok" for e in entries),
        "entries": entries,
    }
    if labels is not None:
        manifest["labels"] = {"n_studies": len(labels), "counts": label_counts(labels)}
    _write_json(out_dir / "manifest.json", manifest)
    _write_json(out_dir / "body_parts.json", hist)
    with open(out_dir / "body_parts.csv", "w", encoding="utf-8") as fh:
        fh.write("body_part,count\n")
        fh.writelines(f"{k},{v}\n" for k, v in hist.items())
    if args.figures and hist:
        from radeval.plotting import plot_body_parts
        plot_body_parts(hist, out_dir / "body_parts.png")
    print(f"ingested {manifest['n_ok']}/{manifest['n_files']} files, {manifest['n_errors']} errors")
    return EXIT_OK


# ---------------------------------------------------------------- eval

def cmd_eval(args) -> int:
    if not 0.0 < args.iou_threshold <= 1.0:
        raise InputError(f"--iou-threshold must be in (0, 1], got {args.iou_threshold}")
    try:
        preds = records.load_predictions(args.pred)
        truth = records.load_truth(args.truth)
    except OSError as exc:
        raise InputError(str(exc)) from None
    if not truth:
        raise InputError(f"truth file {args.truth} has no records")

    index = records.class_index(preds, truth)
    names = {i: n for n, i in index.items()}
    report = evaluate(records.to_detections(preds, index), records.to_ground_truth(truth, index),
                      args.iou_threshold)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = report.to_dict(names)
    doc["curves"] = {}
    for c, curve in report.curves.items():
        fname = f"pr_{_safe_name(names[c])}.csv"
        records.write_curve(out_dir / fname, curve)
        doc["curves"][names[c]] = fname
    _write_json(out_dir / "report.json", doc)
    if args.figures:
        from radeval.plotting import plot_pr_curves
        plot_pr_curves({names[c]: cv for c, cv in report.curves.items()},
                       {names[c]: ap for c, ap in report.per_class_ap.items()},
                       out_dir / "pr_curves.png", args.iou_threshold)
    print(f"mAP@{args.iou_threshold:g} = {report.map_score:.6f} over {len(index)} classes")
    return EXIT_OK


# ---------------------------------------------------------------- decode

def _image_grids(tensors: dict) -> dict[str, dict[int, object]]:
    grouped: dict[str, dict[int, object]] = {}
    for name, arr in tensors.items():
        image_id, sep, level = name.rpartition("/")
        if not sep or not image_id or not level.isdigit():
            raise InputError(f"raw tensor name {name!r} is not '<image_id>/<level>'")
        grouped.setdefault(image_id, {})[int(level)] = arr
    return grouped


def _decode_image(image_id, grids, anchors: AnchorSet, meta_images: dict, conf: float, nms_iou: float):
    t = None
    if image_id in meta_images:
        t = LetterboxTransform.from_dict(meta_images[image_id])
    dets = []
    for lv_idx in sorted(grids):
        if lv_idx >= len(anchors.levels):
            raise ContractError(f"{image_id}: level {lv_idx} has no anchors")
        level = anchors.levels[lv_idx]
        grid = grids[lv_idx]
        if t is not None and grid.ndim == 4:
            want = (t.dst_height // level.stride, t.dst_width // level.stride)
            if tuple(grid.shape[1:3]) != want:
                raise ContractError(f"{image_id}: level {lv_idx} grid {grid.shape[1:3]} != {want}")
        dets.extend(decode_head(grid, level, conf, image_id))
    out = []
    for d in nms(dets, nms_iou):
        box = d.box
        if t is not None:
            box = letterbox_invert(t, box).clamp(t.src_width, t.src_height)
        name = anchors.class_names[d.class_id] if anchors.class_names and d.class_id < len(anchors.class_names) \
            else str(d.class_id)
        out.append(records.PredictionRecord(image_id, name, d.score, box))
    return out


def cmd_decode(args) -> int:
    if not 0.0 < args.nms_iou <= 1.0:
        raise InputError(f"--nms-iou must be in (0, 1], got {args.nms_iou}")
    try:
        anchors = AnchorSet.load(args.anchors)
        tensors, meta = tensorfile.load(args.raw)
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise InputError(str(exc)) from None
    meta_images = meta.get("images", {}) if isinstance(meta, dict) else {}
    grouped = _image_grids(tensors)
    with ThreadPoolExecutor(max_workers=_workers()) as pool:
        per_image = list(pool.map(
            lambda iid: _decode_image(iid, grouped[iid], anchors, meta_images, args.conf, args.nms_iou),
            sorted(grouped),
        ))
    recs = [r for batch in per_image for r in batch]
    records.write_predictions(args.out, recs)
    print(f"decoded {len(recs)} detections from {len(grouped)} images")
    return EXIT_OK


# ---------------------------------------------------------------- compare

def _parse_run(entry: str) -> tuple[str, Path]:
    name, sep, path = entry.partition("=")
    if not sep or not name or not path:
        raise InputError(f"--runs entry {entry!r} must be NAME=REPORT.json")
    return name, Path(path)


def compare_runs(runs: Sequence[tuple[str, Decimal]]) -> dict:
    """Rank runs by mAP (stable on ties) and compute leader and pairwise deltas."""
    ranked = sorted(runs, key=lambda r: -r[1])
    leader = ranked[0][1]
    rows = [
        {"model": name, "map": float(m), "delta_to_leader": None if i == 0 else float(leader - m)}
        for i, (name, m) in enumerate(ranked)
    ]
    pairwise = [
        {"higher": a, "lower": b, "delta": float(ma - mb)}
        for i, (a, ma) in enumerate(ranked)
        for b, mb in ranked[i + 1:]
    ]
    return {"rows": rows, "pairwise": pairwise}


def format_table(result: dict, metric_label: str) -> str:
    width = max([len("model")] + [len(r["model"]) for r in result["rows"]])
    lines = [f"{'model':<{width}}  {metric_label:>8}  {'delta':>7}"]
    for r in result["rows"]:
        delta = "-" if r["delta_to_leader"] is None else f"{r['delta_to_leader']:.3f}"
        lines.append(f"{r['model']:<{width}}  {r['map']:>8.3f}  {delta:>7}")
    return "\n".join(lines)


def cmd_compare(args) -> int:
    runs, thresholds = [], set()
    for entry in args.runs:
        name, path = _parse_run(entry)
        if any(name == n for n, _ in runs):
            raise InputError(f"duplicate run name {name!r}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"), parse_float=Decimal)
        except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise InputError(f"run {name!r}: {exc}") from None
        value = doc.get("map") if isinstance(doc, dict) else None
        if isinstance(value, bool) or not isinstance(value, (int, Decimal)):
            raise InputError(f"run {name!r}: report has no numeric 'map'")
        value = Decimal(value)
        if not Decimal(0) <= value <= Decimal(1):
            raise InputError(f"run {name!r}: mAP {value} outside [0, 1]")
        if "iou_threshold" in doc:
            thresholds.add(float(doc["iou_threshold"]))
        runs.append((name, value))

    label = f"mAP@{thresholds.pop():g}" if len(thresholds) == 1 else "mAP"
    result = compare_runs(runs)
    result["metric"] = label
    table = format_table(result, label)
    print(table)
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_json(out_dir / "compare.json", result)
        (out_dir / "compare.txt").write_text(table + "\n", encoding="utf-8")
        if args.figures:
            from radeval.plotting import plot_comparison
            plot_comparison([(r["model"], r["map"]) for r in result["rows"]], out_dir / "compare.png", label)
    return EXIT_OK


# ---------------------------------------------------------------- blocks-check

def cmd_blocks_check(args) -> int:
    if args.seed < 0:
        raise InputError("--seed must be non-negative")
    cfg = BackboneConfig()
    if args.config:
        try:
            cfg = BackboneConfig.load(args.config)
        except (OSError, json.JSONDecodeError, UnicodeDecodeError, TypeError) as exc:
            raise InputError(f"bad config: {exc}") from None
    results = run_checks(args.seed, cfg)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"FAILED {len(failed)}/{len(results)}: {', '.join(failed)}")
        return EXIT_FAIL
    print(f"ALL PASS {len(results)}/{len(results)} (seed {args.seed})")
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radeval", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="cmd", required=True)

    def figures_flag(p):
        p.add_argument("--no-figures", dest="figures", action="store_false",
                       help="skip rendering PNG figures next to the data files")

    p = sub.add_parser("ingest", help="parse DICOM files into PGM + JSON sidecars")
    p.add_argument("--dicom-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--labels", help="study-level label CSV")
    p.add_argument("--size", type=int, default=MODEL_SIZE, help="model input size (default 512)")
    p.add_argument("--fill", type=int, default=LETTERBOX_FILL, help="letterbox fill value (default 114)")
    figures_flag(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("eval", help="compute per-class AP and mAP")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--out-dir", default=".")
    figures_flag(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("decode", help="decode raw YOLO head grids into prediction records")
    p.add_argument("--raw", required=True, help="tensor file of '<image_id>/<level>' head grids")
    p.add_argument("--anchors", required=True, help="anchors JSON")
    p.add_argument("--conf", type=float, default=DEFAULT_EVAL_CONF)
    p.add_argument("--nms-iou", type=float, default=DEFAULT_NMS_IOU)
    p.add_argument("--out", default="predictions.csv")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("compare", help="rank several eval reports by mAP")
    p.add_argument("--runs", nargs="+", action="extend", required=True, metavar="NAME=REPORT.json")
    p.add_argument("--out-dir")
    figures_flag(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("blocks-check", help="run the reference-block invariant suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="backbone config JSON")
    p.set_defaults(func=cmd_blocks_check)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (InputError, MalformedAnnotationError, ContractError, RadevalError) as exc:
        print(f"radeval {args.cmd}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
