"""Command-line entry point: ``measure``, ``eval``, ``synth`` and ``lines``.

Exit codes: 0 success, 2 parse/validation failure, 3 rectification failure,
4 measurement failure. ``measure`` keeps going after a per-image failure and
reports the lowest failing stage code at the end.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import render
from .annotations import ImageRecord, grid_crop, load_dataset
from .cocoeval import evaluate
from .errors import AnnotationError, AlignmentError, GeometryError, MeasurementError, RectificationError
from .hough import HoughConfig
from .measure import measure_cracks, measurement_report
from .rectify import BrickSpec, detect_lines, rectify_image
from .synthwall import WallSpec, generate, save_outputs

log = logging.getLogger("crackmeter")

EXIT_OK, EXIT_PARSE, EXIT_RECTIFY, EXIT_MEASURE = 0, 2, 3, 4


@dataclass(frozen=True)
class RunConfig:
    annotations: Path
    kind: str
    out: Path
    brick: BrickSpec = BrickSpec()
    hough: HoughConfig = HoughConfig()
    refine: bool = True
    debug_render: bool = False
    grid_crop: tuple[int, int] | None = None
    references: Path | None = None
    min_score: float = 0.5
    count_pixels: bool = False
    workers: int = 1
    extra: dict = field(default_factory=dict)


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=False) + "\n", encoding="utf-8")


def _grid(text: str) -> tuple[int, int]:
    try:
        r, c = text.lower().split("x")
        rows, cols = int(r), int(c)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected RxC such as 6x14, got {text!r}") from None
    if rows < 1 or cols < 1:
        raise argparse.ArgumentTypeError("grid dimensions must be >= 1")
    return rows, cols


def _positive(kind):
    def parse(text):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v

    return parse


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("brick and Hough parameters")
    g.add_argument("--brick-width-mm", type=_positive(float), default=220.0)
    g.add_argument("--brick-height-mm", type=_positive(float), default=60.0)
    g.add_argument("--theta-step-deg", type=_positive(float), default=1.0)
    g.add_argument("--rho-step", type=_positive(float), default=1.0)
    g.add_argument("--thresh-v", type=_positive(int), default=None, help="vertical-line vote threshold")
    g.add_argument("--thresh-h", type=_positive(int), default=None, help="horizontal-line vote threshold")
    g.add_argument(
        "--thresh-frac",
        type=_positive(float),
        default=0.25,
        help="vertical threshold as a fraction of image height when --thresh-v is unset",
    )
    g.add_argument("--max-lines", type=_positive(int), default=32, help="max lines per orientation")
    g.add_argument("--no-refine", action="store_true", help="skip least-squares line refinement")


def _add_input_flags(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--pred", type=Path, help="prediction file (scored instances)")
    src.add_argument("--gt", type=Path, help="ground-truth file")
    p.add_argument("--min-score", type=float, default=0.5, help="drop predictions scored below this")
    p.add_argument("--grid-crop", type=_grid, default=None, metavar="RxC")


def _model_from_args(args) -> tuple[BrickSpec, HoughConfig]:
    brick = BrickSpec(args.brick_width_mm, args.brick_height_mm)
    hough = HoughConfig(
        theta_step=math.radians(args.theta_step_deg),
        rho_step=args.rho_step,
        threshold_vertical=args.thresh_v,
        threshold_horizontal=args.thresh_h,
        max_lines_per_class=args.max_lines,
        threshold_fraction=args.thresh_frac,
    )
    return brick, hough


def _load_records(args) -> list[ImageRecord]:
    path = args.pred if args.pred is not None else args.gt
    kind = "predictions" if args.pred is not None else "ground_truth"
    records = load_dataset(path, kind)
    if kind == "predictions":
        records = [r.with_instances(i for i in r.instances if i.score >= args.min_score) for r in records]
    if args.grid_crop is not None:
        rows, cols = args.grid_crop
        records = [cell for r in records for cell in grid_crop(r, rows, cols)]
    return sorted(records, key=lambda r: r.image_id)


def _safe_name(image_id: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in image_id)


# -- measure -----------------------------------------------------------------------------


def _measure_one(job):
    record, brick, hough, refine, count_pixels, debug_dir = job
    try:
        rect = rectify_image(record, hough, brick, refine=refine)
    except (RectificationError, GeometryError) as exc:
        return record.image_id, None, {"image_id": record.image_id, "stage": "rectification", "kind": type(exc).__name__, "message": str(exc), "code": EXIT_RECTIFY}
    if debug_dir is not None:
        name = _safe_name(record.image_id)
        _, _, edges, _, _ = detect_lines(record, hough, refine)
        render.render_lines(edges, rect.horizontal, rect.vertical, debug_dir / f"{name}_lines.png", rect.selection.quad)
        _write_json(debug_dir / f"{name}_rectification.json", rect.report())
    try:
        m = measure_cracks(rect.warped, rect.scale, count_pixels)
    except MeasurementError as exc:
        return record.image_id, None, {"image_id": record.image_id, "stage": "measurement", "kind": type(exc).__name__, "message": str(exc), "code": EXIT_MEASURE}
    return record.image_id, m, None


def _run_pool(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def cmd_measure(args) -> int:
    try:
        records = _load_records(args)
        references = None
        if args.references is not None:
            references = json.loads(Path(args.references).read_text(encoding="utf-8"))
            if not isinstance(references, list):
                raise AnnotationError("reference file must be a JSON list")
    except (AnnotationError, OSError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return EXIT_PARSE
    brick, hough = _model_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    debug_dir = out / "debug" if args.debug_render else None
    if debug_dir is not None:
        debug_dir.mkdir(exist_ok=True)
    jobs = [(r, brick, hough, not args.no_refine, args.count_pixels, debug_dir) for r in records]
    results = sorted(_run_pool(_measure_one, jobs, args.workers), key=lambda t: t[0])
    measurements = [m for _, m, _ in results if m is not None]
    failures = [f for _, _, f in results if f is not None]
    if references is not None:
        known = {m.image_id for m in measurements}
        failed = {f["image_id"] for f in failures}
        unknown = [r for r in references if str(r.get("image_id")) not in known | failed]
        if unknown:
            log.error("%s", AlignmentError(f"references for unknown images: {[r.get('image_id') for r in unknown]}"))
            return EXIT_PARSE
        references = [r for r in references if str(r.get("image_id")) in known]
    try:
        doc = measurement_report(measurements, references)
    except MeasurementError as exc:
        log.error("%s", exc)
        return EXIT_MEASURE
    doc["failures"] = failures
    _write_json(out / "measurements.json", doc)
    for f in failures:
        log.warning("%s: %s (%s)", f["image_id"], f["kind"], f["message"])
    return min((f["code"] for f in failures), default=EXIT_OK)


# -- eval / synth / lines --------------------------------------------------------------------


def cmd_eval(args) -> int:
    try:
        gt = load_dataset(args.gt, "ground_truth")
        pred = load_dataset(args.pred, "predictions")
        report = evaluate(gt, pred)
    except (AnnotationError, AlignmentError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_PARSE
    _write_json(Path(args.out), report.to_dict())
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        doc = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        if args.seed is not None:
            doc["seed"] = args.seed
        spec = WallSpec.from_dict(doc)
        gt, pred, truth = generate(spec)
    except (ValueError, TypeError, KeyError, OSError, GeometryError) as exc:
        log.error("invalid wall spec: %s", exc)
        return EXIT_PARSE
    for p in (args.out_gt, args.out_pred, args.out_truth):
        Path(p).parent.mkdir(parents=True, exist_ok=True)
    save_outputs(gt, pred, truth, args.out_gt, args.out_pred, args.out_truth)
    return EXIT_OK


def cmd_lines(args) -> int:
    try:
        records = _load_records(args)
    except (AnnotationError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_PARSE
    _, hough = _model_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    code = EXIT_OK
    for rec in records:
        name = _safe_name(rec.image_id)
        try:
            horizontal, vertical, edges, cfg, acc = detect_lines(rec, hough, refine=not args.no_refine)
        except RectificationError as exc:
            log.warning("%s: %s", rec.image_id, exc)
            code = EXIT_RECTIFY
            continue
        render.write_pgm(acc.votes, out / f"{name}_hough.pgm")
        render.render_lines(edges, horizontal, vertical, out / f"{name}_lines.png")
        lines = [
            {"rho": l.rho, "theta_deg": math.degrees(l.theta), "votes": l.votes, "class": cls}
            for cls, group in (("horizontal", horizontal), ("vertical", vertical))
            for l in group
        ]
        _write_json(
            out / f"{name}_lines.json",
            {
                "image_id": rec.image_id,
                "threshold_vertical": cfg.threshold_vertical,
                "threshold_horizontal": cfg.threshold_horizontal,
                "lines": lines,
            },
        )
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crackmeter", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("measure", help="rectify images and measure cracks in millimetres")
    _add_input_flags(p)
    _add_model_flags(p)
    p.add_argument("--references", type=Path, help="JSON list of reference crack sizes")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--debug-render", action="store_true", help="write line overlays and rectification reports")
    p.add_argument("--count-pixels", action="store_true", help="transverse width as filled-pixel count per row")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("eval", help="COCO-style box/mask AP")
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="report JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic wall with ground truth")
    p.add_argument("--spec", type=Path, required=True)
    p.add_argument("--out-gt", type=Path, required=True)
    p.add_argument("--out-pred", type=Path, required=True)
    p.add_argument("--out-truth", type=Path, required=True)
    p.add_argument("--seed", type=int, default=None, help="override the seed in the wall file")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("lines", help="Hough debug output (PGM accumulator, line JSON, PNG overlay)")
    _add_input_flags(p)
    _add_model_flags(p)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=cmd_lines)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
