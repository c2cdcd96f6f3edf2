"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import raster
from .evaluation import aggregate_counts, bundle_counts, format_table
from .geometry import DEFAULT_STEEPNESS, partial_attached_map, soft_partial_attached_map
from .gradcheck import run_gradient_checks
from .light import (
    HeuristicConfig,
    LightFitConfig,
    angular_error,
    fit_light_from_attached,
    heuristic_light_3d,
)
from .oracle import render_scene, scene_suite
from .pipeline import refine_loop
from .raster import DataError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3

log = logging.getLogger("shadowloop")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like WxH, got {text!r}")
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("size must be positive")
    return w, h


def _load_depth(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".npy":
        return raster.load_depth(path)
    img = raster._open_image(path)
    return np.asarray(img.convert("F"), dtype=np.float64)


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# -- subcommands ------------------------------------------------------------


def cmd_synth(args) -> int:
    out = Path(args.out)
    raster.make_layout(out)
    for i, spec in enumerate(scene_suite(args.count, args.seed, args.size)):
        name = f"scene_{i:04d}"
        b = render_scene(spec)
        paths = raster.dataset_paths(out, name)
        raster.save_image(b.image, paths["images"])
        raster.save_normals(b.normals, paths["normals"])
        raster.save_tri_class(b.gt, out, name)
        raster.save_mask(b.object_mask, paths["objects"])
        raster.save_light(b.light, paths["light"])
        raster.save_depth(b.depth, paths["depth"])
    print(f"wrote {args.count} scenes to {out}")
    return EXIT_OK


def cmd_partial_map(args) -> int:
    normals = raster.load_normals(args.normals)
    light = raster.load_light(args.light)
    out = Path(args.out)
    if args.soft:
        soft = soft_partial_attached_map(normals, light, args.k)
        if out.suffix == ".npy":
            np.save(out, soft, allow_pickle=False)
        else:
            q = np.floor(soft * 255.0 + 0.5).astype(np.uint8)
            Image.fromarray(q, mode="L").save(out)
    else:
        raster.save_mask(partial_attached_map(normals, light), out)
    return EXIT_OK


def cmd_light_centroid(args) -> int:
    obj = raster.load_mask(args.object)
    cast = raster.load_mask(args.cast)
    depth = _load_depth(args.depth)
    light = heuristic_light_3d(obj, cast, depth, HeuristicConfig(depth_scale=args.depth_scale))
    print("{:.17g} {:.17g} {:.17g}".format(*light))
    return EXIT_OK


def cmd_light_fit(args) -> int:
    normals = raster.load_normals(args.normals)
    attached = raster.load_mask(args.attached)
    region = raster.load_mask(args.region)
    cfg = LightFitConfig(
        coarse_samples=args.samples, refine_steps=args.refine, steepness=args.k
    )
    result = fit_light_from_attached(normals, attached & region, region, cfg)
    print("direction {:.17g} {:.17g} {:.17g}".format(*result.direction))
    print(f"residual {result.residual:.17g}")
    print(f"candidates {result.candidates_evaluated}")
    if args.truth:
        truth = raster.load_light(args.truth)
        print(f"angular_error_deg {angular_error(result.direction, truth):.6f}")
    return EXIT_OK


def cmd_refine(args) -> int:
    image = raster.load_image(args.image)
    normals = raster.load_normals(args.normals)
    if image.shape[:2] != normals.shape[:2]:
        raise DataError(f"image {image.shape[:2]} and normals {normals.shape[:2]} differ")
    trace = refine_loop(image, normals, iterations=args.iters)
    out = Path(args.out)
    name = Path(args.image).stem
    raster.save_tri_class(trace.final.mask, out, name)
    light = trace.light
    (out / "light").mkdir(parents=True, exist_ok=True)
    if light is not None:
        raster.save_light(light, out / "light" / f"{name}.json")
    if args.trace:
        for i, rec in enumerate(trace.records, start=1):
            step = out / "trace" / name / f"iter_{i}"
            step.mkdir(parents=True, exist_ok=True)
            raster.save_mask(rec.mask.cast, step / "cast.png")
            raster.save_mask(rec.mask.attached, step / "attached.png")
            np.save(step / "prior.npy", rec.prior, allow_pickle=False)
            np.save(step / "logits.npy", rec.logits, allow_pickle=False)
            if rec.light is not None:
                raster.save_light(rec.light, step / "light.json")
                raster.save_mask(rec.partial_map, step / "partial.png")
            else:
                (step / "note.txt").write_text(rec.note + "\n")
    print(f"{trace.iterations} iteration(s); light {'none' if light is None else ' '.join(f'{c:.6f}' for c in light)}")
    return EXIT_OK


def cmd_eval(args) -> int:
    names = raster.record_names(args.gt)
    if not names:
        raise DataError(f"no ground-truth records under {args.gt}")
    per_image = []
    for name in names:
        gt = raster.load_tri_class(args.gt, name)
        pred = raster.load_tri_class(args.pred, name)
        obj = raster.load_mask(raster.dataset_paths(args.gt, name)["objects"])
        per_image.append(bundle_counts(pred, gt, obj))
    report = aggregate_counts(per_image, args.aggregate)
    print(format_table(report))
    if args.json:
        _write_json(Path(args.json), report.as_dict())
    return EXIT_OK


def cmd_derive_mask(args) -> int:
    shadow = raster.load_image(args.shadow)
    free = raster.load_image(args.shadow_free)
    raster.save_mask(raster.derive_full_mask(shadow, free, args.threshold), args.out)
    return EXIT_OK


def cmd_loss_check(args) -> int:
    results = run_gradient_checks(args.seed, args.instances)
    worst = {}
    for r in results:
        worst[r.loss] = max(worst.get(r.loss, 0.0), r.rel_error)
    failed = [r for r in results if not r.passed(args.tol)]
    for loss, err in worst.items():
        status = "ok" if err <= args.tol else "FAIL"
        print(f"{loss:<5} max rel error {err:.3e}  {status}")
    if failed:
        print(f"{len(failed)} of {len(results)} checks exceed {args.tol:g}")
        return EXIT_VERIFY
    print(f"all {len(results)} checks within {args.tol:g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="shadowloop", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write an oracle dataset")
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--size", type=_size, default=(256, 256))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("partial-map", help="orientation-only attached shadow map")
    s.add_argument("--normals", required=True)
    s.add_argument("--light", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--soft", action="store_true")
    s.add_argument("--k", type=float, default=DEFAULT_STEEPNESS)
    s.set_defaults(func=cmd_partial_map)

    light = sub.add_parser("light", help="light direction estimation")
    lsub = light.add_subparsers(dest="light_command", required=True, parser_class=_Parser)
    c = lsub.add_parser("centroid", help="centroid + depth heuristic")
    c.add_argument("--object", required=True)
    c.add_argument("--cast", required=True)
    c.add_argument("--depth", required=True, help=".npy depth array or grayscale image")
    c.add_argument("--depth-scale", type=float, default=1.0)
    c.set_defaults(func=cmd_light_centroid)
    f = lsub.add_parser("fit", help="fit a light to an attached-shadow mask")
    f.add_argument("--normals", required=True)
    f.add_argument("--attached", required=True)
    f.add_argument("--region", required=True)
    f.add_argument("--samples", type=int, default=LightFitConfig.coarse_samples)
    f.add_argument("--refine", type=int, default=LightFitConfig.refine_steps)
    f.add_argument("--k", type=float, default=LightFitConfig.steepness)
    f.add_argument("--truth")
    f.set_defaults(func=cmd_light_fit)

    s = sub.add_parser("refine", help="iterative detection / light refinement")
    s.add_argument("--image", required=True)
    s.add_argument("--normals", required=True)
    s.add_argument("--iters", type=int, default=3)
    s.add_argument("--out", required=True)
    s.add_argument("--trace", action="store_true")
    s.set_defaults(func=cmd_refine)

    s = sub.add_parser("eval", help="full / cast / attached BER and F1")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--aggregate", choices=("image", "pixel"), default="image")
    s.add_argument("--json", help="also write the report as JSON")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("derive-mask", help="full-shadow mask from a shadow / shadow-free pair")
    s.add_argument("--shadow", required=True)
    s.add_argument("--shadow-free", required=True)
    s.add_argument("--threshold", type=float, default=0.05)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_derive_mask)

    s = sub.add_parser("loss-check", help="finite-difference check of loss gradients")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--instances", type=int, default=100)
    s.add_argument("--tol", type=float, default=1e-4)
    s.set_defaults(func=cmd_loss_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (DataError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        # invalid option values rejected by config validation
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
