"""Command line interface.

Exit status is 0 on success, 1 for usage errors and 2 for bad or unreadable data.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as cvxio
from .errors import ConvexDRError
from .metrics import evaluate
from .optimize import Schedule, fit, init_scene, parse_config
from .polytope import polytope_mesh
from .render import SoftRasterConfig, raster_hard, raster_soft

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

log = logging.getLogger("convexdr")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _resolution(text):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("resolution must be positive")
    return w, h


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return v


def build_parser():
    p = _Parser(prog="convexdr", description="Fit unions of convex polytopes to silhouette images.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("gen-views", help="render target silhouettes of a mesh")
    g.add_argument("mesh", help=".obj or .cvx file")
    g.add_argument("--views", type=_positive_int, default=16)
    g.add_argument("--res", type=_resolution, default=(256, 256), metavar="WxH")
    g.add_argument("--seed", type=int, default=None, help="randomly rotate the camera rig")
    g.add_argument("--out", default="views")

    f = sub.add_parser("fit", help="fit a scene to a target directory")
    f.add_argument("targets", help="directory written by gen-views")
    f.add_argument("--convexes", type=_positive_int, default=None)
    f.add_argument("--planes", type=_positive_int, default=None)
    f.add_argument("--steps", type=_nonneg_int, default=None)
    f.add_argument("--seed", type=int, default=None)
    f.add_argument("--config", default=None, help="key = value file of schedule settings")
    f.add_argument("--out", default="scene.cvx")

    r = sub.add_parser("render", help="render a scene for every camera of a manifest")
    r.add_argument("scene")
    r.add_argument("manifest")
    r.add_argument("--soft", action="store_true")
    r.add_argument("--sigma", type=float, default=1.0)
    r.add_argument("--out", default="renders")

    e = sub.add_parser("eval", help="compare a scene with a reference mesh")
    e.add_argument("scene")
    e.add_argument("mesh")
    e.add_argument("--samples", type=_positive_int, default=100_000)
    e.add_argument("--seed", type=int, default=0)

    c = sub.add_parser("convert", help="export a scene as OBJ")
    c.add_argument("scene")
    c.add_argument("--obj", required=True)
    return p


def _scene_meshes(path):
    return [polytope_mesh(c)[0] for c in cvxio.read_cvx(path).to_convexes()]


def _cmd_gen_views(args):
    meshes = cvxio.load_meshes(args.mesh)
    paths = cvxio.gen_views(meshes, args.out, args.views, args.res, args.seed)
    print(f"wrote {len(paths)} views to {args.out}")


_INIT_KEYS = {"convexes": int, "planes": int, "seed": int, "init_size": float}


def _cmd_fit(args):
    settings = parse_config(Path(args.config).read_text()) if args.config else {}
    init = {k: _INIT_KEYS[k](settings.pop(k)) for k in list(settings) if k in _INIT_KEYS}
    for key in ("convexes", "planes", "seed"):
        if getattr(args, key) is not None:
            init[key] = getattr(args, key)
    if args.steps is not None:
        settings["total_steps"] = args.steps
    schedule = Schedule.from_mapping(settings)
    targets, radius = cvxio.load_targets(args.targets)
    if not targets:
        raise ConvexDRError("target directory lists no views")
    if radius is None:
        radius = 1.0
    region = np.array([[-radius] * 3, [radius] * 3])
    scene = init_scene(init.get("convexes", 8), init.get("planes", 16), init.get("seed", 0), region,
                       init.get("init_size"))

    def report(step, loss, _):
        log.info("step %d loss %.6f", step, loss)

    scene, history = fit(scene, targets, schedule, [report])
    Path(args.out).write_text(cvxio.write_cvx(cvxio.CvxDocument.from_convexes(scene.convexes)))
    final = f"{history[-1]:.6g}" if history else "n/a"
    print(f"fitted {len(scene.convexes)} convexes in {len(history)} steps, final loss {final}; wrote {args.out}")


def _cmd_render(args):
    meshes = _scene_meshes(args.scene)
    cams, names, _ = cvxio.parse_manifest(Path(args.manifest).read_text())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = SoftRasterConfig(args.sigma)
    for i, (cam, name) in enumerate(zip(cams, names)):
        img = raster_soft(meshes, cam, cfg) if args.soft else raster_hard(meshes, cam)[0]
        cvxio.write_image(out / (name or f"view_{i:03d}.pgm"), img)
    print(f"rendered {len(cams)} views to {out}")


def _cmd_eval(args):
    pred = _scene_meshes(args.scene)
    ref = cvxio.load_meshes(args.mesh)
    m = evaluate(pred, ref, args.samples, args.seed)
    print(f"chamfer_l1 {m['chamfer_l1']:.6g}")
    print(f"chamfer_l2_x1000 {1000.0 * m['chamfer_l2']:.6g}")
    print(f"normal_consistency {m['normal_consistency']:.6g}")


def _cmd_convert(args):
    meshes = _scene_meshes(args.scene)
    Path(args.obj).write_text(cvxio.write_obj(meshes))
    print(f"wrote {sum(len(m.vertices) for m in meshes)} vertices, "
          f"{sum(len(m.triangles) for m in meshes)} triangles to {args.obj}")


_COMMANDS = {
    "gen-views": _cmd_gen_views,
    "fit": _cmd_fit,
    "render": _cmd_render,
    "eval": _cmd_eval,
    "convert": _cmd_convert,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return EXIT_OK if not e.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        _COMMANDS[args.command](args)
    except (ConvexDRError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
