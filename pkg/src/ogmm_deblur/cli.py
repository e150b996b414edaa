"""Command-line entry point: ``deblur``, ``synth``, ``metrics`` and ``flow``.

Exit codes: 0 success, 2 invalid arguments or configuration, 3 I/O failure,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import blur_synth
from .config import build_pipeline_config, load_config, parse_values
from .image_core import ImageIOError, load_image, save_image, save_rgb
from .metrics import evaluate
from .ogmm import NumericalError
from .optical_flow import (
    FlowFileError,
    FlowParams,
    compute_dense_flow,
    flow_error,
    flow_to_color,
    read_flo,
    write_flo,
)
from .pipeline import deblur

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("ogmm_deblur")

# cli flag dest -> config key
_DEBLUR_OVERRIDES = {
    "iters": "iters",
    "em_iters": "em_iters",
    "gd_iters": "gd_iters",
    "lam": "lambda",
    "omega": "omega",
    "mu": "mu",
    "alpha": "alpha",
    "sigma_init": "sigma_init",
    "sigma_d": "sigma_d",
    "sigma_l": "sigma_l",
    "s1": "s1",
    "s2": "s2",
    "stride": "stride",
    "detail": "detail",
    "tau": "tau",
    "eta": "eta",
    "enhance_gain": "enhance_gain",
    "enhance_bias": "enhance_bias",
    "enhance_gamma": "enhance_gamma",
    "dump_intermediate": "dump_intermediate",
    "dump_flow": "dump_flow",
    "threads": "threads",
    "seed": "seed",
}


class UsageError(Exception):
    pass


def _add_flow_args(p):
    d = FlowParams()
    g = p.add_argument_group("optical flow")
    g.add_argument("--pyramid-levels", type=int, default=None, help=f"default {d.pyramid_levels}")
    g.add_argument("--pyramid-scale", type=float, default=None, help=f"default {d.pyramid_scale}")
    g.add_argument("--window-size", type=int, default=None, help=f"default {d.window_size}")
    g.add_argument("--flow-iterations", type=int, default=None, help=f"default {d.iterations_per_level}")
    g.add_argument("--poly-neighborhood", type=int, default=None, help=f"default {d.poly_neighborhood}")
    g.add_argument("--poly-sigma", type=float, default=None, help=f"default {d.poly_sigma}")


_FLOW_FLAGS = ("pyramid_levels", "pyramid_scale", "window_size", "flow_iterations",
               "poly_neighborhood", "poly_sigma")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ogmm-deblur",
        description="Flow-guided Gaussian-mixture deblurring of blurred/noisy image pairs.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    # also accepted after the subcommand name
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("deblur", parents=[common], help="deblur a blurred image using a noisy second view")
    p.add_argument("--blurred", required=True)
    p.add_argument("--noisy", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--iters", type=int, help="outer flow/EM alternations T (default 2)")
    p.add_argument("--em-iters", type=int, help="EM rounds per patch (default 3)")
    p.add_argument("--gd-iters", type=int, help="gradient steps per M-step (default 50)")
    p.add_argument("--lambda", dest="lam", type=float, help="data-term weight (default 0.775)")
    p.add_argument("--omega", type=float, help="outlier weight (default 0.02)")
    p.add_argument("--mu", help="bilateral weight or 'auto' (default 0.5)")
    p.add_argument("--alpha", type=float, help="gradient step (default 0.1)")
    p.add_argument("--sigma-init", type=float, help="initial variance (default 300)")
    p.add_argument("--sigma-d", type=float, help="bilateral spatial scale (default 1.0)")
    p.add_argument("--sigma-l", type=float, help="bilateral range scale (default 20)")
    p.add_argument("--s1", type=int, help="blurred patch side (default 3)")
    p.add_argument("--s2", type=int, help="noisy patch side (default 5)")
    p.add_argument("--stride", type=int, help="patch stride (default 1)")
    p.add_argument("--detail", dest="detail", action="store_true", default=None)
    p.add_argument("--no-detail", dest="detail", action="store_false")
    p.add_argument("--tau", type=float, help="detail mask threshold (default 40)")
    p.add_argument("--eta", type=float, help="detail weight (default 0.3)")
    p.add_argument("--enhance-gain", type=float)
    p.add_argument("--enhance-bias", type=float)
    p.add_argument("--enhance-gamma", type=float)
    p.add_argument("--report", help="write the per-iteration report here")
    p.add_argument("--gt-flo", help="ground-truth flow for per-iteration AEE/AAE")
    p.add_argument("--dump-intermediate", metavar="DIR", help="write each iterate as PNG")
    p.add_argument("--dump-flow", metavar="DIR", help="write each iteration's flow as .flo")
    p.add_argument("--threads", type=int)
    p.add_argument("--seed", type=int, help="accepted for script compatibility; deblurring uses no randomness")
    _add_flow_args(p)

    p = sub.add_parser("synth", parents=[common], help="make a blurred/noisy pair from two sharp views")
    p.add_argument("--sharp-a", required=True)
    p.add_argument("--sharp-b", required=True)
    p.add_argument("--blur-type", required=True, help="preset 1..6 or a scene file")
    p.add_argument("--noise-sigma", type=float, help="defaults to the scene's noise_sigma")
    p.add_argument("--out-blurred", required=True)
    p.add_argument("--out-noisy", required=True)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("metrics", parents=[common], help="PSNR / SSIM / MSE of a test image against a reference")
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True)

    p = sub.add_parser("flow", parents=[common], help="dense optical flow between two images")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out-flo")
    p.add_argument("--out-viz")
    p.add_argument("--gt-flo")
    _add_flow_args(p)
    return parser


def _flow_values(args) -> dict:
    return {k: getattr(args, k) for k in _FLOW_FLAGS if getattr(args, k) is not None}


def _flow_params(args) -> FlowParams:
    v = parse_values(_flow_values(args))
    d = FlowParams()
    try:
        return FlowParams(
            pyramid_levels=v.get("pyramid_levels", d.pyramid_levels),
            pyramid_scale=v.get("pyramid_scale", d.pyramid_scale),
            window_size=v.get("window_size", d.window_size),
            iterations_per_level=v.get("flow_iterations", d.iterations_per_level),
            poly_neighborhood=v.get("poly_neighborhood", d.poly_neighborhood),
            poly_sigma=v.get("poly_sigma", d.poly_sigma),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_deblur(args) -> int:
    values = load_config(args.config) if args.config else {}
    overrides = {
        key: getattr(args, dest)
        for dest, key in _DEBLUR_OVERRIDES.items()
        if getattr(args, dest) is not None
    }
    overrides.update(_flow_values(args))
    values.update(parse_values(overrides))
    cfg = build_pipeline_config(values)

    blurred = load_image(args.blurred)
    noisy = load_image(args.noisy)
    gt = read_flo(args.gt_flo) if args.gt_flo else None
    if blurred.shape != noisy.shape:
        raise UsageError(f"image sizes differ: {blurred.shape} vs {noisy.shape}")
    if gt is not None and gt.shape[:2] != blurred.shape:
        raise UsageError("ground-truth flow does not match the image size")

    out, report = deblur(blurred, noisy, cfg, gt_flow=gt)
    if not np.all(np.isfinite(out)):
        raise NumericalError("output image is not finite")
    save_image(out, args.out)
    if args.report:
        report.write(args.report)
    for rec in report.iterations:
        extra = "" if rec.aee is None else f" aee={rec.aee:.6f} aae={rec.aae:.6f}"
        log.info("t=%d energy=%.6f%s", rec.t, rec.energy, extra)
    return EXIT_OK


def cmd_synth(args) -> int:
    a = load_image(args.sharp_a)
    b = load_image(args.sharp_b)
    bt = args.blur_type
    if bt.isdigit():
        scene = blur_synth.preset_scene(int(bt), a.shape)
    elif Path(bt).is_file():
        scene = blur_synth.load_scene(bt)
    else:
        raise UsageError(f"--blur-type must be 1..6 or an existing scene file, got {bt!r}")
    sigma = scene.noise_sigma if args.noise_sigma is None else args.noise_sigma
    blurred = blur_synth.apply_scene(a, scene)
    noisy = blur_synth.add_gaussian_noise(b, sigma, args.seed)
    save_image(blurred, args.out_blurred)
    save_image(noisy, args.out_noisy)
    return EXIT_OK


def cmd_metrics(args) -> int:
    ref = load_image(args.ref)
    test = load_image(args.test)
    if ref.shape != test.shape:
        raise UsageError(f"image sizes differ: {ref.shape} vs {test.shape}")
    print(evaluate(ref, test).format())
    return EXIT_OK


def cmd_flow(args) -> int:
    params = _flow_params(args)
    a = load_image(args.a)
    b = load_image(args.b)
    if a.shape != b.shape:
        raise UsageError(f"image sizes differ: {a.shape} vs {b.shape}")
    flow = compute_dense_flow(a, b, params)
    if args.out_flo:
        write_flo(flow, args.out_flo)
    if args.out_viz:
        save_rgb(flow_to_color(flow), args.out_viz)
    if args.gt_flo:
        gt = read_flo(args.gt_flo)
        if gt.shape != flow.shape:
            raise UsageError("ground-truth flow does not match the image size")
        aee, aae = flow_error(flow, gt)
        print(f"aee={aee:.6f} aae={aae:.6f}")
    return EXIT_OK


COMMANDS = {"deblur": cmd_deblur, "synth": cmd_synth, "metrics": cmd_metrics, "flow": cmd_flow}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (FileNotFoundError, ImageIOError, FlowFileError, PermissionError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ValueError) as exc:
        print(f"invalid arguments: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
