"""Command-line driver.

Exit codes: 0 success, 1 check failure or internal error, 2 usage/input error.
Reports go to stdout as key=value lines.
"""
from __future__ import annotations

import argparse
import os
import sys
from importlib import resources

import numpy as np

from . import baselines, cx as cxm, experiments, grad as gradm
from .features import PatchSpec, extract_patches, sample_gaussian_features, subsample_to_match
from .optimize import OptimizeConfig
from .reporting import key_values
from .tensor_core import FeatureSet, ImageGrid, load_png, read_cxt, save_png, write_cxt

DISTANCES = {"cosine": "cosine_target_centered", "l2": "squared_euclidean", "l1": "absolute"}
COMPARE_LOSSES = ("cx", "dis", "l1", "l2", "perceptual", "gram")


class UsageError(Exception):
    """Bad flags or unusable input; reported with exit status 2."""


def default_image_path() -> str:
    return str(resources.files("cxloss") / "data" / "test_image.png")


def _positive(name, value):
    if not value > 0:
        raise UsageError(f"{name} must be > 0")


def _nonneg(name, value):
    if not value >= 0:
        raise UsageError(f"{name} must be >= 0")


def _at_least_one(name, value):
    if value < 1:
        raise UsageError(f"{name} must be >= 1")


def _cx_params(args) -> cxm.CxParams:
    _positive("h", args.h)
    _nonneg("epsilon", args.epsilon)
    return cxm.CxParams(h=args.h, epsilon=args.epsilon, distance=DISTANCES[args.distance])


def _patch_spec(args) -> PatchSpec:
    _at_least_one("patch", args.patch)
    _at_least_one("stride", args.stride)
    return PatchSpec(args.patch, args.stride)


def _is_png(path: str) -> bool:
    return path.lower().endswith(".png")


def _read_input(path: str):
    """PNG -> ImageGrid; CXT rank 2 -> N x D matrix; CXT rank 3 -> H x W x C map."""
    if not os.path.exists(path):
        raise UsageError(f"no such file: {path}")
    try:
        if _is_png(path):
            return load_png(path)
        arr = read_cxt(path)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    if arr.ndim not in (2, 3):
        raise UsageError(f"{path}: expected a rank-2 or rank-3 tensor, got dims {list(arr.shape)}")
    return arr


def _as_features(obj, spec: PatchSpec, name: str) -> FeatureSet:
    if isinstance(obj, ImageGrid):
        if obj.height < spec.patch_size or obj.width < spec.patch_size:
            raise UsageError(f"{name}: image {obj.height}x{obj.width} is smaller than patch size {spec.patch_size}")
        return extract_patches(obj, spec)
    if obj.ndim == 3:
        h, w, c = obj.shape
        rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        return FeatureSet(obj.reshape(h * w, c), np.stack([rows.ravel(), cols.ravel()], 1))
    return FeatureSet(obj)


def _as_pixels(obj) -> np.ndarray:
    return obj.data if isinstance(obj, ImageGrid) else obj


def cmd_compare(args) -> int:
    params = _cx_params(args)
    spec = _patch_spec(args)
    a, b = _read_input(args.a), _read_input(args.b)
    report = {"measure": args.loss}
    if args.loss in ("l1", "l2"):
        pa, pb = _as_pixels(a), _as_pixels(b)
        if pa.shape != pb.shape:
            raise UsageError(f"shape mismatch: a has {list(pa.shape)}, b has {list(pb.shape)}")
        fn = baselines.l1_loss if args.loss == "l1" else baselines.l2_loss
        report.update(value=fn(pa, pb), size=int(pa.size))
        sys.stdout.write(key_values(report))
        return 0

    x, y = _as_features(a, spec, "a"), _as_features(b, spec, "b")
    if x.dim != y.dim:
        raise UsageError(f"feature dimension mismatch: a has D={x.dim}, b has D={y.dim}")
    if args.match_cardinality:
        x, y = subsample_to_match(x, y, args.seed)
    if args.loss == "cx":
        value, _ = cxm.contextual_similarity(x, y, params)
        report.update(value=value, loss=-np.log(value))
    elif args.loss == "dis":
        report["value"] = cxm.binarized_similarity(x, y, params.distance)
    elif args.loss == "perceptual":
        if x.features.shape != y.features.shape:
            raise UsageError(f"perceptual loss needs aligned sets: a is {x.n}x{x.dim}, b is {y.n}x{y.dim}")
        report["value"] = baselines.feature_l1_loss(x, y)
    else:
        report["value"] = baselines.gram_loss(x, y)
    report.update(n=x.n, m=y.n, d=x.dim, h=params.h, epsilon=params.epsilon, distance=params.distance)
    sys.stdout.write(key_values(report))
    return 0


def _axis(lo, hi, step, name):
    _nonneg(f"{name}-step", step)
    if hi < lo:
        raise UsageError(f"{name}-max must be >= {name}-min")
    if step == 0 or hi == lo:
        return [float(lo)]
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return [float(lo + k * step) for k in range(n)]


def cmd_expectation(args) -> int:
    _at_least_one("trials", args.trials)
    _at_least_one("workers", args.workers)
    _positive("h", args.h)
    if args.points < 2:
        raise UsageError("points must be >= 2")
    mus = _axis(args.mu_min, args.mu_max, args.mu_step, "mu")
    sigmas = _axis(args.sigma_min, args.sigma_max, args.sigma_step, "sigma")
    if sigmas[0] < 0:
        raise UsageError("sigma-min must be >= 0")
    grid = experiments.expectation_grid(
        args.measure, args.points, mus, sigmas, args.h, args.trials, args.seed, args.workers
    )
    with open(args.out, "w", newline="") as fh:
        fh.write(grid.to_csv())
    amu, asig = grid.argmax()
    imu, isig = grid.argmin()
    sys.stdout.write(key_values({
        "measure": args.measure,
        "distance": grid.distance,
        "cells": grid.mean.size,
        "trials": args.trials,
        "argmax_mu": amu,
        "argmax_sigma": asig,
        "max_mean": float(grid.mean.max()),
        "argmin_mu": imu,
        "argmin_sigma": isig,
        "min_mean": float(grid.mean.min()),
        "out": args.out,
    }))
    return 0


def cmd_denoise(args) -> int:
    params = _cx_params(args)
    spec = _patch_spec(args)
    _at_least_one("iters", args.iters)
    _at_least_one("targets", args.targets)
    _at_least_one("workers", args.workers)
    _nonneg("noise", args.noise)
    _nonneg("max-shift", args.max_shift)
    if args.step is not None:
        _positive("step", args.step)
    losses = [s.strip() for s in args.losses.split(",") if s.strip()]
    bad = [s for s in losses if s not in ("cx", "l1", "l2")]
    if not losses or bad:
        raise UsageError(f"losses must be a comma list of cx, l1, l2; got {args.losses!r}")
    image = _read_input(args.image)
    if not isinstance(image, ImageGrid):
        raise UsageError(f"{args.image}: denoise needs an image")
    config = OptimizeConfig(cx_params=params, patch=spec, iters=args.iters, step_size=args.step, seed=args.seed)
    try:
        result = experiments.toy_denoise(
            image, args.crop, args.targets, args.max_shift, args.noise, losses, config, args.seed, args.workers
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = result.to_report()
    if len(losses) == 1:
        report += key_values({"psnr_result": result.outcomes[losses[0]].psnr})
    if args.out_dir:
        result.save_images(args.out_dir)
        report += key_values({"out_dir": args.out_dir})
    if args.report:
        with open(args.report, "w", newline="") as fh:
            fh.write(report)
    sys.stdout.write(report)
    return 0


def cmd_gradcheck(args) -> int:
    params = _cx_params(args)
    _at_least_one("trials", args.trials)
    _at_least_one("points", args.points)
    _at_least_one("dim", args.dim)
    _positive("step", args.step)
    x = sample_gaussian_features(args.points, args.dim, 0.0, 1.0, seed=[args.seed, 0])
    y = sample_gaussian_features(args.points, args.dim, 0.0, 1.0, seed=[args.seed, 1])
    try:
        rep = gradm.grad_check(x, y, params, args.step, args.trials, args.seed)
    except RuntimeError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    ok = rep.max_rel_err <= args.threshold
    sys.stdout.write(key_values({
        "distance": params.distance,
        "h": params.h,
        "epsilon": params.epsilon,
        "step": args.step,
        "trials": rep.trials,
        "skipped": rep.skipped,
        "checked_coords": rep.checked_coords,
        "max_abs_err": rep.max_abs_err,
        "max_rel_err": rep.max_rel_err,
        "tie_margin": rep.tie_margin,
        "threshold": args.threshold,
        "pass": "yes" if ok else "no",
    }))
    return 0 if ok else 1


def cmd_tensor_convert(args) -> int:
    src = _read_input(args.input)
    out = args.output
    if _is_png(out):
        if isinstance(src, ImageGrid):
            img = src
        elif src.ndim == 2 or (src.ndim == 3 and src.shape[2] in (1, 3)):
            img = ImageGrid(src)
        else:
            raise UsageError(f"cannot write dims {list(src.shape)} as PNG; need H x W or H x W x 1|3")
        save_png(img, out)
        dims = list(img.shape)
    else:
        arr = src.data if isinstance(src, ImageGrid) else src
        write_cxt(arr, out)
        dims = list(arr.shape)
    sys.stdout.write(key_values({"input": args.input, "output": out, "dims": "x".join(map(str, dims))}))
    return 0


def _add_cx_flags(p, h=0.5):
    p.add_argument("--h", type=float, default=h, help="bandwidth (default %(default)s)")
    p.add_argument("--epsilon", type=float, default=1e-5, help="distance normalization offset (default %(default)s)")
    p.add_argument("--distance", choices=sorted(DISTANCES), default="cosine", help="distance kind (default %(default)s)")


def _add_patch_flags(p):
    p.add_argument("--patch", type=int, default=5, help="patch side length (default %(default)s)")
    p.add_argument("--stride", type=int, default=2, help="patch stride (default %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cxloss", description="Contextual similarity and loss tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compare", help="compare two images (PNG) or feature tensors (CXT)")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--loss", choices=COMPARE_LOSSES, default="cx")
    _add_cx_flags(p)
    _add_patch_flags(p)
    p.add_argument("--match-cardinality", action="store_true", help="subsample the larger set to the smaller size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("expectation", help="Monte-Carlo expectation grid over (mu, sigma)")
    p.add_argument("--measure", choices=experiments.MEASURES, default="cx")
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--mu-min", type=float, default=0.0)
    p.add_argument("--mu-max", type=float, default=10.0)
    p.add_argument("--mu-step", type=float, default=1.0)
    p.add_argument("--sigma-min", type=float, default=0.0)
    p.add_argument("--sigma-max", type=float, default=10.0)
    p.add_argument("--sigma-step", type=float, default=1.0)
    p.add_argument("--h", type=float, default=0.1)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="expectation.csv")
    p.set_defaults(func=cmd_expectation)

    p = sub.add_parser("denoise", help="denoise a crop against misaligned clean targets")
    p.add_argument("--image", default=None, help="source PNG (default: bundled 128x128 test image)")
    p.add_argument("--crop", type=int, default=64)
    p.add_argument("--targets", type=int, default=8)
    p.add_argument("--max-shift", type=int, default=10)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--losses", default="cx,l1")
    p.add_argument("--iters", type=int, default=400)
    p.add_argument("--step", type=float, default=None, help="step size for every loss (default: per-loss)")
    _add_cx_flags(p)
    _add_patch_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", default=None, help="write input, targets, results and ground truth PNGs here")
    p.add_argument("--report", default=None, help="also write the report to this file")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("gradcheck", help="analytic vs finite-difference gradient")
    _add_cx_flags(p)
    p.add_argument("--points", type=int, default=8)
    p.add_argument("--dim", type=int, default=5)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("tensor-convert", help="convert between PNG and CXT")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_tensor_convert)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "image", "") is None:
        args.image = default_image_path()
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except Exception as exc:  # noqa: BLE001
        sys.stderr.write(f"internal error: {type(exc).__name__}: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
