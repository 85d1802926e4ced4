"""Batch command line: render, focalstack, synth, eval, robustness.

Exit codes: 0 success, 1 usage error (bad flags, malformed values, invalid
config schema), 2 runtime failure (missing files, mismatched shapes,
decode errors).  Reports and images are written atomically, and every
subcommand is deterministic given its flags and seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace

import cv2
import numpy as np

from .imgio import (DELTA, _atomic_write_bytes, load_disparity, load_image,
                    save_image)
from .lens import LensParams, defocus_map, focus_from_region
from .metrics import evaluate_pairs, robustness_sweep, write_sweep_csv
from .render import RenderConfig, focal_stack, render_from_disparity, set_threads
from .synth import SynthConfig, generate_dataset


class _UsageError(Exception):
    """Raised for bad invocations; mapped to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would call sys.exit(2); we want 1
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _add_threads(parser: argparse.ArgumentParser, top: bool) -> None:
    parser.add_argument(
        "--threads", type=int,
        default=0 if top else argparse.SUPPRESS,
        help="worker threads for rendering; 0 means all available")


def build_parser() -> _Parser:
    parser = _Parser(prog="lensblur",
                     description="physically based lens-blur rendering toolkit")
    _add_threads(parser, top=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("render", help="blur one image from its disparity map")
    p.add_argument("--image", required=True, help="all-in-focus input PNG")
    p.add_argument("--disparity", required=True, help="disparity PNG or PFM")
    p.add_argument("--focus", required=True,
                   help="focus disparity, or auto-bg/auto-fg with --mask")
    p.add_argument("--aperture", type=float, required=True,
                   help="CoC pixels per unit disparity difference")
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--transfer", choices=("srgb", "linear"), default="srgb",
                   help="transfer curve for reading and writing images")
    p.add_argument("--mask", help="binary PNG marking foreground, for auto-* focus")
    p.add_argument("--invert", action="store_true",
                   help="input is depth-like (larger = farther); use 1 - value")
    _add_threads(p, top=False)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("focalstack", help="render a sweep of focus settings")
    p.add_argument("--image", required=True)
    p.add_argument("--disparity", required=True)
    p.add_argument("--aperture", type=float, required=True)
    p.add_argument("--steps", type=int, required=True,
                   help="number of focus settings, evenly spaced")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--invert", action="store_true",
                   help="input is depth-like (larger = farther); use 1 - value")
    _add_threads(p, top=False)
    p.set_defaults(func=cmd_focalstack)

    p = sub.add_parser("synth", help="generate a synthetic paired dataset")
    p.add_argument("--config", required=True, help="JSON recipe file")
    p.add_argument("--out", required=True, help="dataset output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    _add_threads(p, top=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred", required=True, help="directory of predicted PNGs")
    p.add_argument("--gt", required=True, help="directory of reference PNGs")
    p.add_argument("--aif", default=None,
                   help="directory of all-in-focus PNGs; enables edge loss")
    p.add_argument("--align-exposure", action="store_true",
                   help="scale each prediction to the reference mean first")
    p.add_argument("--report", required=True, help="output JSON report path")
    _add_threads(p, top=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("robustness", help="sweep disparity degradations over a dataset")
    p.add_argument("--manifest", required=True, help="dataset manifest.json")
    p.add_argument("--radii", default="0,1,2,3,4,5",
                   help="comma-separated non-negative degradation radii")
    p.add_argument("--report", required=True, help="output CSV path")
    _add_threads(p, top=False)
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("attn", help="debug: run the attention ops on a random instance")
    p.add_argument("--n", type=int, default=32, help="token count")
    p.add_argument("--d-key", type=int, default=4, help="query/key width")
    p.add_argument("--d-val", type=int, default=3, help="value width")
    p.add_argument("--grid", type=int, default=32, help="disparity field side length")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--focus", type=float, default=0.5, help="focus disparity")
    p.add_argument("--aperture", type=float, default=16.0)
    p.add_argument("--pixel-scale", type=float, default=8.0,
                   help="full-resolution pixels per token position unit")
    p.add_argument("--out", default=None, help="optional JSON diagnostics path")
    _add_threads(p, top=False)
    p.set_defaults(func=cmd_attn)

    return parser


def _make_dirs_for(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def _load_inputs(args) -> tuple[np.ndarray, np.ndarray]:
    transfer = getattr(args, "transfer", "srgb")
    image = load_image(args.image, transfer)
    disparity = load_disparity(args.disparity)
    if args.invert:
        disparity = np.clip(1.0 - disparity, DELTA, 1.0 - DELTA)
    return image, disparity


def _resolve_focus(args, disparity: np.ndarray) -> float:
    text = args.focus
    if text in ("auto-bg", "auto-fg"):
        if not args.mask:
            raise _UsageError(f"--focus {text} requires --mask")
        mask = load_image(args.mask, "linear")[:, :, 0] > 0.5
        if mask.shape != disparity.shape:
            raise ValueError(
                f"mask shape {mask.shape} does not match disparity {disparity.shape}")
        region = mask if text == "auto-fg" else ~mask
        return focus_from_region(disparity, region)
    try:
        return float(text)
    except ValueError:
        raise _UsageError(
            f"--focus must be a number, 'auto-bg', or 'auto-fg', got {text!r}") from None


def _figure_path(report_path: str) -> str:
    base, ext = os.path.splitext(report_path)
    candidate = base + ".png"
    return candidate if candidate != report_path else report_path + ".png"


def cmd_render(args) -> int:
    image, disparity = _load_inputs(args)
    focus = _resolve_focus(args, disparity)
    lens = LensParams(focus, args.aperture)
    t0 = time.perf_counter()
    out = render_from_disparity(image, disparity, lens, RenderConfig())
    wall = time.perf_counter() - t0
    _make_dirs_for(args.out)
    save_image(out, args.out, transfer=args.transfer)
    h, w = image.shape[:2]
    rmax = float(defocus_map(disparity, lens).max())
    print(f"rendered {w}x{h} focus={focus:.6g} aperture={args.aperture:g} "
          f"max_radius={rmax:.2f}px wall={wall:.2f}s -> {args.out}")
    return 0


def cmd_focalstack(args) -> int:
    if args.steps < 1:
        raise _UsageError(f"--steps must be >= 1, got {args.steps}")
    image, disparity = _load_inputs(args)
    if args.steps == 1:
        focuses = [0.5]
    else:
        focuses = [float(f) for f in np.linspace(DELTA, 1.0 - DELTA, args.steps)]
    lens = LensParams(0.5, args.aperture)
    t0 = time.perf_counter()
    renders = focal_stack(image, disparity, lens, focuses, RenderConfig())
    wall = time.perf_counter() - t0
    os.makedirs(args.out, exist_ok=True)
    for focus, img in zip(focuses, renders):
        save_image(img, os.path.join(args.out, f"focus_{focus:.6f}.png"))
    h, w = image.shape[:2]
    print(f"rendered {len(focuses)} focal steps at {w}x{h} "
          f"aperture={args.aperture:g} wall={wall:.2f}s -> {args.out}")
    return 0


def cmd_synth(args) -> int:
    try:
        config = SynthConfig.from_json(args.config)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    t0 = time.perf_counter()
    records, skipped = generate_dataset(config, args.out)
    wall = time.perf_counter() - t0
    manifest = os.path.join(args.out, "manifest.json")
    print(f"synthesized {len(records)} scenes, skipped {len(skipped)}, "
          f"wall={wall:.2f}s -> {manifest}")
    for item in skipped:
        print(f"  skipped scene {item['scene_index']}: {item['reason']}")
    return 0


def _png_names(directory: str) -> set[str]:
    return {n for n in os.listdir(directory) if n.lower().endswith(".png")}


def cmd_eval(args) -> int:
    pred_names = _png_names(args.pred)
    gt_names = _png_names(args.gt)
    matched = sorted(pred_names & gt_names)
    only_pred = sorted(pred_names - gt_names)
    only_gt = sorted(gt_names - pred_names)
    if only_pred or only_gt:
        raise ValueError(
            "filenames do not match between --pred and --gt; "
            f"only in pred: {only_pred}; only in gt: {only_gt}")
    if not matched:
        raise ValueError(f"no PNG pairs found under {args.pred} and {args.gt}")
    if args.aif is not None:
        missing = [n for n in matched
                   if not os.path.isfile(os.path.join(args.aif, n))]
        if missing:
            raise ValueError(f"--aif directory lacks matching files: {missing}")

    pairs = []
    for name in matched:
        pred = load_image(os.path.join(args.pred, name))
        gt = load_image(os.path.join(args.gt, name))
        aif = None
        if args.aif is not None:
            aif = load_image(os.path.join(args.aif, name))
        pairs.append((name, pred, gt, aif))
    report = evaluate_pairs(pairs, align_exposure=args.align_exposure)

    payload = {
        "pred": args.pred,
        "gt": args.gt,
        "aif": args.aif,
        "align_exposure": bool(args.align_exposure),
        **report.to_dict(),
    }
    _make_dirs_for(args.report)
    _atomic_write_bytes(args.report,
                        (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode())
    from .figures import report_figure  # deferred: pulls in matplotlib
    fig_path = _figure_path(args.report)
    report_figure(report, fig_path)
    agg = report.aggregate()
    print(f"evaluated {len(pairs)} image pairs -> {args.report} (figure {fig_path})")
    print(f"  psnr_db median {agg['psnr_db']['median']:.3f}  "
          f"ssim median {agg['ssim']['median']:.4f}")
    return 0


def _parse_radii(text: str) -> list[int]:
    try:
        radii = [int(tok.strip()) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise _UsageError(
            f"malformed --radii {text!r}: expected comma-separated integers") from None
    if not radii or any(r < 0 for r in radii):
        raise _UsageError(
            f"--radii needs at least one non-negative integer, got {text!r}")
    return radii


def cmd_robustness(args) -> int:
    radii = _parse_radii(args.radii)
    t0 = time.perf_counter()
    rows = robustness_sweep(args.manifest, radii)
    wall = time.perf_counter() - t0
    _make_dirs_for(args.report)
    write_sweep_csv(rows, args.report)
    from .figures import robustness_figure  # deferred: pulls in matplotlib
    fig_path = _figure_path(args.report)
    robustness_figure(rows, fig_path)
    print(f"swept radii {radii} ({len(rows)} rows) wall={wall:.2f}s "
          f"-> {args.report} (figure {fig_path})")
    return 0


def cmd_attn(args) -> int:
    from .attention import (AttentionBatch, GeometryContext, OcclusionConfig,
                            _visibility_matrix, coc_mask, lens_attention,
                            masked_softmax_query, similarity)

    for name in ("n", "d_key", "d_val", "grid"):
        if getattr(args, name) < 1:
            raise _UsageError(f"--{name.replace('_', '-')} must be >= 1")
    rng = np.random.default_rng(args.seed)
    side = args.grid
    field = np.clip(rng.uniform(0.1, 0.9, (side, side)), DELTA, 1.0 - DELTA)
    positions = np.stack([rng.uniform(0, side - 1, args.n),
                          rng.uniform(0, side - 1, args.n)], axis=1)
    disparities = np.clip(rng.uniform(0.1, 0.9, args.n), DELTA, 1.0 - DELTA)
    batch = AttentionBatch(rng.normal(size=(args.n, args.d_key)),
                           rng.normal(size=(args.n, args.d_key)),
                           rng.normal(size=(args.n, args.d_val)))
    geom = GeometryContext(positions, disparities, field,
                           pixel_scale=args.pixel_scale)
    lens = LensParams(args.focus, args.aperture)

    gate = coc_mask(geom, lens)
    weights = masked_softmax_query(similarity(batch), gate)
    col_sums = weights.sum(axis=0)
    admissible = gate.sum(axis=0) > 0.0
    vis = _visibility_matrix(geom, OcclusionConfig())
    out = lens_attention(batch, geom, lens)

    diag = {
        "n": args.n,
        "seed": args.seed,
        "gate_mean": float(gate.mean()),
        "admissible_columns": int(admissible.sum()),
        "fully_masked_columns": int((~admissible).sum()),
        "column_sum_max_abs_dev": float(np.abs(col_sums[admissible] - 1.0).max())
        if admissible.any() else 0.0,
        "masked_column_energy": float(np.abs(col_sums[~admissible]).max())
        if (~admissible).any() else 0.0,
        "visibility_mean": float(vis.mean()),
        "output_rms": float(np.sqrt(np.mean(out ** 2))),
        "value_rms": float(np.sqrt(np.mean(batch.v ** 2))),
    }
    for key, value in diag.items():
        print(f"{key}: {value}")
    if args.out is not None:
        _make_dirs_for(args.out)
        _atomic_write_bytes(args.out,
                            (json.dumps(diag, indent=2, sort_keys=True) + "\n").encode())
        print(f"wrote {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    try:
        set_threads(getattr(args, "threads", 0))
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, cv2.error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
