"""Command-line front end.

Exit codes: 0 success, 2 bad configuration or usage, 3 unreadable input
(GIF, image or model parse failure), 4 processing failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import ditherdetect, gif, imageio, pipeline
from .errors import ConfigError, GifError, ImageFormatError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_PROCESSING = 4

log = logging.getLogger("gifrestore")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file with PipelineConfig fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--palette-size", type=int, dest="palette_size")
    p.add_argument("--dither", choices=pipeline.DITHER_CHOICES)
    p.add_argument("--model-path", dest="model_path")
    p.add_argument("--interp-factor", type=int, dest="interp_factor")
    p.add_argument("--output-format", choices=pipeline.FORMATS, dest="output_format")
    p.add_argument("--delay", type=int, help="frame delay in centiseconds")
    p.add_argument("--workers", type=int)
    p.add_argument("--dump-flow", action="store_true", default=None, dest="dump_flow")
    g = p.add_argument_group("dequantization")
    g.add_argument("--unfold-steps", type=int, dest="unfold_steps")
    g.add_argument("--operator", choices=("smoothing", "residual"))
    g.add_argument("--constraint", choices=("hard", "off"))
    g.add_argument("--step-size", type=float, dest="step_size")
    g.add_argument("--inner-iterations", type=int, dest="inner_iterations")
    g.add_argument("--smoothness-weight", type=float, dest="smoothness_weight")
    g = p.add_argument_group("optical flow")
    g.add_argument("--flow-levels", type=int, dest="levels")
    g.add_argument("--flow-alpha", type=float, dest="alpha")
    g.add_argument("--flow-iterations", type=int, dest="iterations")
    g.add_argument("--sigma-w", type=float, dest="sigma_w")


_TOP = ("seed", "palette_size", "dither", "model_path", "interp_factor", "output_format",
        "delay", "workers", "dump_flow")
_DEQUANT = ("unfold_steps", "operator", "constraint", "step_size", "inner_iterations",
            "smoothness_weight")
_FLOW = ("levels", "alpha", "iterations", "sigma_w")


def build_config(args: argparse.Namespace) -> pipeline.PipelineConfig:
    """JSON file first, then command-line flags on top."""
    base = pipeline.PipelineConfig.load(args.config).to_dict() if args.config else \
        pipeline.PipelineConfig().to_dict()
    for name in _TOP:
        if getattr(args, name, None) is not None:
            base[name] = getattr(args, name)
    for section, names in (("dequant", _DEQUANT), ("flow", _FLOW)):
        for name in names:
            if getattr(args, name, None) is not None:
                base[section][name] = getattr(args, name)
    cfg = pipeline.PipelineConfig.from_dict(base)
    cfg.validate()
    return cfg


def cmd_encode(args, cfg) -> int:
    frames = imageio.read_frames(args.frames_dir)
    if not frames:
        raise ValueError(f"no frames found in {args.frames_dir}")
    palette = pipeline.clip_palette(frames, cfg.palette_size, cfg.palette_stride)
    doc = pipeline.make_gif(frames, palette, dithered=cfg.dither == "on", delay=cfg.delay)
    Path(args.output).write_bytes(gif.encode_gif(doc))
    print(f"wrote {args.output}: {len(frames)} frames, {len(palette)} colors")
    return EXIT_OK


def cmd_dequant(args, cfg) -> int:
    cfg.interp_factor = 1
    result = pipeline.gif_to_video(args.gif, args.out_dir, cfg)
    print(f"wrote {len(result.frames)} frames to {args.out_dir} ({result.mode})")
    return EXIT_OK


def cmd_interp(args, cfg) -> int:
    result = pipeline.gif_to_video(args.gif, args.out_dir, cfg)
    print(f"wrote {len(result.frames)} frames to {args.out_dir} ({result.mode}, x{cfg.interp_factor})")
    return EXIT_OK


def cmd_classify(args, cfg) -> int:
    if args.fit:
        if not args.model:
            raise ConfigError("--fit needs --model to say where the classifier is written")
        model = pipeline.fit_router(args.fit, seed=cfg.seed)
        model.save(args.model)
        print(f"wrote classifier to {args.model}")
        if not args.gif:
            return EXIT_OK
    model_path = args.model or cfg.model_path
    if not model_path:
        raise ConfigError("classify needs --model (or --fit)")
    if not args.gif:
        raise ConfigError("nothing to classify: pass a GIF path")
    if not Path(model_path).is_file():
        raise ConfigError(f"classifier model not found: {model_path}")
    model = ditherdetect.LinearClassifier.load(model_path)
    frames = gif.composite_frames(gif.decode_gif(Path(args.gif).read_bytes()))
    print(ditherdetect.classify_clip(frames, model))
    return EXIT_OK


def cmd_synth(args, cfg) -> int:
    manifest = pipeline.synth_pairs(args.frames_dir, args.out_dir, cfg)
    print(f"synthesized {len(manifest['clips'])} clip(s) into {args.out_dir}")
    return EXIT_OK


def cmd_eval(args, cfg) -> int:
    records = pipeline.eval_sweep(args.dataset, cfg, args.factors)
    summary = pipeline.summarize(records)
    if args.json:
        Path(args.json).write_text(json.dumps({"summary": summary,
                                               "records": [r.to_dict() for r in records]},
                                              indent=2) + "\n")
    if args.csv:
        Path(args.csv).write_text(pipeline.records_to_csv(records))
    print("factor  gif_psnr  gif_ssim  restored_psnr  restored_ssim")
    for row in summary:
        print(f"{row['factor']:>6}  {row['gif_psnr']:8.2f}  {row['gif_ssim']:8.4f}  "
              f"{row['restored_psnr']:13.2f}  {row['restored_ssim']:13.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gifrestore", description="GIF creation, restoration and evaluation")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="quantize a frame directory into a GIF")
    p.add_argument("frames_dir", type=Path)
    p.add_argument("output", type=Path)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("dequant", help="restore GIF frames without interpolation")
    p.add_argument("gif", type=Path)
    p.add_argument("out_dir", type=Path)
    p.set_defaults(func=cmd_dequant)

    p = sub.add_parser("interp", help="restore GIF frames and interpolate in time")
    p.add_argument("gif", type=Path)
    p.add_argument("out_dir", type=Path)
    p.set_defaults(func=cmd_interp)

    p = sub.add_parser("classify", help="label a GIF as dithered or non-dithered")
    p.add_argument("gif", type=Path, nargs="?")
    p.add_argument("--model", type=Path)
    p.add_argument("--fit", type=Path, metavar="DATASET", help="train on a synthesized dataset first")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("synth", help="build dithered/non-dithered GIF pairs from frame clips")
    p.add_argument("frames_dir", type=Path)
    p.add_argument("out_dir", type=Path)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="temporal subsampling sweep over a synthesized dataset")
    p.add_argument("dataset", type=Path)
    p.add_argument("--factors", type=int, nargs="*", default=[1, 2, 4, 8])
    p.add_argument("--json", type=Path)
    p.add_argument("--csv", type=Path)
    p.set_defaults(func=cmd_eval)

    for p in sub.choices.values():
        _add_config_flags(p)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GifError, ImageFormatError, json.JSONDecodeError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ValueError, OSError) as exc:
        print(f"processing error: {exc}", file=sys.stderr)
        return EXIT_PROCESSING


if __name__ == "__main__":
    sys.exit(main())
