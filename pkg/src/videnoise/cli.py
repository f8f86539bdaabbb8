"""Command-line interface: denoise, add-noise, psnr, synth.

Exit codes: 0 on success, 1 on runtime failure (I/O, numerics), 2 on usage
errors. Diagnostics (progress, the effective configuration) go to stderr;
data streams and machine-readable output stay clean.
"""

import argparse
import os
import sys

import numpy as np

from . import pipeline, synth, videoio
from .errors import ConfigError, VidenoiseError

USAGE_EXIT = 2
RUNTIME_EXIT = 1


def _add_io_arguments(parser, needs_output=True):
    parser.add_argument("--input", required=True, help="input video path")
    parser.add_argument(
        "--format",
        choices=("y4m", "pgm", "raw"),
        help="input container (default: inferred from extension)",
    )
    parser.add_argument("--width", type=int, help="frame width (raw input only)")
    parser.add_argument("--height", type=int, help="frame height (raw input only)")
    if needs_output:
        parser.add_argument("--output", required=True, help="output video path")
        parser.add_argument(
            "--output-format",
            choices=("y4m", "pgm", "raw"),
            help="output container (default: inferred from extension)",
        )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="videnoise",
        description="Streaming grayscale video denoiser with an online-learned "
        "3D sparsifying transform.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    den = sub.add_parser("denoise", help="denoise a noisy video")
    _add_io_arguments(den)
    den.add_argument("--sigma", type=float, required=True, help="noise standard deviation (0-255 scale)")
    den.add_argument("--mode", choices=pipeline.MODES, default="a1")
    den.add_argument("--metrics-csv", help="write frame-wise PSNR CSV (needs --ref)")
    den.add_argument("--ref", help="clean reference video for PSNR reporting")
    den.add_argument("--n1", type=int, default=8, help="patch rows")
    den.add_argument("--n2", type=int, default=8, help="patch cols")
    den.add_argument("--m", type=int, default=9, help="temporal depth / buffer length")
    den.add_argument("--alpha0", type=float, default=1.9, help="threshold constant")
    den.add_argument("--lambda0", type=float, default=1e-2, help="regularizer constant")
    den.add_argument("--minibatch", type=int, help="patches per mini-batch (default 15*m*n1*n2)")
    den.add_argument("--rho", type=float, help="forgetting factor (default from sigma)")
    den.add_argument("--passes", type=int, help="denoising passes (default from sigma)")
    den.add_argument("--h1", type=int, default=21, help="search window rows (a2)")
    den.add_argument("--h2", type=int, default=21, help="search window cols (a2)")
    den.add_argument("--stride", type=int, default=1, help="spatial patch stride")
    den.add_argument("--no-preclean", action="store_true", help="match on the noisy buffer (a2)")
    den.add_argument(
        "--bm-weighting", choices=("sparsity", "uniform"), default="sparsity",
        help="aggregation weighting in a2 mode",
    )
    den.add_argument("--carry-learner", action="store_true", help="keep the learner across passes")
    den.add_argument("--alternations", type=int, default=1, help="code/update alternations per batch")
    den.add_argument("--seed", type=int, default=0, help="seed for any stochastic component")
    den.add_argument(
        "--workers", type=int, default=None,
        help="worker threads for block matching (or env VIDENOISE_WORKERS)",
    )

    noise = sub.add_parser("add-noise", help="add seeded Gaussian noise")
    _add_io_arguments(noise)
    noise.add_argument("--sigma", type=float, required=True)
    noise.add_argument("--seed", type=int, default=0)

    quality = sub.add_parser("psnr", help="PSNR between two videos")
    quality.add_argument("--ref", required=True, help="reference video")
    quality.add_argument("--test", required=True, help="video under test")
    quality.add_argument("--format", choices=("y4m", "pgm", "raw"))
    quality.add_argument("--width", type=int)
    quality.add_argument("--height", type=int)
    quality.add_argument("--csv", help="write the frame-wise CSV here")

    clip = sub.add_parser("synth", help="generate a deterministic test clip")
    clip.add_argument("--kind", choices=synth.KINDS, required=True)
    clip.add_argument("--size", default="64x64", help="WxH, e.g. 64x64")
    clip.add_argument("--frames", type=int, default=40)
    clip.add_argument("--output", required=True)
    clip.add_argument("--output-format", choices=("y4m", "pgm", "raw"))

    return parser


def _read(path, fmt, width, height):
    if not os.path.exists(path) and (fmt or videoio.detect_format(path)) != "pgm":
        raise VidenoiseError(f"input not found: {path}")
    return videoio.read_video(path, fmt=fmt, width=width, height=height)


def _cmd_denoise(args):
    if (args.metrics_csv is None) != (args.ref is None):
        print("error: --ref and --metrics-csv must be given together", file=sys.stderr)
        return USAGE_EXIT
    if args.sigma <= 0:
        print("error: --sigma must be positive", file=sys.stderr)
        return USAGE_EXIT
    workers = args.workers
    if workers is None:
        workers = int(os.environ.get("VIDENOISE_WORKERS", "1"))
    try:
        config = pipeline.DenoiseConfig(
            sigma=args.sigma,
            mode=args.mode,
            n1=args.n1,
            n2=args.n2,
            m=args.m,
            alpha0=args.alpha0,
            lambda0=args.lambda0,
            minibatch=args.minibatch,
            rho=args.rho,
            passes=args.passes,
            h1=args.h1,
            h2=args.h2,
            spatial_stride=args.stride,
            precleaning=not args.no_preclean,
            bm_weighting=args.bm_weighting,
            reset_learner_per_pass=not args.carry_learner,
            alternations=args.alternations,
            seed=args.seed,
            workers=workers,
        ).resolved()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    print(config.echo(), file=sys.stderr)
    video = _read(args.input, args.format, args.width, args.height)
    print(
        f"denoising {video.frame_count} frames of {video.width}x{video.height} "
        f"in mode {config.mode} ({config.passes} pass(es))",
        file=sys.stderr,
    )
    denoised = pipeline.run_multipass(video, config)
    videoio.write_video(denoised, args.output, fmt=args.output_format)
    if args.ref is not None:
        reference = _read(args.ref, args.format, args.width, args.height)
        video_db, frame_db = videoio.psnr(reference, denoised)
        videoio.write_psnr_csv(args.metrics_csv, frame_db, video_db)
        print(f"video psnr: {videoio._format_db(video_db)} dB", file=sys.stderr)
    return 0


def _cmd_add_noise(args):
    if args.sigma < 0:
        print("error: --sigma must be non-negative", file=sys.stderr)
        return USAGE_EXIT
    video = _read(args.input, args.format, args.width, args.height)
    noisy = videoio.add_gaussian_noise(video, args.sigma, args.seed)
    videoio.write_video(noisy, args.output, fmt=args.output_format)
    return 0


def _cmd_psnr(args):
    reference = _read(args.ref, args.format, args.width, args.height)
    test = _read(args.test, args.format, args.width, args.height)
    video_db, frame_db = videoio.psnr(reference, test)
    print(videoio._format_db(video_db))
    if args.csv:
        videoio.write_psnr_csv(args.csv, frame_db, video_db)
    return 0


def _cmd_synth(args):
    try:
        width, height = (int(part) for part in args.size.lower().split("x"))
    except ValueError:
        print(f"error: --size must look like 64x64, got {args.size!r}", file=sys.stderr)
        return USAGE_EXIT
    if width < 1 or height < 1 or args.frames < 1:
        print("error: clip dimensions must be positive", file=sys.stderr)
        return USAGE_EXIT
    video = synth.synthesize_clip(args.kind, width, height, args.frames)
    videoio.write_video(video, args.output, fmt=args.output_format)
    return 0


_COMMANDS = {
    "denoise": _cmd_denoise,
    "add-noise": _cmd_add_noise,
    "psnr": _cmd_psnr,
    "synth": _cmd_synth,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (VidenoiseError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT


if __name__ == "__main__":
    sys.exit(main())
