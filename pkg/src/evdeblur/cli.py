"""Command line entry point: ``evdeblur <subcommand> ...``.

Subcommands
-----------
simulate   synthetic fixture -> IMF1 frames + blur, EVT1 events, FLO1 flows
deblur     IMF1/PGM blur + EVT1 events -> T IMF1 frames
guidance   EVT1 events + FLO1 flow (+ DEF1 params) -> IMF1 guidance map
gradcheck  finite-difference check of the directional filter gradients
eval       per-frame PSNR/SSIM of a reconstruction directory vs ground truth
"""

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .def_filter import DEFAULT_K, DEFAULT_SIGMA, DEFAULT_STRIDE, DEFAULT_WINDOW, DefParams, directional_filter
from .events import DEFAULT_CHUNKS, bin_stacked_frames, normalize_time
from .gradcheck import run_gradcheck
from .metrics import evaluate
from .recon import estimate_tau, sequential_deblur
from .simulator import PATTERNS, SimConfig, make_fixture

FORMATS_HELP = """\
file formats (little-endian binaries, '.' decimal separator in text):
  EVT1  text: 'EVT1 <width> <height> <t_begin> <t_end> <count>' then '<t> <x> <y> <p>' lines
  IMF1  'IMF1', uint32 width, uint32 height, float32 pixels row-major
  PGM   P5/P2 greyscale, read as value/maxval
  FLO1  'FLO1', uint32 width, uint32 height, float32 (u, v) pairs row-major
  DEF1  text: 'DEF1 <w> <h> <k> <lambda> <sigma> <L>', H*W centers, then 2k+1 coefficient planes
"""


class CliError(Exception):
    pass


def _positive_int(name, minimum=1):
    def parse(text):
        try:
            val = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be an integer, got {text!r}") from None
        if val < minimum:
            raise argparse.ArgumentTypeError(f"{name} must be >= {minimum}, got {val}")
        return val
    return parse


def _positive_float(name):
    def parse(text):
        try:
            val = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number, got {text!r}") from None
        if not val > 0 or not math.isfinite(val):
            raise argparse.ArgumentTypeError(f"{name} must be > 0, got {text}")
        return val
    return parse


def _float_list(name):
    def parse(text):
        try:
            vals = [float(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be comma-separated numbers, got {text!r}") from None
        if not vals:
            raise argparse.ArgumentTypeError(f"{name} must not be empty")
        return vals
    return parse


def _velocity(text):
    parts = _float_list("velocity")(text)
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"velocity must be 'vx,vy', got {text!r}")
    return tuple(parts)


def _write_manifest(path, args, extra=None):
    items = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    items.update(extra or {})
    lines = [f"{k} = {v}" for k, v in items.items()]
    io._atomic_write(path, ("\n".join(lines) + "\n").encode("ascii"))
    return path


def _announce(path):
    print(f"wrote {path}")


def _ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {path}: {exc}") from None


def cmd_simulate(args):
    cfg = SimConfig(args.tau, args.eps, args.substeps)
    frames, blur, events, flows = make_fixture(args.pattern, args.size, args.T, args.velocity, cfg, seed=args.seed)
    out = Path(args.out_dir)
    _ensure_dir(out)
    width = len(str(args.T))
    for i, frame in enumerate(frames, start=1):
        path = out / f"frame_{i:0{width}d}.imf"
        io.write_imf(path, frame)
        _announce(path)
    io.write_imf(out / "blur.imf", blur)
    _announce(out / "blur.imf")
    io.write_events(out / "events.evt", events)
    _announce(out / "events.evt")
    for i, flow in enumerate(flows, start=1):
        path = out / f"flow_{i:0{width}d}.flo"
        io.write_flow(path, flow)
        _announce(path)
    _announce(_write_manifest(out / "run.txt", args, {"events": len(events)}))
    return 0


def _load_events(path, T):
    events = io.read_events(path)
    if events.t_begin != 1.0 or events.t_end != float(T):
        events = normalize_time(events, T)
    return events


def cmd_deblur(args):
    blur = io.read_image(args.blur)
    events = _load_events(args.events, args.frames)
    if blur.shape != events.shape:
        raise CliError(f"{args.blur}: image size {blur.shape} does not match events {events.shape} in {args.events}")
    tau = args.tau
    if args.estimate_tau:
        tau = estimate_tau(blur, events, args.frames, args.estimate_tau)
        print(f"estimated tau {tau!r}")
    frames = sequential_deblur(blur, events, tau, args.frames)
    out = Path(args.out_dir)
    _ensure_dir(out)
    width = len(str(args.frames))
    for i, frame in enumerate(frames, start=1):
        path = out / f"frame_{i:0{width}d}.imf"
        io.write_imf(path, np.clip(frame, 0.0, 1.0))
        _announce(path)
    _announce(_write_manifest(out / "run.txt", args, {"tau_used": repr(float(tau))}))
    return 0


def cmd_guidance(args):
    events = io.read_events(args.events)
    flow = io.read_flow(args.flow).astype(np.float64)
    a, b = float(args.interval), float(args.interval) + 1.0
    if a < events.t_begin or b > events.t_end:
        raise CliError(f"{args.events}: interval [{a}, {b}) outside exposure [{events.t_begin}, {events.t_end}]")
    if flow.shape[1:] != events.shape:
        raise CliError(f"{args.flow}: flow size {flow.shape[1:]} does not match events {events.shape}")
    if args.params:
        params = io.read_def(args.params)
        if params.shape != events.shape:
            raise CliError(f"{args.params}: parameter size {params.shape} does not match events {events.shape}")
    else:
        params = DefParams.default(events.shape, a, k=args.k, stride=args.stride, sigma=args.sigma, window=args.L)
    volume = bin_stacked_frames(events, [(a, b)], args.chunks)
    guidance = directional_filter(volume, flow, params, (a, b), n_jobs=args.threads)
    out = Path(args.out)
    _ensure_dir(out.parent if str(out.parent) else Path("."))
    io.write_imf(out, guidance)
    _announce(out)
    _announce(_write_manifest(out.with_name(out.name + ".run.txt"), args))
    return 0


def cmd_gradcheck(args):
    report = run_gradcheck(args.configs, size=args.size, chunks=args.chunks, k=args.k, h=args.h, seed=args.seed)
    for line in report.lines():
        print(line)
    return 0 if report.passed else 1


def _frame_files(directory):
    d = Path(directory)
    if not d.is_dir():
        raise CliError(f"{directory}: not a directory")
    files = sorted(p for p in d.iterdir() if p.name.startswith("frame_") and p.suffix in (".imf", ".pgm"))
    if not files:
        raise CliError(f"{directory}: no frame_* images found")
    return files


def cmd_eval(args):
    recon = _frame_files(args.recon_dir)
    truth = _frame_files(args.truth_dir)
    if len(recon) != len(truth):
        raise CliError(f"{args.recon_dir} has {len(recon)} frames but {args.truth_dir} has {len(truth)}")
    rec = np.stack([io.read_image(p) for p in recon])
    ref = np.stack([io.read_image(p) for p in truth])
    report = evaluate(rec, ref, peak=args.peak)
    for line in report.lines():
        print(line)
    if args.min_psnr is not None and report.mean_psnr < args.min_psnr:
        print(f"mean psnr below threshold {args.min_psnr}", file=sys.stderr)
        return 1
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="evdeblur",
        description="Event-based motion deblurring toolkit.",
        epilog=FORMATS_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    threads = dict(type=_positive_int("threads"), default=os.cpu_count() or 1,
                   help="worker threads (default: hardware count); results do not depend on it")

    p = sub.add_parser("simulate", help="generate a synthetic fixture")
    p.add_argument("pattern", choices=PATTERNS)
    p.add_argument("size", type=_positive_int("size", 16))
    p.add_argument("T", type=_positive_int("T", 2))
    p.add_argument("velocity", type=_velocity, help="vx,vy (pixels per frame step)")
    p.add_argument("tau", type=_positive_float("tau"))
    p.add_argument("out_dir")
    p.add_argument("--substeps", type=_positive_int("substeps"), default=16)
    p.add_argument("--eps", type=_positive_float("eps"), default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("deblur", help="reconstruct sharp frames from blur + events")
    p.add_argument("blur", help="IMF1 or PGM blurred image")
    p.add_argument("events", help="EVT1 event file")
    p.add_argument("out_dir")
    p.add_argument("--tau", type=_positive_float("tau"), default=0.1)
    p.add_argument("--frames", "-T", type=_positive_int("frames", 2), default=7)
    p.add_argument("--estimate-tau", type=_float_list("estimate-tau"), metavar="GRID",
                   help="comma-separated candidate thresholds; overrides --tau")
    p.set_defaults(func=cmd_deblur)

    p = sub.add_parser("guidance", help="directional event filtering of one interval")
    p.add_argument("events")
    p.add_argument("flow")
    p.add_argument("out", help="output IMF1 path")
    p.add_argument("--params", help="DEF1 parameter file (default: centered c, uniform alpha)")
    p.add_argument("--interval", type=float, default=1.0, help="interval start i of [i, i+1)")
    p.add_argument("--chunks", type=_positive_int("chunks"), default=DEFAULT_CHUNKS)
    p.add_argument("--k", type=_positive_int("k"), default=DEFAULT_K)
    p.add_argument("--lambda", dest="stride", type=_positive_float("lambda"), default=DEFAULT_STRIDE)
    p.add_argument("--sigma", type=_positive_float("sigma"), default=DEFAULT_SIGMA)
    p.add_argument("--L", type=_positive_float("L"), default=DEFAULT_WINDOW)
    p.add_argument("--threads", **threads)
    p.set_defaults(func=cmd_guidance)

    p = sub.add_parser("gradcheck", help="verify DEF gradients by central differences")
    p.add_argument("--configs", type=_positive_int("configs"), default=100)
    p.add_argument("--size", type=_positive_int("size"), default=8)
    p.add_argument("--chunks", type=_positive_int("chunks"), default=DEFAULT_CHUNKS)
    p.add_argument("--k", type=_positive_int("k"), default=DEFAULT_K)
    p.add_argument("--h", type=_positive_float("h"), default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("eval", help="PSNR/SSIM of reconstructed frames against ground truth")
    p.add_argument("recon_dir")
    p.add_argument("truth_dir")
    p.add_argument("--peak", type=_positive_float("peak"), default=1.0)
    p.add_argument("--min-psnr", type=float, default=None)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, io.FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error ({args.command}): {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
