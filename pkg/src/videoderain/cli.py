"""Command-line entry point: ``videoderain {synth,derain,eval,grad-hist}``.

Exit codes: 0 success (derain converged), 2 derain stopped at ``outer_max``,
3 bad usage or configuration, 4 file or format error, 5 numerical failure,
1 anything else. Failures print one ``error: <class>: <detail>`` line on
standard error.
"""

import argparse
import csv
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import io, metrics, solver, synth
from .config import load_config
from .errors import ConfigError, FormatError, FrameReadError, NumericalError

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_MAX_ITER = 2
EXIT_USAGE = 3
EXIT_IO = 4
EXIT_NUMERIC = 5

log = logging.getLogger("videoderain")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments, which is taken by the max-iterations code
    def error(self, message):
        raise UsageError(message)


def _build_parser():
    parser = _Parser(prog="videoderain", description="Low-rank tensor video deraining.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic rainy video with ground truth")
    p.add_argument("--config", help="INI file with a [synth] section")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--bitdepth", type=int, choices=(8, 16), default=16)

    p = sub.add_parser("derain", help="separate a PNG sequence into background and rain")
    p.add_argument("--in", dest="inp", required=True, help="directory of PNG frames")
    p.add_argument("--config", help="INI file with a [solver] section")
    p.add_argument("--out-bg", required=True)
    p.add_argument("--out-rain", required=True)
    p.add_argument("--dump-history", metavar="CSV")
    p.add_argument("--no-affine", action="store_true")
    p.add_argument("--no-subspace", action="store_true")

    p = sub.add_parser("eval", help="compare a result against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--rain-pred")
    p.add_argument("--rain-gt")
    p.add_argument("--support-threshold", type=float, default=0.05)
    p.add_argument("--csv", action="store_true", help="machine-readable output")

    p = sub.add_parser("grad-hist", help="gradient histograms of one frame")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--frame", type=int, required=True)
    p.add_argument("--out", required=True)
    return parser


def _same_input_output(inp, *outs):
    src = os.path.realpath(inp)
    for out in outs:
        if out is not None and os.path.realpath(out) == src:
            raise UsageError(f"output {out} would overwrite the input directory")


# ------------------------------------------------------------------ synth


def cmd_synth(args):
    run = load_config(args.config)
    cfg = run.synth
    if cfg.background_kind == "natural-image-file" and args.config and not os.path.isabs(cfg.background_path):
        cfg = replace(cfg, background_path=os.path.join(os.path.dirname(args.config), cfg.background_path))
    truth = synth.synthesize(cfg)
    for name in ("observed", "clean", "rain"):
        layer = getattr(truth, name)
        io.write_frames(layer, os.path.join(args.out, name), bitdepth=args.bitdepth)
        io.write_rlrt(layer, os.path.join(args.out, f"{name}.rlrt"))
    with open(os.path.join(args.out, "jitter.txt"), "w", encoding="ascii") as fh:
        fh.write("# frame a b tx c d ty\n")
        for f, p in enumerate(truth.jitter):
            fh.write(f"{f} " + " ".join(repr(float(v)) for v in p) + "\n")
    return EXIT_OK


# ------------------------------------------------------------------ derain


def _write_history(path, histories):
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["channel", "iteration", "objective", "rel_change", "rain_sparsity"])
        for ch, hist in enumerate(histories):
            for rec in hist:
                w.writerow([ch, rec.iteration, repr(rec.objective), repr(rec.rel_change),
                            repr(rec.rain_sparsity)])


def cmd_derain(args):
    _same_input_output(args.inp, args.out_bg, args.out_rain)
    cfg = load_config(args.config).solver
    if args.no_affine:
        cfg = replace(cfg, enable_affine=False)
    if args.no_subspace:
        cfg = replace(cfg, enable_subspace=False)
    seq = io.read_frames(args.inp)
    if len(seq.channels) == 1:
        results = [solver.derain(seq.channels[0], cfg)]
    else:
        # geometry is shared: estimate it on luma, then hold it fixed per channel
        luma = solver.derain(io.luminance(seq.channels), cfg)
        per = replace(cfg, enable_affine=False)
        results = [solver.derain(c, per, tau_init=luma.tau) for c in seq.channels]
    io.write_frames([r.background for r in results], args.out_bg, seq.bitdepth, seq.names)
    io.write_frames([r.rain for r in results], args.out_rain, seq.bitdepth, seq.names)
    if args.dump_history:
        _write_history(args.dump_history, [r.history for r in results])
    converged = all(r.converged for r in results)
    for ch, r in enumerate(results):
        log.info("channel %d: %d iterations, objective %.6g, converged %s",
                 ch, r.iterations, r.history[-1].objective, r.converged)
    return EXIT_OK if converged else EXIT_MAX_ITER


# ------------------------------------------------------------------ eval


def _fmt(x):
    return f"{x:.4f}"


def cmd_eval(args):
    pred = io.read_frames(args.pred)
    gt = io.read_frames(args.gt)
    if len(pred.channels) != len(gt.channels) or pred.channels[0].shape != gt.channels[0].shape:
        raise FrameReadError(
            f"{args.pred} and {args.gt} differ in size or channel count: "
            f"{len(pred.channels)}x{pred.channels[0].shape} vs {len(gt.channels)}x{gt.channels[0].shape}"
        )
    if (args.rain_pred is None) != (args.rain_gt is None):
        raise UsageError("--rain-pred and --rain-gt go together")
    n_ch = len(gt.channels)
    t = gt.channels[0].shape[2]
    ch_psnr = [metrics.psnr(p, g) for p, g in zip(pred.channels, gt.channels)]
    frame_psnr, frame_ssim = [], []
    for f in range(t):
        frame_psnr.append(float(np.mean(
            [metrics.psnr(p[:, :, f], g[:, :, f]) for p, g in zip(pred.channels, gt.channels)])))
        frame_ssim.append(float(np.mean(
            [metrics.ssim(p[:, :, f], g[:, :, f]) for p, g in zip(pred.channels, gt.channels)])))
    f1 = None
    if args.rain_pred is not None:
        rp = io.read_frames(args.rain_pred)
        rg = io.read_frames(args.rain_gt)
        f1 = metrics.rain_support_f1(
            np.stack(rp.channels), np.stack(rg.channels), args.support_threshold
        )
    mean_psnr = float(np.mean(ch_psnr))
    mean_ssim = float(np.mean(frame_ssim))
    out = sys.stdout
    if args.csv:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["frame", "psnr", "ssim"])
        for f in range(t):
            w.writerow([f, _fmt(frame_psnr[f]), _fmt(frame_ssim[f])])
        w.writerow(["mean", _fmt(mean_psnr), _fmt(mean_ssim)])
        if f1 is not None:
            w.writerow(["rain_f1", _fmt(f1), ""])
    else:
        names = ["gray"] if n_ch == 1 else ["red", "green", "blue"]
        for name, v in zip(names, ch_psnr):
            print(f"psnr {name}: {_fmt(v)} dB", file=out)
        print(f"psnr mean: {_fmt(mean_psnr)} dB", file=out)
        for f in range(t):
            print(f"ssim frame {f}: {_fmt(frame_ssim[f])}", file=out)
        print(f"ssim mean: {_fmt(mean_ssim)}", file=out)
        if f1 is not None:
            print(f"rain support f1 (threshold {args.support_threshold:g}): {_fmt(f1)}", file=out)
    return EXIT_OK


# ------------------------------------------------------------------ grad-hist


def cmd_grad_hist(args):
    seq = io.read_frames(args.inp)
    t = seq.channels[0].shape[2]
    if not 0 <= args.frame < t:
        raise UsageError(f"--frame {args.frame} outside [0, {t})")
    frame = io.luminance([c[:, :, args.frame] for c in seq.channels])
    pair, div = metrics.gradient_isotropy(frame)
    with open(args.out, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_edges", "h_count", "v_count"])
        for lo, hc, vc in zip(pair.bin_edges[:-1], pair.h_counts, pair.v_counts):
            w.writerow([repr(float(lo)), repr(float(hc)), repr(float(vc))])
        w.writerow(["divergence", repr(float(div)), ""])
    return EXIT_OK


_COMMANDS = {
    "synth": cmd_synth,
    "derain": cmd_derain,
    "eval": cmd_eval,
    "grad-hist": cmd_grad_hist,
}


def _fail(kind, detail, code):
    detail = " ".join(str(detail).split())
    print(f"error: {kind}: {detail}", file=sys.stderr)
    return code


def main(argv=None):
    try:
        args = _build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except ConfigError as exc:
        return _fail("config", exc, EXIT_USAGE)
    except FormatError as exc:
        return _fail("format", exc, EXIT_IO)
    except (FrameReadError, OSError) as exc:
        return _fail("io", exc, EXIT_IO)
    except NumericalError as exc:
        return _fail("numeric", exc, EXIT_NUMERIC)
    except ValueError as exc:
        return _fail("argument", exc, EXIT_USAGE)
    except Exception as exc:  # noqa: BLE001 - last-resort report
        return _fail("internal", f"{type(exc).__name__}: {exc}", EXIT_INTERNAL)


if __name__ == "__main__":
    sys.exit(main())
