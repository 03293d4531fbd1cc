"""Command line front end.

Subcommands:
  corpus    synthesize a small speech/RIR/noise corpus for experiments
  corrupt   convolve clean speech with an RIR and add noise at a target SNR
  enhance   run one enhancer over a file (or a synthesized mixture)
  evaluate  score a processed file against its clean reference
  run       execute a batch scenario from a JSON config
  report    summarize a finished run directory

Exit codes: 0 success, 1 runtime failure, 2 bad usage/config.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import corpus as corpus_mod
from . import harness as harness_mod
from . import hnh as hnh_mod
from . import metrics as metrics_mod
from .harness import ConfigError, Scenario
from .ins import compute_ins
from .mask import BandLayout, ideal_mask
from .nnese import DateConfig, irmn_enhance
from .omlsa import LsaConfig, irmo_enhance
from .signal_core import (FrameSpec, SampledSignal, convolve_rir, load_wav,
                          measured_snr_db, mix_at_snr, write_wav)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nrse",
                                 description="Reverberant speech enhancement toolbox")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("corpus", help="synthesize clean speech, RIRs and noise beds")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-utterances", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-rate", type=int, default=corpus_mod.DEFAULT_FS)

    p = sub.add_parser("corrupt", help="reverberate and add noise at a given SNR")
    p.add_argument("--clean", required=True)
    p.add_argument("--rir", required=True)
    p.add_argument("--noise", required=True)
    p.add_argument("--snr-db", type=float, required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--noise-offset", type=int, default=0)

    p = sub.add_parser("enhance", help="run one enhancement method")
    p.add_argument("--method", required=True, choices=harness_mod.KNOWN_METHODS)
    p.add_argument("--input", help="mixture wav (hnh/unp)")
    p.add_argument("--clean", help="clean wav (irmn/irmo, or with --rir/--noise to synthesize)")
    p.add_argument("--rir")
    p.add_argument("--noise")
    p.add_argument("--snr-db", type=float)
    p.add_argument("--noise-offset", type=int, default=0)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mask-threshold-db", type=float, default=-6.0)
    p.add_argument("--mask-bands", type=int, default=21)
    p.add_argument("--debug-csv", help="per-frame trace (hnh gains, irmn boundaries)")

    p = sub.add_parser("evaluate", help="score processed audio against a reference")
    p.add_argument("--clean", required=True)
    p.add_argument("--processed", required=True)
    p.add_argument("--external-cmd", default="")
    p.add_argument("--json", action="store_true", help="print a JSON object")

    p = sub.add_parser("ins", help="non-stationarity profile of a wav file")
    p.add_argument("--input", required=True)
    p.add_argument("--surrogates", type=int, default=50)
    p.add_argument("--tapers", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="write the profile to this path")

    p = sub.add_parser("run", help="execute a batch scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--no-audio", action="store_true",
                   help="skip writing enhanced wav files")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("report", help="summarize a run directory")
    p.add_argument("--run-dir", required=True)
    return ap


def _cmd_corpus(args) -> int:
    paths = corpus_mod.make_corpus(args.out_dir, n_utterances=args.n_utterances,
                                   seed=args.seed, fs=args.sample_rate)
    for kind, items in paths.items():
        print(f"{kind}: {len(items)} files")
    return 0


def _cmd_corrupt(args) -> int:
    clean = load_wav(args.clean)
    rir = load_wav(args.rir)
    noise = load_wav(args.noise)
    rev = convolve_rir(clean, rir)
    rev = SampledSignal(rev.samples[:len(clean)], clean.sample_rate)
    mix = mix_at_snr(rev, noise, args.snr_db, noise_offset=args.noise_offset)
    write_wav(args.output, mix, "float32")
    print(f"wrote {args.output} (measured snr "
          f"{measured_snr_db(rev, mix):+.2f} dB)")
    return 0


def _mixture_for_enhance(args):
    """Return (mixture, clean, rir) for the enhance subcommand."""
    if args.input:
        mixture = load_wav(args.input)
        clean = load_wav(args.clean) if args.clean else None
        rir = load_wav(args.rir) if args.rir else None
        return mixture, clean, rir
    if not (args.clean and args.rir and args.noise and args.snr_db is not None):
        raise ConfigError("enhance needs --input, or --clean --rir --noise --snr-db")
    clean = load_wav(args.clean)
    rir = load_wav(args.rir)
    noise = load_wav(args.noise)
    rev = convolve_rir(clean, rir)
    rev = SampledSignal(rev.samples[:len(clean)], clean.sample_rate)
    mixture = mix_at_snr(rev, noise, args.snr_db, noise_offset=args.noise_offset)
    return mixture, clean, rir


def _cmd_enhance(args) -> int:
    mixture, clean, rir = _mixture_for_enhance(args)
    method = args.method
    if method in ("irmn", "irmo") and (clean is None or rir is None):
        raise ConfigError(f"{method} needs --clean and --rir (oracle mask)")
    if method == "unp":
        out = mixture
    elif method == "hnh":
        params = hnh_mod.HnhParams(seed=args.seed)
        out = hnh_mod.enhance(mixture, params, debug_csv=args.debug_csv)
    else:
        layout = BandLayout.mel(args.mask_bands, mixture.sample_rate)
        if method == "irmn":
            cfg = DateConfig()
            flen = int(round(cfg.frame_ms * 1e-3 * mixture.sample_rate))
            spec = FrameSpec(frame_len=flen, hop=flen, window="rectangular")
            m = ideal_mask(clean, rir, mixture, args.mask_threshold_db, layout, spec)
            out = irmn_enhance(mixture, m, cfg, debug_csv=args.debug_csv)
        else:
            cfg = LsaConfig()
            spec = FrameSpec.for_rate(mixture.sample_rate, cfg.frame_ms,
                                      cfg.overlap, cfg.window)
            m = ideal_mask(clean, rir, mixture, args.mask_threshold_db, layout, spec)
            out = irmo_enhance(mixture, m, cfg)
    write_wav(args.output, out, "float32")
    print(f"wrote {args.output}")
    return 0


def _cmd_evaluate(args) -> int:
    clean = load_wav(args.clean)
    proc = load_wav(args.processed)
    scores = {"stoi": metrics_mod.stoi(clean, proc),
              "asii_st": metrics_mod.asii_st(clean, proc),
              "srmr": metrics_mod.srmr(proc)}
    if args.external_cmd:
        ext = metrics_mod.external_metric(args.external_cmd, args.clean,
                                          args.processed)
        scores["external"] = ext.score
        scores["external_status"] = ext.status
    if args.json:
        print(json.dumps(scores, indent=2))
    else:
        for k, v in scores.items():
            if isinstance(v, float):
                print(f"{k}: {v:.6f}")
            else:
                print(f"{k}: {v}")
    return 0


def _cmd_ins(args) -> int:
    sig = load_wav(args.input)
    prof = compute_ins(sig, n_surrogates=args.surrogates, n_tapers=args.tapers,
                       seed=args.seed)
    print("scale_s,ins,gamma,stationary")
    for s, v, g in zip(prof.scales, prof.values, prof.gammas):
        print(f"{s * sig.duration:.4f},{v:.4f},{g:.4f},{int(v <= g)}")
    if args.csv:
        Path(args.csv).write_text(prof.to_csv())
    return 0


def _cmd_run(args) -> int:
    sc = Scenario.from_file(args.config)
    progress = None if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    result = harness_mod.run_scenario(sc, write_audio=not args.no_audio,
                                      progress=progress)
    total = len(result.records) + len(result.failures)
    print(f"{len(result.records)} records, {len(result.failures)} failures "
          f"-> {result.output_dir}")
    if result.failures and total and len(result.failures) > 0.1 * total:
        for f in result.failures[:5]:
            print(f"  failed: {f['utterance']} @ {f['snr_db']}: {f['error']}",
                  file=sys.stderr)
        return 1
    return 0


def _cmd_report(args) -> int:
    summary = harness_mod.report(args.run_dir)
    for metric, per_method in summary.items():
        cells = ", ".join(f"{m}={v:.4f}" for m, v in per_method.items()
                          if v is not None)
        print(f"{metric}: {cells}")
    print(f"wrote {Path(args.run_dir) / 'summary.md'}")
    return 0


_HANDLERS = {"corpus": _cmd_corpus, "corrupt": _cmd_corrupt,
             "enhance": _cmd_enhance, "evaluate": _cmd_evaluate,
             "ins": _cmd_ins, "run": _cmd_run, "report": _cmd_report}


def main(argv=None) -> int:
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
