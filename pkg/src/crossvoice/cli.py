"""Command-line entry point: subcommands for every pipeline stage.

Exit status: 0 on success, 2 on usage errors (argparse), 1 on runtime
errors (bad inputs, incompatible checkpoints, I/O failures).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import pipeline
from .config import PRESETS, apply_overrides, load_config
from .errors import CrossVoiceError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossvoice",
        description="Desk-scale cross-lingual voice cloning pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", required=True, help="working directory for artifacts")
        p.add_argument("--config", help="key = value override file")
        p.add_argument("--preset", choices=sorted(PRESETS), default=None,
                       help="configuration preset (default: toy)")
        p.add_argument("--seed", type=int, default=None, help="pipeline seed")
        return p

    common(sub.add_parser("gen-corpus", help="generate the synthetic corpus"))
    common(sub.add_parser("train-bn", help="train the BN feature extractor"))
    common(sub.add_parser("train-prosody", help="train the latent prosody model"))
    common(sub.add_parser("train-acoustic", help="pretrain the acoustic model"))

    adapt = common(sub.add_parser("adapt", help="text-free speaker adaptation"))
    adapt.add_argument("--trial", type=int, default=0,
                       help="target-speaker trial index (fresh speaker per trial)")
    adapt.add_argument("--n-utts", type=int, default=None,
                       help="adaptation utterance budget")

    synth = common(sub.add_parser("synth", help="synthesize speech from text"))
    synth.add_argument("--text", required=True, help="lexicon words, whitespace separated")
    synth.add_argument("--name", default="synth", help="output file stem")
    synth.add_argument("--no-adapted", action="store_true",
                       help="use the unadapted acoustic checkpoint")

    ev = common(sub.add_parser("eval", help="evaluation report"))
    ev.add_argument("--trials", type=int, default=None,
                    help="adaptation trials to run (default: config)")
    ev.add_argument("--sweep", action="store_true",
                    help="also run the {budgets} proposed-vs-baseline sweep")
    ev.add_argument("--monotonicity-sample", type=int, default=None,
                    help="cap the sentences scored for alignment diagnostics")

    common(sub.add_parser("baseline", help="train the audio-text baseline system"))
    return parser


def resolve_config(args):
    if args.config:
        base = PRESETS[args.preset]() if args.preset else None
        cfg = load_config(args.config, base=base)
    else:
        cfg = PRESETS[args.preset or "toy"]()
    if args.seed is not None:
        cfg = apply_overrides(cfg, {"seed": args.seed})
    if args.preset and cfg.preset != args.preset:
        cfg = replace(cfg, preset=args.preset)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "gen-corpus":
            manifests = pipeline.run_gen_corpus(cfg, args.out)
            for name, path in sorted(manifests.items()):
                print(f"{name}: {path}")
        elif args.command == "train-bn":
            print(pipeline.run_train_bn(cfg, args.out))
        elif args.command == "train-prosody":
            print(pipeline.run_train_prosody(cfg, args.out))
        elif args.command == "train-acoustic":
            print(pipeline.run_train_acoustic(cfg, args.out))
        elif args.command == "adapt":
            ckpt, report = pipeline.run_adapt(cfg, args.out, trial=args.trial,
                                              n_utts=args.n_utts)
            print(ckpt)
            print(f"pre={report.pre_distance!r} post={report.post_distance!r}")
        elif args.command == "synth":
            report = pipeline.run_synth(cfg, args.out, args.text, name=args.name,
                                        use_adapted=not args.no_adapted)
            for key in sorted(report):
                print(f"{key} = {report[key]}")
        elif args.command == "eval":
            report = pipeline.run_eval(cfg, args.out, trials=args.trials,
                                       sweep=args.sweep,
                                       monotonicity_sample=args.monotonicity_sample)
            print(f"wrote eval report with {len(report)} entries")
        elif args.command == "baseline":
            print(pipeline.run_baseline(cfg, args.out))
        return 0
    except (CrossVoiceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
