#!/usr/bin/env python3
"""Run the full toy pipeline from one seed and time every stage.

Usage: python scripts/run_toy_pipeline.py --out runs/toy [--seed 1]
                                          [--config overrides.cfg]
"""

import argparse
import time

from crossvoice import pipeline
from crossvoice.config import apply_overrides, load_config, toy_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--config", default=None)
    ap.add_argument("--text", default="ssaa iy ffuw eh",
                    help="demo sentence for the synth stage")
    ap.add_argument("--trials", type=int, default=1,
                    help="adaptation trials in the eval stage")
    args = ap.parse_args()

    cfg = load_config(args.config) if args.config else toy_config()
    cfg = apply_overrides(cfg, {"seed": args.seed})

    stages = [
        ("gen-corpus", lambda: pipeline.run_gen_corpus(cfg, args.out)),
        ("train-bn", lambda: pipeline.run_train_bn(cfg, args.out)),
        ("train-prosody", lambda: pipeline.run_train_prosody(cfg, args.out)),
        ("train-acoustic", lambda: pipeline.run_train_acoustic(cfg, args.out)),
        ("adapt", lambda: pipeline.run_adapt(cfg, args.out)),
        ("synth", lambda: pipeline.run_synth(cfg, args.out, args.text)),
        ("eval", lambda: pipeline.run_eval(cfg, args.out, trials=args.trials)),
    ]
    t_total = time.monotonic()
    for name, stage in stages:
        t0 = time.monotonic()
        stage()
        print(f"{name}: {time.monotonic() - t0:.1f} s", flush=True)
    print(f"total: {(time.monotonic() - t_total) / 60:.1f} min")
    print(f"artifacts in {args.out}")


if __name__ == "__main__":
    main()
