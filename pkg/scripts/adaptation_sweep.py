#!/usr/bin/env python3
"""Proposed-vs-baseline adaptation-budget sweep over a finished pipeline run.

Trains the audio-text baseline if its checkpoint is missing, then fine-tunes
both systems at each budget in eval.sweep_sizes and writes the side-by-side
report. Usage: python scripts/adaptation_sweep.py --out runs/toy [--seed 1]
"""

import argparse
from pathlib import Path

from crossvoice import pipeline
from crossvoice.config import apply_overrides, load_config, toy_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--config", default=None)
    args = ap.parse_args()

    cfg = load_config(args.config) if args.config else toy_config()
    cfg = apply_overrides(cfg, {"seed": args.seed})

    if not (Path(args.out) / "checkpoints" / "baseline.ckpt").exists():
        print("training baseline system ...", flush=True)
        pipeline.run_baseline(cfg, args.out)
    report = pipeline.run_sweep(cfg, args.out)
    for key in sorted(report):
        print(f"{key} = {report[key]}")


if __name__ == "__main__":
    main()
