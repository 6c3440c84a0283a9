"""Overfit four synthetic clips through a noiseless channel and report PSNR over time.

    python scripts/overfit_smoke.py --out runs/overfit [--lr 5e-4] [--steps 3000]
"""

import argparse
import logging

from vdjscc import experiments


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/overfit")
    ap.add_argument("--lr", type=float, default=experiments.OVERFIT_LR)
    ap.add_argument("--steps", type=int, default=experiments.OVERFIT_MAX_STEPS)
    ap.add_argument("--target", type=float, default=experiments.OVERFIT_TARGET_DB)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    exp = experiments.overfit_config(args.lr, args.steps)
    result = experiments.run_overfit(args.out, exp, args.target)
    for step, ps in result.history:
        print(f"step {step:5d}  " + "  ".join(f"{p:6.2f}" for p in ps) + f"   mean {sum(ps) / len(ps):6.2f} dB")
    if result.reached_at:
        print(f"target {args.target} dB reached at step {result.reached_at}")
    else:
        print(f"target {args.target} dB not reached within {args.steps} steps")


if __name__ == "__main__":
    main()
