"""Train (or load) the desk model and tabulate quality against keep ratio and SNR.

    python scripts/keep_ratio_study.py --out runs/desk
    python scripts/keep_ratio_study.py --out runs/desk --checkpoint runs/desk/checkpoint.npz
"""

import argparse
import csv
import logging
from pathlib import Path

import numpy as np

from vdjscc import experiments, training


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--checkpoint")
    ap.add_argument("--steps", type=int, default=experiments.TREND_STEPS)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    exp = experiments.trend_config(args.steps)
    out = Path(args.out)
    if args.checkpoint:
        params = training.load_checkpoint(args.checkpoint, exp)[0]
    else:
        params = training.train(exp, out)
    clips = training.load_clips(exp, "test")

    trend = experiments.gamma_trend(params, exp, clips)
    with (out / "keep_ratio.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gamma", "cbr", "mean_psnr_db", "mean_ms_ssim"])
        for j, g in enumerate(trend.gammas):
            w.writerow([g, trend.cbr[j], trend.psnr[:, j].mean(), trend.ms_ssim[:, j].mean()])
            print(f"gamma {g:.2f}  cbr {trend.cbr[j]:.5f}  psnr {trend.psnr[:, j].mean():6.2f}  ms-ssim {trend.ms_ssim[:, j].mean():.4f}")
    print("sign-test p (psnr):   ", np.round(trend.pairwise_p_values("psnr"), 4))
    print("sign-test p (ms-ssim):", np.round(trend.pairwise_p_values("ms_ssim"), 4))

    for snr in exp.snr_list:
        rows = training.evaluate(params, clips, [snr], None, exp.pipeline)
        print(f"snr {snr:5.1f} dB  psnr {np.mean([r['psnr_db'] for r in rows]):6.2f}")


if __name__ == "__main__":
    main()
