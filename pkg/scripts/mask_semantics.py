"""Compare learned token masks with size-matched random masks on moving-object clips.

    python scripts/mask_semantics.py --checkpoint runs/desk/checkpoint.npz --gamma 0.5 --maps runs/desk/masks
"""

import argparse

from vdjscc import experiments, pipeline, training
from vdjscc.video_io import synthesize_clip, write_mask_map


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--checkpoint", required=True)
    ap.add_argument("--gamma", type=float, default=0.5)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--pattern", default="moving_square")
    ap.add_argument("--maps", help="directory for graymaps of the first clip")
    args = ap.parse_args()

    params, _, exp, _ = training.load_checkpoint(args.checkpoint)
    study = experiments.mask_semantics(params, exp, range(args.seeds), args.gamma, args.pattern)
    for seed, (a, b) in enumerate(zip(study.learned, study.random)):
        print(f"seed {seed}: footprint kept {a:.3f} learned, {b:.3f} random")
    print(f"mean: {study.learned.mean():.3f} learned vs {study.random.mean():.3f} random")

    if args.maps:
        tc = exp.pipeline.tubelet
        clip = synthesize_clip(10_000, tc.T, tc.C, tc.H, tc.W, args.pattern)
        _, mask, _ = pipeline.encode(clip, params, exp.pipeline, args.gamma)
        write_mask_map(mask, tc.n_t, tc.n_h, tc.n_w, f"{args.maps}/learned", scale=tc.h)
        footprint = pipeline.mover_overlap(mask, clip, exp.pipeline)[1]
        write_mask_map(footprint.astype(int), tc.n_t, tc.n_h, tc.n_w, f"{args.maps}/footprint", scale=tc.h)


if __name__ == "__main__":
    main()
