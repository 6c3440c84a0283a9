"""Command-line entry point.

    vdjscc train            [--config FILE] [--out DIR] [--resume] [--key value ...]
    vdjscc sweep-snr        --checkpoint FILE [--out CSV] [--key value ...]
    vdjscc sweep-cbr        --checkpoint FILE [--out CSV] [--key value ...]
    vdjscc visualize-masks  --checkpoint FILE [--clip N] [--gamma G] [--out DIR]
    vdjscc gradcheck        [--config FILE] [--seed N] [--corrupt-op OP]

Any ``--key value`` pair not listed above overrides the config field of that
name (``--gamma 0.6``, ``--train.steps 200``). Exit status is 0 on success,
1 for configuration errors and 2 for runtime or check failures.
"""

from __future__ import annotations

import argparse
import csv
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import gradcheck, pipeline, training
from .config import ExperimentConfig
from .errors import ConfigError, DimensionError
from .params import load_archive
from .video_io import write_mask_map

EXIT_OK, EXIT_CONFIG, EXIT_FAILURE = 0, 1, 2

SNR_COLUMNS = ("snr_db", "mean_psnr_db", "mean_ms_ssim", "cbr")
CBR_COLUMNS = ("gamma", "cbr", "mean_psnr_db", "mean_ms_ssim")

logger = logging.getLogger("vdjscc")


def _split_overrides(extra: list[str]) -> dict[str, str]:
    out = {}
    i = 0
    while i < len(extra):
        key = extra[i]
        if not key.startswith("--") or i + 1 >= len(extra):
            raise ConfigError(f"expected '--key value' pairs, got {' '.join(extra[i:])!r}")
        out[key[2:]] = extra[i + 1]
        i += 2
    return out


def _resolve_config(args, overrides: dict[str, str]) -> ExperimentConfig:
    if args.config:
        cfg = config_mod.load(args.config)
    elif getattr(args, "checkpoint", None):
        _, text = load_archive(args.checkpoint)
        cfg = config_mod.loads(text, source=f"{args.checkpoint}:__config__")
    else:
        cfg = config_mod.desk_profile()
    cfg = config_mod.apply_overrides(cfg, overrides)
    cfg.validate()
    return cfg


def _write_csv(path: Path, columns, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _copy_config(cfg: ExperimentConfig, args, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.config:
        shutil.copyfile(args.config, out_dir / "config.source.ini")
    (out_dir / "config.ini").write_text(config_mod.dumps(cfg))


# ---------------------------------------------------------------- commands


def cmd_train(args, cfg: ExperimentConfig) -> int:
    out = Path(args.out or cfg.output_dir)
    _copy_config(cfg, args, out)
    training.train(cfg, out, resume=args.resume)
    print(f"checkpoint: {out / training.CHECKPOINT_NAME}")
    return EXIT_OK


def _load_model(args, cfg: ExperimentConfig):
    params, _, _, step = training.load_checkpoint(args.checkpoint, cfg)
    logger.info("loaded %s (step %d)", args.checkpoint, step)
    return params


def _means(rows):
    return float(np.mean([r["psnr_db"] for r in rows])), float(np.mean([r["ms_ssim"] for r in rows]))


def cmd_sweep_snr(args, cfg: ExperimentConfig) -> int:
    params = _load_model(args, cfg)
    clips = training.load_clips(cfg, "test")
    rows = training.evaluate(params, clips, cfg.snr_list, None, cfg.pipeline)
    table = []
    for snr in cfg.snr_list:
        cell = [r for r in rows if r["snr_db"] == float(snr)]
        psnr, ssim = _means(cell)
        table.append((float(snr), psnr, ssim, cell[0]["cbr"]))
    out = Path(args.out or Path(cfg.output_dir) / "sweep_snr.csv")
    _copy_config(cfg, args, out.parent)
    _write_csv(out, SNR_COLUMNS, table)
    for row in table:
        print("snr %5.1f dB  psnr %6.2f dB  ms-ssim %.4f  cbr %.5f" % row)
    return EXIT_OK


def cmd_sweep_cbr(args, cfg: ExperimentConfig) -> int:
    params = _load_model(args, cfg)
    clips = training.load_clips(cfg, "test")
    table = []
    for gamma in cfg.gamma_list:
        rows = training.evaluate(params, clips, [cfg.sweep_snr_db], float(gamma), cfg.pipeline)
        psnr, ssim = _means(rows)
        table.append((float(gamma), rows[0]["cbr"], psnr, ssim))
    out = Path(args.out or Path(cfg.output_dir) / "sweep_cbr.csv")
    _copy_config(cfg, args, out.parent)
    _write_csv(out, CBR_COLUMNS, table)
    for row in table:
        print("gamma %.2f  cbr %.5f  psnr %6.2f dB  ms-ssim %.4f" % row)
    return EXIT_OK


def cmd_visualize_masks(args, cfg: ExperimentConfig) -> int:
    params = _load_model(args, cfg)
    clips = training.load_clips(cfg, "test")
    if not 0 <= args.clip < len(clips):
        raise ConfigError(f"--clip {args.clip} out of range for {len(clips)} test clips")
    clip = clips[args.clip]
    gamma = cfg.pipeline.gamma if args.gamma is None else args.gamma
    _, mask, _ = pipeline.encode(clip, params, cfg.pipeline, gamma)
    tc = cfg.pipeline.tubelet
    out = Path(args.out or Path(cfg.output_dir) / "masks")
    _copy_config(cfg, args, out)
    paths = write_mask_map(mask, tc.n_t, tc.n_h, tc.n_w, out / f"clip{args.clip}", scale=tc.h)
    print(f"wrote {len(paths)} maps to {out}; kept {int(mask.sum())}/{mask.size} tokens")
    if clip.object_mask is not None:
        frac, fp = pipeline.mover_overlap(mask, clip, cfg.pipeline)
        print(f"mover footprint: {int(fp.sum())} tokens, kept fraction {frac:.3f} (uniform baseline {mask.mean():.3f})")
    return EXIT_OK


def cmd_gradcheck(args, cfg: ExperimentConfig) -> int:
    K = cfg.pipeline.tubelet.K if (args.config or "K" in args.overrides) else 16
    rows = gradcheck.run_suite(K, args.seed, args.corrupt_op)
    failed = 0
    for name, err, tol in rows:
        ok = err < tol
        failed += not ok
        print(f"{'ok  ' if ok else 'FAIL'} {name:<24} max rel err {err:.3e}  (tol {tol:g})")
    print(f"{len(rows) - failed}/{len(rows)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_FAILURE


COMMANDS = {
    "train": cmd_train,
    "sweep-snr": cmd_sweep_snr,
    "sweep-cbr": cmd_sweep_cbr,
    "visualize-masks": cmd_visualize_masks,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vdjscc", description="Desk-scale wireless video transmission simulator.", allow_abbrev=False
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        # no prefix matching, so config overrides such as --h never collide with flags
        p = sub.add_parser(name, allow_abbrev=False)
        p.add_argument("--config", help="INI config file (default: desk profile)")
        p.add_argument("--out", help="output directory or CSV path")
        if name == "train":
            p.add_argument("--resume", action="store_true", help="continue from the checkpoint in the output dir")
        elif name == "gradcheck":
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--corrupt-op", default=None, help="test hook: scale one op's backward to force a failure")
        else:
            p.add_argument("--checkpoint", required=True)
        if name == "visualize-masks":
            p.add_argument("--clip", type=int, default=0, help="index into the test set")
            p.add_argument("--gamma", type=float, default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.overrides = _split_overrides(extra)
        cfg = _resolve_config(args, args.overrides)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, DimensionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
