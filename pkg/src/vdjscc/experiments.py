"""Desk-scale experiment recipes shared by the acceptance tests and scripts/."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binomtest

from . import pipeline, training
from .config import DataConfig, ExperimentConfig, desk_profile
from .video_io import VideoClip, synthesize_clip

OVERFIT_TARGET_DB = 30.0
OVERFIT_MAX_STEPS = 3000
OVERFIT_LR = 5e-4
TREND_LR = 5e-4
TREND_STEPS = 2000


def overfit_config(learning_rate: float = OVERFIT_LR, steps: int = OVERFIT_MAX_STEPS) -> ExperimentConfig:
    """Four fixed clips in every batch, noiseless channel, every token kept."""
    base = desk_profile()
    return dataclasses.replace(
        base,
        pipeline=dataclasses.replace(base.pipeline, gamma=1.0),
        train=dataclasses.replace(
            base.train, learning_rate=learning_rate, batch_size=4, snr_set_db=(math.inf,), steps=steps, eval_every=250
        ),
        data=DataConfig(n_train=4, n_test=0, train_seed=1),
    )


@dataclass
class OverfitResult:
    reached_at: int | None
    history: list[tuple[int, list[float]]] = field(default_factory=list)  # (step, per-clip PSNR)

    @property
    def final_psnr(self) -> list[float]:
        return self.history[-1][1] if self.history else []


def run_overfit(out_dir, exp: ExperimentConfig | None = None, target_db: float = OVERFIT_TARGET_DB) -> OverfitResult:
    """Train until every training clip clears ``target_db`` (checked every ``eval_every`` steps)."""
    exp = exp or overfit_config()
    clips = training.load_clips(exp, "train")
    result = OverfitResult(None)

    def check(step, params):
        ps = [pipeline.roundtrip(c, params, exp.pipeline, math.inf)[1].psnr_db for c in clips]
        result.history.append((step, ps))
        if min(ps) > target_db:
            result.reached_at = step
            return True
        return False

    training.train(exp, out_dir, on_checkpoint=check)
    return result


def trend_config(steps: int = TREND_STEPS, learning_rate: float = TREND_LR) -> ExperimentConfig:
    """Desk profile trained at the keep ratio and SNR set of the full-scale runs."""
    base = desk_profile()
    return dataclasses.replace(
        base,
        train=dataclasses.replace(base.train, learning_rate=learning_rate, steps=steps, eval_every=500),
        data=DataConfig(n_train=64, n_test=20),
    )


@dataclass
class GammaTrend:
    gammas: tuple[float, ...]
    psnr: np.ndarray  # (clips, gammas)
    ms_ssim: np.ndarray
    cbr: list[float]

    def mean_nondecreasing(self) -> bool:
        return bool(np.all(np.diff(self.psnr.mean(0)) >= 0) and np.all(np.diff(self.ms_ssim.mean(0)) >= 0))

    def pairwise_p_values(self, metric: str = "psnr") -> list[float]:
        """One-sided sign test per adjacent keep-ratio pair; ties are dropped."""
        values = getattr(self, metric)
        out = []
        for a, b in zip(range(len(self.gammas) - 1), range(1, len(self.gammas))):
            diff = values[:, b] - values[:, a]
            wins, n = int(np.sum(diff > 0)), int(np.sum(diff != 0))
            out.append(binomtest(wins, n, 0.5, alternative="greater").pvalue if n else 1.0)
        return out


def gamma_trend(params, exp: ExperimentConfig, clips: list[VideoClip], gammas=None, snr_db=None) -> GammaTrend:
    gammas = tuple(exp.gamma_list if gammas is None else gammas)
    snr = exp.sweep_snr_db if snr_db is None else snr_db
    psnr = np.zeros((len(clips), len(gammas)))
    ssim = np.zeros_like(psnr)
    cbr = []
    for j, g in enumerate(gammas):
        rows = training.evaluate(params, clips, [snr], g, exp.pipeline)
        psnr[:, j] = [r["psnr_db"] for r in rows]
        ssim[:, j] = [r["ms_ssim"] for r in rows]
        cbr.append(rows[0]["cbr"])
    return GammaTrend(gammas, psnr, ssim, cbr)


@dataclass
class MaskStudy:
    learned: np.ndarray  # per-seed fraction of mover-footprint tokens kept
    random: np.ndarray  # same for a uniform-random mask of equal size


def mask_semantics(params, exp: ExperimentConfig, seeds, gamma: float, pattern: str = "moving_square") -> MaskStudy:
    """Footprint coverage of the learned mask vs a size-matched random mask, one clip per seed."""
    tc = exp.pipeline.tubelet
    learned, rand = [], []
    for seed in seeds:
        clip = synthesize_clip(10_000 + seed, tc.T, tc.C, tc.H, tc.W, pattern)
        _, mask, _ = pipeline.encode(clip, params, exp.pipeline, gamma)
        frac, _ = pipeline.mover_overlap(mask, clip, exp.pipeline)
        shuffled = np.random.default_rng(seed).permutation(mask)
        learned.append(frac)
        rand.append(pipeline.mover_overlap(shuffled, clip, exp.pipeline)[0])
    return MaskStudy(np.array(learned), np.array(rand))
