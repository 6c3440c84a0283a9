"""MSE training with Adam and per-step SNR sampling, plus evaluation tables."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import config as config_mod
from . import pipeline
from .autodiff import Tensor
from .config import ExperimentConfig, PipelineConfig, TrainConfig
from .errors import DimensionError
from .params import ParamStore, assign, load_archive, save_archive
from .video_io import VideoClip

logger = logging.getLogger(__name__)

TRAIN_LOG_COLUMNS = ("step", "snr_db", "loss", "wall_ms")
CHECKPOINT_NAME = "checkpoint.npz"
TRAIN_LOG_NAME = "train_log.csv"


def mse_loss(x: Tensor, x_hat: Tensor) -> Tensor:
    """Mean of squared differences over every element."""
    if x.shape != x_hat.shape:
        raise DimensionError(f"mse_loss: shapes {x.shape} and {x_hat.shape} differ")
    return ad.mean(ad.square(x_hat - x))


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: ParamStore) -> AdamState:
        return cls({k: np.zeros_like(p.data) for k, p in params.items()}, {k: np.zeros_like(p.data) for k, p in params.items()})


def adam_update(params: ParamStore, grads: dict[str, np.ndarray], state: AdamState, lr: float) -> None:
    """Bias-corrected Adam step; parameters without a gradient are left untouched."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, g in grads.items():
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        params[name].data = params[name].data - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def step_rng(seed: int, step: int) -> np.random.Generator:
    """Per-step generator, so resumed runs replay the same randomness."""
    return np.random.default_rng([seed, step])


@dataclass
class StepResult:
    loss: float
    snr_db: float
    grads: dict[str, np.ndarray] = field(repr=False, default_factory=dict)


def compute_gradients(batch: np.ndarray, params: ParamStore, cfg: PipelineConfig, snr_db: float, rng, gamma=None):
    x = Tensor(batch)
    k = pipeline.clip_rate(cfg, gamma).n_complex_symbols * 2 // cfg.c
    noise = pipeline.batch_noise(rng, batch.shape[0], k, cfg.c, snr_db)
    out, _ = pipeline.forward(x, params, cfg, noise, gamma)
    loss = mse_loss(x, out)
    grad_map = ad.backward(loss)
    names = {id(t): n for n, t in params.items()}
    return loss.item(), {names[id(t)]: g for t, g in grad_map.items() if id(t) in names}


def train_step(batch: np.ndarray, params: ParamStore, opt: AdamState, cfg: PipelineConfig, tcfg: TrainConfig, step: int):
    """One SNR drawn for the whole batch, mean MSE, backward, Adam update."""
    rng = step_rng(tcfg.seed, step)
    snr = float(tcfg.snr_set_db[rng.integers(len(tcfg.snr_set_db))])
    loss, grads = compute_gradients(batch, params, cfg, snr, rng)
    adam_update(params, grads, opt, tcfg.learning_rate)
    return StepResult(loss, snr, grads)


# ---------------------------------------------------------------- data


def load_clips(exp: ExperimentConfig, split: str) -> list[VideoClip]:
    from .video_io import load_raw, synthesize_set

    tc, data = exp.pipeline.tubelet, exp.data
    if data.source == "raw":
        paths = data.train_paths if split == "train" else data.test_paths
        return [load_raw(p, tc.T, tc.C, tc.H, tc.W) for p in paths]
    seed, count = (data.train_seed, data.n_train) if split == "train" else (data.test_seed, data.n_test)
    return synthesize_set(seed, count, tc.T, tc.C, tc.H, tc.W, data.pattern)


def sample_batch(step_generator: np.random.Generator, pool: list[VideoClip] | None, exp: ExperimentConfig, step: int):
    from .video_io import synthesize_clip

    B = exp.train.batch_size
    if pool:
        if B >= len(pool) and B % len(pool) == 0:
            order = np.arange(B) % len(pool)
        else:
            order = step_generator.integers(len(pool), size=B)
        return np.stack([pool[i].frames for i in order])
    tc = exp.pipeline.tubelet
    base = 1_000_003 * (exp.data.train_seed + 1) + B * step
    return np.stack([synthesize_clip(base + i, tc.T, tc.C, tc.H, tc.W, exp.data.pattern).frames for i in range(B)])


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(path, params: ParamStore, opt: AdamState, exp: ExperimentConfig, step: int) -> None:
    arrays = dict(params.arrays())
    for name in params:
        arrays[f"adam.m/{name}"] = opt.m[name]
        arrays[f"adam.v/{name}"] = opt.v[name]
    arrays["adam.step"] = np.array([opt.step], dtype=np.int64)
    arrays["train.step"] = np.array([step], dtype=np.int64)
    save_archive(path, arrays, config_mod.dumps(exp))


def load_checkpoint(path, exp: ExperimentConfig | None = None):
    """Returns ``(params, adam_state, config, step)``; ``exp`` defaults to the stored config."""
    arrays, text = load_archive(path)
    stored = config_mod.loads(text, source=f"{path}:__config__")
    exp = stored if exp is None else exp
    params = pipeline.init_params(exp.pipeline, exp.train.seed)
    assign(params, arrays)
    opt = AdamState.zeros_like(params)
    for name in params:
        if f"adam.m/{name}" in arrays:
            opt.m[name] = arrays[f"adam.m/{name}"].astype(np.float64)
            opt.v[name] = arrays[f"adam.v/{name}"].astype(np.float64)
    opt.step = int(arrays.get("adam.step", np.array([0]))[0])
    return params, opt, exp, int(arrays.get("train.step", np.array([0]))[0])


def train(
    exp: ExperimentConfig,
    out_dir=None,
    resume: bool = False,
    log_every: int = 50,
    clock=time.perf_counter,
    on_checkpoint=None,
):
    """Run ``exp.train.steps`` steps, writing the checkpoint and append-only CSV log.

    ``on_checkpoint(step, params)`` runs after every periodic checkpoint;
    returning True ends training there.
    """
    exp.validate()
    out = Path(out_dir or exp.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt, log_path = out / CHECKPOINT_NAME, out / TRAIN_LOG_NAME
    if resume and ckpt.exists():
        params, opt, _, start = load_checkpoint(ckpt, exp)
    else:
        params, opt, start = pipeline.init_params(exp.pipeline, exp.train.seed), None, 0
        opt = AdamState.zeros_like(params)
        if log_path.exists():
            log_path.unlink()
    (out / "config.ini").write_text(config_mod.dumps(exp))
    pool = load_clips(exp, "train") if (exp.data.source == "raw" or exp.data.n_train > 0) else None

    new_file = not log_path.exists()
    with log_path.open("a", newline="") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(TRAIN_LOG_COLUMNS)
        for step in range(start, exp.train.steps):
            t0 = clock()
            batch = sample_batch(np.random.default_rng([exp.train.seed, step, 7]), pool, exp, step)
            res = train_step(batch, params, opt, exp.pipeline, exp.train, step)
            wall_ms = (clock() - t0) * 1000.0
            writer.writerow([step, res.snr_db, repr(res.loss), f"{wall_ms:.3f}"])
            if log_every and (step + 1) % log_every == 0:
                logger.info("step %d snr %.0f dB loss %.6f", step + 1, res.snr_db, res.loss)
            if (step + 1) % exp.train.eval_every == 0:
                fh.flush()
                save_checkpoint(ckpt, params, opt, exp, step + 1)
                if on_checkpoint is not None and on_checkpoint(step + 1, params):
                    return params
    save_checkpoint(ckpt, params, opt, exp, max(exp.train.steps, start))
    return params


# ---------------------------------------------------------------- evaluation

EVAL_COLUMNS = ("clip", "snr_db", "gamma", "psnr_db", "ms_ssim", "cbr")


def evaluate(params, clips: list[VideoClip], snr_list, gamma: float | None, cfg: PipelineConfig) -> list[dict]:
    """One row per (clip, SNR), each with a noise seed fixed by clip content and SNR."""
    rows = []
    for i, clip in enumerate(clips):
        for snr in snr_list:
            _, metrics, rate = pipeline.roundtrip(clip, params, cfg, float(snr), gamma=gamma)
            rows.append(
                {
                    "clip": i,
                    "snr_db": float(snr),
                    "gamma": cfg.gamma if gamma is None else gamma,
                    "psnr_db": metrics.psnr_db,
                    "ms_ssim": metrics.ms_ssim,
                    "cbr": rate.cbr,
                }
            )
    return rows
