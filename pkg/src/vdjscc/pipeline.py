"""End-to-end encoder, channel and decoder.

The graph functions work on a batch ``(B, T, C, H, W)`` and are used for
training; :func:`encode`, :func:`decode` and :func:`roundtrip` wrap them for
single clips at inference time.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import multiscale as ms
from . import token_select as ts
from .autodiff import Tensor
from .channel import (
    ChannelFrame,
    RateReport,
    complex_to_reals,
    noise_power,
    normalize_power,
    rate_report,
    reals_to_complex,
    sample_noise,
)
from .config import PipelineConfig
from .errors import DimensionError
from .metrics import clip_metrics
from .params import ParamStore
from .tubelet import deembed_tensor, embed_tensor
from .video_io import VideoClip

SELECTOR = "select"


def init_params(cfg: PipelineConfig, seed: int = 0) -> ParamStore:
    """Normal(0, 0.02) projections, zero biases, unit layer-norm gains."""
    cfg.validate()
    tc = cfg.tubelet
    K = tc.K
    store = ParamStore(seed)
    multi = not cfg.disable_multiscale
    store.linear("embed", tc.tube_dim, K)
    ms.init_encoder(store, "enc", K, cfg.L, tc.n_t, tc.n_h, tc.n_w, cfg.mlp_ratio, multi)
    ts.init_selector(store, SELECTOR, K)
    store.linear("chan.tx", K, cfg.c)
    store.linear("chan.rx", cfg.c, K)
    ms.init_decoder(store, "dec", K, cfg.L, tc.n_t, tc.n_h, tc.n_w, cfg.mlp_ratio, multi)
    store.linear("deembed", K, tc.tube_dim)
    return store


def _pair(params, name):
    return params[f"{name}.weight"], params[f"{name}.bias"]


@dataclass
class Encoded:
    symbols: Tensor  # (B, k, c) reals, unit mean complex power per clip
    indices: np.ndarray  # (B, k) kept token indices, ascending
    mask: np.ndarray  # (B, M)
    keep_probs: np.ndarray | None  # (B, M)
    scale: np.ndarray  # (B,)
    features: Tensor  # s, (B, n_t, S, K)
    gate: Tensor | None = None  # p - stop_grad(p), (B, M, 1); zero-valued, carries the scorer gradient


def _check_batch(frames: Tensor, cfg: PipelineConfig) -> None:
    tc = cfg.tubelet
    if frames.ndim != 5 or frames.shape[1:] != (tc.T, tc.C, tc.H, tc.W):
        raise DimensionError(f"input stage: clips {frames.shape[1:]} do not match config {(tc.T, tc.C, tc.H, tc.W)}")


def encoder_forward(
    frames: Tensor,
    params,
    cfg: PipelineConfig,
    gamma: float | None = None,
    mask_override: np.ndarray | None = None,
    p_ref: np.ndarray | None = None,
) -> Encoded:
    """Embed, two-scale encode, select, project to channel reals and normalize.

    ``mask_override`` pins the kept set; ``p_ref`` pins the stop-gradient copy
    of the keep probabilities. Both exist for finite-difference checks of the
    straight-through path.
    """
    _check_batch(frames, cfg)
    tc = cfg.tubelet
    gamma = cfg.gamma if gamma is None else gamma
    B, M = frames.shape[0], tc.M
    z = embed_tensor(frames, tc, *_pair(params, "embed"))
    s = ms.two_branch_encode(z, params, "enc", tc.n_h, tc.n_w, cfg.n_heads, cfg.L, not cfg.disable_multiscale)
    if s.shape[1:] != (tc.n_t, tc.n_spatial, tc.K):
        raise DimensionError(f"encoder stage: features {s.shape} do not match grid")
    flat = s.reshape(B, M, tc.K)

    if cfg.disable_token_selection:
        probs = gate = None
        mask = np.ones((B, M), dtype=np.int64) if mask_override is None else np.asarray(mask_override)
        gated = flat
    else:
        # scores are computed on detached features so the encoder is trained by reconstruction only
        local, glob = ts.split_features(s.detach(), params, SELECTOR)
        p = ts.score_tokens(local, glob, params, SELECTOR).reshape(B, M)
        probs = p.data.copy()
        if mask_override is None:
            idx = ts.topk_indices(probs, ts.keep_count(gamma, M))
            mask = np.zeros((B, M), dtype=np.int64)
            np.put_along_axis(mask, idx, 1, axis=1)
        else:
            mask = np.asarray(mask_override, dtype=np.int64).reshape(B, M)
        m = Tensor(mask.astype(np.float64).reshape(B, M, 1))
        p3 = p.reshape(B, M, 1)
        ref = p3.detach() if p_ref is None else Tensor(np.asarray(p_ref).reshape(B, M, 1))
        gate = p3 - ref
        gated = flat * (m + gate)

    counts = mask.sum(axis=1)
    if np.any(counts != counts[0]):
        raise DimensionError("selection stage: clips in a batch must keep the same number of tokens")
    idx = np.sort(np.argsort(-mask, axis=1, kind="stable")[:, : counts[0]], axis=1)
    kept = ad.gather(gated, idx, axis=1)
    reals = ad.linear(kept, *_pair(params, "chan.tx"))
    symbols, scale = normalize_power(reals)
    return Encoded(symbols, idx, mask, probs, scale, s, gate)


def dropped_slot_hint(enc: Encoded, params) -> Tensor | None:
    """Zero-valued additive term for the receiver's dropped slots.

    Its gradient w.r.t. the keep probability of a dropped token is
    ``<dL/d s_hat_i, u_i>`` with ``u_i`` the token the receiver would have
    decoded had it been sent over a clean channel, i.e. the straight-through
    estimate of dL/d mask_i for tokens the transmitter never emits.
    """
    if enc.gate is None:
        return None
    B, M = enc.mask.shape
    flat = enc.features.data.reshape(B, M, -1)
    tx_w, tx_b = _pair(params, "chan.tx")
    rx_w, rx_b = _pair(params, "chan.rx")
    reals = (flat @ tx_w.data + tx_b.data) / enc.scale.reshape(B, 1, 1)
    u = (reals @ rx_w.data + rx_b.data) * (1 - enc.mask)[..., None]
    return enc.gate * Tensor(u)


def decoder_forward(
    received: Tensor, indices: np.ndarray, params, cfg: PipelineConfig, slot_hint: Tensor | None = None
) -> Tensor:
    """Receiver: channel reals -> tokens, zero-fill dropped positions, decode, de-embed (unclamped)."""
    tc = cfg.tubelet
    B = received.shape[0]
    if received.shape[-1] != cfg.c or indices.shape != received.shape[:2]:
        raise DimensionError(f"receiver stage: {received.shape} symbols for {indices.shape} kept tokens")
    tokens = ad.linear(received, *_pair(params, "chan.rx"))
    s_hat = ad.scatter_zeros(tokens, indices, tc.M, axis=1)
    if slot_hint is not None:
        s_hat = s_hat + slot_hint
    s_hat = s_hat.reshape(B, tc.n_t, tc.n_spatial, tc.K)
    z_hat = ms.two_branch_decode(s_hat, params, "dec", tc.n_h, tc.n_w, cfg.n_heads, cfg.L, not cfg.disable_multiscale)
    return deembed_tensor(z_hat, tc, *_pair(params, "deembed"))


def forward(
    frames: Tensor,
    params,
    cfg: PipelineConfig,
    noise: np.ndarray | None = None,
    gamma: float | None = None,
    mask_override=None,
    p_ref=None,
) -> tuple[Tensor, Encoded]:
    """Full differentiable pass; ``noise`` is added to the normalized channel reals."""
    enc = encoder_forward(frames, params, cfg, gamma, mask_override, p_ref)
    rx = enc.symbols if noise is None else enc.symbols + Tensor(np.asarray(noise).reshape(enc.symbols.shape))
    return decoder_forward(rx, enc.indices, params, cfg, dropped_slot_hint(enc, params)), enc


def clip_rate(cfg: PipelineConfig, gamma: float | None = None) -> RateReport:
    tc = cfg.tubelet
    g = 1.0 if cfg.disable_token_selection else (cfg.gamma if gamma is None else gamma)
    return rate_report(g, tc.M, cfg.c, tc.N)


# ---------------------------------------------------------------- single-clip API


def encode(clip: VideoClip, params, cfg: PipelineConfig, gamma: float | None = None):
    """Returns ``(ChannelFrame, mask, RateReport)`` for one clip."""
    with ad.no_grad():
        enc = encoder_forward(Tensor(clip.frames[None]), params, cfg, gamma)
    frame = ChannelFrame(reals_to_complex(enc.symbols.data[0]), scale=float(enc.scale[0]))
    return frame, enc.mask[0], clip_rate(cfg, gamma)


def decode(frame: ChannelFrame, mask, params, cfg: PipelineConfig, clamp: bool = True) -> VideoClip:
    mask = np.asarray(mask).reshape(-1)
    if mask.size != cfg.tubelet.M:
        raise DimensionError(f"mask has {mask.size} entries, grid has {cfg.tubelet.M} tokens")
    idx = np.flatnonzero(mask)[None]
    if frame.symbols.size != idx.shape[1] * cfg.c // 2:
        raise DimensionError(f"frame carries {frame.symbols.size} symbols, mask keeps {idx.shape[1]} tokens")
    reals = complex_to_reals(frame.symbols, cfg.c)[None]
    with ad.no_grad():
        out = decoder_forward(Tensor(reals), idx, params, cfg).data[0]
    return VideoClip(np.clip(out, 0.0, 1.0) if clamp else out)


def eval_seed(clip: VideoClip, snr_db: float) -> int:
    """Noise seed fixed per (clip content, SNR)."""
    h = hashlib.sha256(np.ascontiguousarray(clip.frames).tobytes())
    h.update(repr(float(snr_db)).encode())
    return int.from_bytes(h.digest()[:8], "little")


def roundtrip(clip: VideoClip, params, cfg: PipelineConfig, snr_db: float, seed=None, gamma: float | None = None):
    """encode -> AWGN -> decode; returns ``(reconstruction, MetricReport, RateReport)``."""
    frame, mask, rate = encode(clip, params, cfg, gamma)
    sigma2 = noise_power(snr_db)
    if sigma2 > 0:
        rng = np.random.default_rng(eval_seed(clip, snr_db) if seed is None else seed)
        n = sample_noise(rng, frame.symbols.size, sigma2)
        frame = ChannelFrame(frame.symbols + (n[:, 0] + 1j * n[:, 1]), snr_db, sigma2, frame.scale)
    recon = decode(frame, mask, params, cfg)
    return recon, clip_metrics(clip.frames, recon.frames), rate


def batch_noise(rng: np.random.Generator, B: int, k: int, c: int, snr_db: float) -> np.ndarray | None:
    sigma2 = noise_power(snr_db)
    if sigma2 == 0.0:
        return None
    return np.stack([sample_noise(rng, k * c // 2, sigma2).reshape(k, c) for _ in range(B)])


def mover_overlap(mask: np.ndarray, clip: VideoClip, cfg: PipelineConfig) -> tuple[float, np.ndarray]:
    """Fraction of mover-footprint tokens kept, and the footprint token indicator."""
    if clip.object_mask is None:
        raise ValueError("clip carries no object footprint")
    tc = cfg.tubelet
    fp = clip.object_mask.reshape(tc.n_t, tc.t, tc.n_h, tc.h, tc.n_w, tc.w).any(axis=(1, 3, 5)).reshape(-1)
    hit = int(np.sum(np.asarray(mask).reshape(-1)[fp]))
    return hit / max(int(fp.sum()), 1), fp
