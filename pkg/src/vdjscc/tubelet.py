"""Tubelet embedding: clip <-> token grid.

Tube ``(i, j, k)`` covers frames ``[i*t, (i+1)*t)``, rows ``[j*h, (j+1)*h)``
and columns ``[k*w, (k+1)*w)``. Its pixels are flattened frame-major, then
channel, row, column, and its spatial index is ``j * n_w + k``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import TubeletConfig
from .errors import DimensionError
from .video_io import VideoClip


@dataclass
class TokenGrid:
    values: Tensor  # (n_t, n_h * n_w, K), optionally with a leading batch axis
    n_t: int
    n_h: int
    n_w: int

    @property
    def K(self) -> int:
        return self.values.shape[-1]


def _check_clip(shape, cfg: TubeletConfig) -> None:
    T, C, H, W = shape[-4:]
    if T % cfg.t or H % cfg.h or W % cfg.w:
        raise DimensionError(f"clip {T}x{H}x{W} not divisible by tube {cfg.t}x{cfg.h}x{cfg.w}")
    if C != cfg.C:
        raise DimensionError(f"clip has {C} channels, config expects {cfg.C}")


def to_tubes(frames: Tensor, cfg: TubeletConfig) -> Tensor:
    """(..., T, C, H, W) -> (..., n_t, n_h*n_w, t*C*h*w)."""
    _check_clip(frames.shape, cfg)
    lead = frames.shape[:-4]
    T, C, H, W = frames.shape[-4:]
    t, h, w = cfg.t, cfg.h, cfg.w
    nt, nh, nw = T // t, H // h, W // w
    x = frames.reshape(lead + (nt, t, C, nh, h, nw, w))
    b = len(lead)
    x = x.transpose(*range(b), b + 0, b + 3, b + 5, b + 1, b + 2, b + 4, b + 6)
    return x.reshape(lead + (nt, nh * nw, t * C * h * w))


def from_tubes(tubes: Tensor, cfg: TubeletConfig) -> Tensor:
    """Inverse of :func:`to_tubes` for the clip size in ``cfg``."""
    lead = tubes.shape[:-3]
    t, h, w, C = cfg.t, cfg.h, cfg.w, cfg.C
    nt, nh, nw = cfg.n_t, cfg.n_h, cfg.n_w
    if tubes.shape[-3:] != (nt, nh * nw, cfg.tube_dim):
        raise DimensionError(f"tubes {tubes.shape[-3:]} do not match grid {(nt, nh * nw, cfg.tube_dim)}")
    b = len(lead)
    x = tubes.reshape(lead + (nt, nh, nw, t, C, h, w))
    x = x.transpose(*range(b), b + 0, b + 3, b + 4, b + 1, b + 5, b + 2, b + 6)
    return x.reshape(lead + (nt * t, C, nh * h, nw * w))


def embed_tensor(frames: Tensor, cfg: TubeletConfig, weight: Tensor, bias: Tensor | None) -> Tensor:
    return ad.linear(to_tubes(frames, cfg), weight, bias)


def deembed_tensor(tokens: Tensor, cfg: TubeletConfig, weight: Tensor, bias: Tensor | None) -> Tensor:
    if tokens.shape[-2:] != (cfg.n_spatial, weight.shape[0]) or tokens.shape[-3] != cfg.n_t:
        raise DimensionError(f"token grid {tokens.shape} inconsistent with config {cfg}")
    return from_tubes(ad.linear(tokens, weight, bias), cfg)


def embed(clip: VideoClip, cfg: TubeletConfig, proj: tuple[Tensor, Tensor | None]) -> TokenGrid:
    weight, bias = proj
    values = embed_tensor(Tensor(clip.frames), cfg, weight, bias)
    T, _, H, W = clip.shape
    return TokenGrid(values, T // cfg.t, H // cfg.h, W // cfg.w)


def deembed(tokens: TokenGrid, cfg: TubeletConfig, proj: tuple[Tensor, Tensor | None], clamp: bool = True) -> VideoClip:
    weight, bias = proj
    if (tokens.n_t, tokens.n_h, tokens.n_w) != (cfg.n_t, cfg.n_h, cfg.n_w):
        raise DimensionError(f"grid {tokens.n_t}x{tokens.n_h}x{tokens.n_w} does not match config")
    frames = deembed_tensor(tokens.values, cfg, weight, bias).data
    if clamp:
        frames = np.clip(frames, 0.0, 1.0)
    return VideoClip(frames)
