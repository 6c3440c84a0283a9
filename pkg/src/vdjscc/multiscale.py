"""Two-scale feature extraction with patch merging.

Patch merging concatenates each 2x2 block of spatial tokens, in row-major
order ``(2j,2k), (2j,2k+1), (2j+1,2k), (2j+1,2k+1)``, and maps ``4K -> 2K``.
Reverse merging maps ``2K -> 4K`` and scatters the four chunks back.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import st_transformer as stt
from .autodiff import Tensor
from .errors import DimensionError
from .params import ParamStore


def merge_index(n_h: int, n_w: int) -> np.ndarray:
    """``(n_h/2 * n_w/2, 4)`` spatial indices grouped into merged tokens."""
    if n_h % 2 or n_w % 2:
        raise DimensionError(f"patch merging needs an even grid, got {n_h}x{n_w}")
    j, k = np.meshgrid(np.arange(n_h // 2), np.arange(n_w // 2), indexing="ij")
    j, k = j.reshape(-1, 1), k.reshape(-1, 1)
    dj = np.array([0, 0, 1, 1])
    dk = np.array([0, 1, 0, 1])
    return (2 * j + dj) * n_w + (2 * k + dk)


def init_merge(store: ParamStore, prefix: str, K: int) -> None:
    store.linear(f"{prefix}.merge", 4 * K, 2 * K)
    store.linear(f"{prefix}.reverse", 2 * K, 4 * K)


def patch_merge(f: Tensor, params, prefix: str, n_h: int, n_w: int) -> Tensor:
    """(..., n_t, n_h*n_w, K) -> (..., n_t, n_h*n_w/4, 2K)."""
    if f.shape[-2] != n_h * n_w:
        raise DimensionError(f"{prefix}: {f.shape[-2]} tokens for a {n_h}x{n_w} grid")
    idx = merge_index(n_h, n_w)
    K = f.shape[-1]
    grouped = ad.gather(f, idx.reshape(-1), axis=-2)
    grouped = grouped.reshape(f.shape[:-2] + (idx.shape[0], 4 * K))
    w = params[f"{prefix}.merge.weight"]
    if w.shape[0] != 4 * K:
        raise DimensionError(f"{prefix}: merge expects {w.shape[0] // 4}-dim tokens, got {K}")
    return ad.linear(grouped, w, params[f"{prefix}.merge.bias"])


def patch_reverse_merge(fs: Tensor, params, prefix: str, n_h: int, n_w: int) -> Tensor:
    """(..., n_t, n_h*n_w/4, 2K) -> (..., n_t, n_h*n_w, K)."""
    idx = merge_index(n_h, n_w)
    if fs.shape[-2] != idx.shape[0]:
        raise DimensionError(f"{prefix}: {fs.shape[-2]} merged tokens for a {n_h}x{n_w} grid")
    w = params[f"{prefix}.reverse.weight"]
    if fs.shape[-1] != w.shape[0]:
        raise DimensionError(f"{prefix}: reverse merge expects dim {w.shape[0]}, got {fs.shape[-1]}")
    up = ad.linear(fs, w, params[f"{prefix}.reverse.bias"])
    K = w.shape[1] // 4
    chunks = up.reshape(fs.shape[:-2] + (idx.size, K))
    inverse = np.argsort(idx.reshape(-1))
    return ad.gather(chunks, inverse, axis=-2)


def average(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"branch outputs differ in shape: {a.shape} vs {b.shape}")
    return (a + b) * 0.5


def init_encoder(store: ParamStore, prefix: str, K, depth, n_t, n_h, n_w, mlp_ratio=4, multiscale=True):
    if not multiscale:
        stt.init_stack(store, f"{prefix}.stem", K, 2 * depth, n_t, n_h * n_w, mlp_ratio)
        return
    stt.init_stack(store, f"{prefix}.stem", K, depth, n_t, n_h * n_w, mlp_ratio)
    init_merge(store, prefix, K)
    stt.init_stack(store, f"{prefix}.branch", 2 * K, depth, n_t, n_h * n_w // 4, mlp_ratio)


def init_decoder(store: ParamStore, prefix: str, K, depth, n_t, n_h, n_w, mlp_ratio=4, multiscale=True):
    if not multiscale:
        stt.init_stack(store, f"{prefix}.stem", K, 2 * depth, n_t, n_h * n_w, mlp_ratio)
        return
    stt.init_stack(store, f"{prefix}.full", K, depth, n_t, n_h * n_w, mlp_ratio)
    init_merge(store, prefix, K)
    stt.init_stack(store, f"{prefix}.branch", 2 * K, depth, n_t, n_h * n_w // 4, mlp_ratio)
    stt.init_stack(store, f"{prefix}.tail", K, depth, n_t, n_h * n_w, mlp_ratio)


def two_branch_encode(z: Tensor, params, prefix: str, n_h, n_w, n_heads, depth, multiscale=True) -> Tensor:
    """Shared stem, then the full-resolution output and its merged/upscaled twin are averaged."""
    if not multiscale:
        return stt.st_then_tt(z, params, f"{prefix}.stem", n_heads, 2 * depth)
    f = stt.st_then_tt(z, params, f"{prefix}.stem", n_heads, depth)
    fs = patch_merge(f, params, prefix, n_h, n_w)
    fs = stt.st_then_tt(fs, params, f"{prefix}.branch", n_heads, depth)
    return average(f, patch_reverse_merge(fs, params, prefix, n_h, n_w))


def two_branch_decode(s: Tensor, params, prefix: str, n_h, n_w, n_heads, depth, multiscale=True) -> Tensor:
    """Mirror of :func:`two_branch_encode` with TT-first stacks and a shared tail."""
    if not multiscale:
        return stt.tt_then_st(s, params, f"{prefix}.stem", n_heads, 2 * depth)
    a = stt.tt_then_st(s, params, f"{prefix}.full", n_heads, depth)
    bs = patch_merge(s, params, prefix, n_h, n_w)
    bs = stt.tt_then_st(bs, params, f"{prefix}.branch", n_heads, depth)
    merged = average(a, patch_reverse_merge(bs, params, prefix, n_h, n_w))
    return stt.tt_then_st(merged, params, f"{prefix}.tail", n_heads, depth)
