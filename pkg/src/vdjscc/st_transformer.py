"""Separated spatial (ST) and temporal (TT) Transformer stacks.

Token grids are shaped ``(..., n_t, S, K)`` with ``S = n_h * n_w``. ST
layers attend across ``S`` within each temporal slice; TT layers attend
across ``n_t`` at each spatial site after the two axes are swapped.
Parameters live in a flat name -> Tensor map under a caller-chosen prefix.
"""

from __future__ import annotations

import math

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError
from .params import ParamStore


def init_layer(store: ParamStore, prefix: str, K: int, mlp_ratio: int = 4) -> None:
    store.ones(f"{prefix}.ln1.gain", (K,))
    store.zeros(f"{prefix}.ln1.bias", (K,))
    for name in ("q", "k", "v", "out"):
        store.linear(f"{prefix}.attn.{name}", K, K)
    store.ones(f"{prefix}.ln2.gain", (K,))
    store.zeros(f"{prefix}.ln2.bias", (K,))
    store.linear(f"{prefix}.mlp.fc1", K, mlp_ratio * K)
    store.linear(f"{prefix}.mlp.fc2", mlp_ratio * K, K)


def init_stack(store: ParamStore, prefix: str, K: int, depth: int, n_t: int, n_spatial: int, mlp_ratio: int = 4):
    """Positional embeddings plus ``depth`` ST layers and ``depth`` TT layers."""
    store.normal(f"{prefix}.pos_spatial", (n_spatial, K))
    store.normal(f"{prefix}.pos_temporal", (n_t, K))
    for i in range(depth):
        init_layer(store, f"{prefix}.st.{i}", K, mlp_ratio)
    for i in range(depth):
        init_layer(store, f"{prefix}.tt.{i}", K, mlp_ratio)


def _lin(x: Tensor, params, name: str) -> Tensor:
    return ad.linear(x, params[f"{name}.weight"], params[f"{name}.bias"])


def attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """Softmax(q k^T / sqrt(d_k)) v over the last two axes."""
    d_k = q.shape[-1]
    scores = ad.matmul(q, k.transpose(*range(k.ndim - 2), k.ndim - 1, k.ndim - 2))
    weights = ad.softmax(scores * (1.0 / math.sqrt(d_k)), axis=-1)
    return ad.matmul(weights, v)


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    *lead, N, K = x.shape
    b = len(lead)
    x = x.reshape(tuple(lead) + (N, n_heads, K // n_heads))
    return x.transpose(*range(b), b + 1, b, b + 2)


def _merge_heads(x: Tensor) -> Tensor:
    *lead, H, N, d = x.shape
    b = len(lead)
    x = x.transpose(*range(b), b + 1, b, b + 2)
    return x.reshape(tuple(lead) + (N, H * d))


def msa(x: Tensor, params, prefix: str, n_heads: int) -> Tensor:
    q = _split_heads(_lin(x, params, f"{prefix}.q"), n_heads)
    k = _split_heads(_lin(x, params, f"{prefix}.k"), n_heads)
    v = _split_heads(_lin(x, params, f"{prefix}.v"), n_heads)
    return _lin(_merge_heads(attention(q, k, v)), params, f"{prefix}.out")


def encoder_layer(f: Tensor, params, prefix: str, n_heads: int) -> Tensor:
    """Pre-norm block: y = MSA(LN(f)) + f ; f' = MLP(LN(y)) + y."""
    K = params[f"{prefix}.ln1.gain"].shape[0]
    if f.shape[-1] != K:
        raise DimensionError(f"{prefix}: tokens have dim {f.shape[-1]}, layer expects {K}")
    if K % n_heads:
        raise DimensionError(f"{prefix}: K={K} not divisible by {n_heads} heads")
    y = msa(ad.layer_norm(f, params[f"{prefix}.ln1.gain"], params[f"{prefix}.ln1.bias"]), params, f"{prefix}.attn", n_heads) + f
    hidden = ad.gelu(_lin(ad.layer_norm(y, params[f"{prefix}.ln2.gain"], params[f"{prefix}.ln2.bias"]), params, f"{prefix}.mlp.fc1"))
    return _lin(hidden, params, f"{prefix}.mlp.fc2") + y


def rearrange(x: Tensor) -> Tensor:
    """Swap the temporal and spatial axes: (..., n_t, S, K) <-> (..., S, n_t, K)."""
    b = x.ndim - 3
    return x.transpose(*range(b), b + 1, b, b + 2)


def _check_grid(x: Tensor, params, prefix: str) -> None:
    pos_s = params[f"{prefix}.pos_spatial"].shape
    pos_t = params[f"{prefix}.pos_temporal"].shape
    if x.ndim < 3 or x.shape[-3:] != (pos_t[0], pos_s[0], pos_s[1]):
        raise DimensionError(f"{prefix}: grid {x.shape} does not match positional embeddings {pos_t}/{pos_s}")


def spatial_stack(x: Tensor, params, prefix: str, n_heads: int, depth: int) -> Tensor:
    x = x + params[f"{prefix}.pos_spatial"]
    for i in range(depth):
        x = encoder_layer(x, params, f"{prefix}.st.{i}", n_heads)
    return x


def temporal_stack(x: Tensor, params, prefix: str, n_heads: int, depth: int) -> Tensor:
    """``x`` is in (..., S, n_t, K) layout."""
    x = x + params[f"{prefix}.pos_temporal"]
    for i in range(depth):
        x = encoder_layer(x, params, f"{prefix}.tt.{i}", n_heads)
    return x


def st_then_tt(z: Tensor, params, prefix: str, n_heads: int, depth: int) -> Tensor:
    _check_grid(z, params, prefix)
    x = spatial_stack(z, params, prefix, n_heads, depth)
    x = temporal_stack(rearrange(x), params, prefix, n_heads, depth)
    return rearrange(x)


def tt_then_st(z: Tensor, params, prefix: str, n_heads: int, depth: int) -> Tensor:
    _check_grid(z, params, prefix)
    x = temporal_stack(rearrange(z), params, prefix, n_heads, depth)
    return spatial_stack(rearrange(x), params, prefix, n_heads, depth)
