"""Content-adaptive token selection.

Tokens are scored from their own (local) features concatenated with the
per-slice average (global) features; the ``ceil(gamma * M)`` highest
scoring tokens over the whole clip are kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DimensionError
from .params import ParamStore


@dataclass
class SelectionResult:
    mask: np.ndarray  # (M,) 0/1
    kept_tokens: Tensor  # (k, K), ascending token index
    keep_probs: np.ndarray  # (M,)
    gamma: float

    @property
    def kept_indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)


def init_selector(store: ParamStore, prefix: str, K: int) -> None:
    half = K // 2
    store.ones(f"{prefix}.split_ln.gain", (K,))
    store.zeros(f"{prefix}.split_ln.bias", (K,))
    store.linear(f"{prefix}.split", K, half)
    store.linear(f"{prefix}.score1", K, half)
    store.linear(f"{prefix}.score2", half, 1)


def split_features(s: Tensor, params, prefix: str) -> tuple[Tensor, Tensor]:
    """(..., n_t, S, K) -> local (..., n_t, S, K/2), global (..., n_t, 1, K/2)."""
    gain = params[f"{prefix}.split_ln.gain"]
    if s.shape[-1] != gain.shape[0]:
        raise DimensionError(f"{prefix}: tokens have dim {s.shape[-1]}, selector expects {gain.shape[0]}")
    x = ad.layer_norm(s, gain, params[f"{prefix}.split_ln.bias"])
    local = ad.gelu(ad.linear(x, params[f"{prefix}.split.weight"], params[f"{prefix}.split.bias"]))
    return local, ad.mean(local, axis=-2, keepdims=True)


def score_logits(local: Tensor, global_: Tensor, params, prefix: str) -> Tensor:
    if local.shape[:-2] != global_.shape[:-2] or global_.shape[-2] != 1 or local.shape[-1] != global_.shape[-1]:
        raise DimensionError(f"{prefix}: local {local.shape} and global {global_.shape} are inconsistent")
    g = ad.broadcast_to(global_, local.shape)
    feats = ad.concat([local, g], axis=-1)
    h = ad.gelu(ad.linear(feats, params[f"{prefix}.score1.weight"], params[f"{prefix}.score1.bias"]))
    return ad.linear(h, params[f"{prefix}.score2.weight"], params[f"{prefix}.score2.bias"])


def score_tokens(local: Tensor, global_: Tensor, params, prefix: str) -> Tensor:
    """Keep probabilities in (0, 1), shape (..., n_t, S, 1)."""
    return ad.sigmoid(score_logits(local, global_, params, prefix))


def keep_count(gamma: float, M: int) -> int:
    """``ceil(gamma * M)`` with ``gamma`` read as its shortest decimal repr (0.4 -> 2/5, not the binary float)."""
    if not 0.0 < gamma <= 1.0:
        raise ConfigError(f"gamma={gamma} must lie in (0, 1]")
    return math.ceil(Fraction(repr(float(gamma))) * M)


def topk_indices(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest entries per row, ties to the lower index, returned ascending."""
    scores = np.atleast_2d(scores)
    order = np.argsort(-scores, axis=-1, kind="stable")[..., :k]
    return np.sort(order, axis=-1)


def select(s: Tensor, p_keep, gamma: float) -> SelectionResult:
    """Keep the ``ceil(gamma*M)`` highest-probability tokens of one clip's grid."""
    p = np.asarray(p_keep.data if isinstance(p_keep, Tensor) else p_keep, dtype=np.float64).reshape(-1)
    flat = s.reshape(-1, s.shape[-1])
    M = flat.shape[0]
    if p.size != M:
        raise DimensionError(f"{p.size} keep probabilities for {M} tokens")
    k = keep_count(gamma, M)
    idx = topk_indices(p, k)[0]
    mask = np.zeros(M, dtype=np.int64)
    mask[idx] = 1
    return SelectionResult(mask, ad.gather(flat, idx, axis=0), p, gamma)


def straight_through_mask(s: Tensor, mask, p_keep: Tensor | None = None) -> Tensor:
    """Forward value ``s * mask``; gradients pass unchanged at kept tokens only.

    With ``p_keep`` the multiplier becomes ``mask + p - stop_grad(p)``: the
    value is unchanged but the scorer receives ``sum(grad * s)`` per token.
    ``mask`` / ``p_keep`` broadcast over the last (feature) axis.
    """
    m = Tensor(np.asarray(mask, dtype=np.float64).reshape(s.shape[:-1] + (1,)))
    if p_keep is None:
        return s * m
    p = p_keep.reshape(s.shape[:-1] + (1,))
    return s * (m + (p - p.detach()))


def pack_mask(mask) -> bytes:
    """Length-M bitstring, most significant bit first, zero-padded to a byte boundary."""
    return np.packbits(np.asarray(mask, dtype=np.uint8).reshape(-1)).tobytes()


def unpack_mask(blob: bytes, M: int) -> np.ndarray:
    if len(blob) * 8 < M:
        raise DimensionError(f"mask blob holds {len(blob) * 8} bits, need {M}")
    return np.unpackbits(np.frombuffer(blob, dtype=np.uint8), count=M).astype(np.int64)
