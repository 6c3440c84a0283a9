"""Power-normalized complex channel symbols, AWGN, and bandwidth accounting.

Real channel values are paired into complex symbols: even index -> real
part, odd index -> imaginary part. A frame is normalized to unit average
symbol power, so noise power per complex symbol is ``10**(-snr_db/10)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DimensionError
from .token_select import keep_count


@dataclass
class ChannelFrame:
    symbols: np.ndarray  # complex128
    snr_db: float = math.inf
    sigma2: float = 0.0
    scale: float = 1.0  # normalization divisor applied to the raw symbols

    @property
    def power(self) -> float:
        return float(np.mean(np.abs(self.symbols) ** 2))


@dataclass
class RateReport:
    n_complex_symbols: int
    token_payload_symbols: int
    mask_side_info_bits: int
    cbr: float


def noise_power(snr_db: float) -> float:
    return 0.0 if math.isinf(snr_db) and snr_db > 0 else 10.0 ** (-snr_db / 10.0)


def reals_to_complex(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] % 2:
        raise ConfigError(f"odd number of reals ({x.shape[-1]}) cannot be paired into symbols")
    pairs = x.reshape(-1, 2)
    return pairs[:, 0] + 1j * pairs[:, 1]


def complex_to_reals(z: np.ndarray, c: int) -> np.ndarray:
    z = np.asarray(z).reshape(-1)
    out = np.empty((z.size, 2))
    out[:, 0] = z.real
    out[:, 1] = z.imag
    return out.reshape(-1, c)


def normalize_power(x: Tensor) -> tuple[Tensor, np.ndarray]:
    """Scale each leading item of (B, n, c) reals to unit mean complex-symbol power."""
    power = ad.mean(ad.square(x), axis=(-2, -1), keepdims=True) * 2.0
    scale = ad.sqrt(power)
    return x / scale, scale.data.reshape(-1)


def to_channel_symbols(kept_tokens: Tensor, channel_head: tuple[Tensor, Tensor]) -> ChannelFrame:
    weight, bias = channel_head
    c = weight.shape[1]
    if c % 2:
        raise ConfigError(f"channel dim c={c} must be even")
    if kept_tokens.shape[-1] != weight.shape[0]:
        raise DimensionError(f"tokens of dim {kept_tokens.shape[-1]} vs channel head {weight.shape}")
    reals = ad.linear(kept_tokens, weight, bias)
    normed, scale = normalize_power(reals.reshape((1, -1, c)))
    return ChannelFrame(reals_to_complex(normed.data), scale=float(scale[0]))


def sample_noise(rng: np.random.Generator, n_symbols: int, sigma2: float) -> np.ndarray:
    """Complex noise laid out as (n_symbols, 2) reals, variance sigma2/2 per real dimension."""
    return rng.standard_normal((n_symbols, 2)) * math.sqrt(sigma2 / 2.0)


def awgn(frame: ChannelFrame, snr_db: float, rng_seed) -> ChannelFrame:
    sigma2 = noise_power(snr_db)
    if sigma2 == 0.0:
        return replace(frame, symbols=frame.symbols.copy(), snr_db=snr_db, sigma2=0.0)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    n = sample_noise(rng, frame.symbols.size, sigma2)
    noisy = frame.symbols + (n[:, 0] + 1j * n[:, 1])
    return replace(frame, symbols=noisy, snr_db=snr_db, sigma2=sigma2)


def rate_report(gamma: float, M: int, c: int, N: int, mask_bits: int | None = None) -> RateReport:
    if min(M, c, N) <= 0:
        raise ConfigError("M, c and N must be positive")
    kept = keep_count(gamma, M)
    n_sym = kept * c // 2
    return RateReport(
        n_complex_symbols=n_sym,
        token_payload_symbols=n_sym,
        mask_side_info_bits=M if mask_bits is None else mask_bits,
        cbr=n_sym / N,
    )
