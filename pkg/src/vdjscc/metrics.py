"""PSNR and multi-scale SSIM for clips.

MS-SSIM uses an 11-tap Gaussian window (sigma 1.5) in valid mode,
k1=0.01, k2=0.03, 2x2 mean pooling between scales and the standard
five exponent weights; small frames drop the finest-to-coarsest scales
that do not fit and renormalize the remaining weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError

PSNR_CAP_DB = 100.0
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
WINDOW = 11
SIGMA = 1.5
K1, K2 = 0.01, 0.03


@dataclass
class MetricReport:
    psnr_db: float
    ms_ssim: float
    psnr_per_frame: list[float] = field(default_factory=list)
    ms_ssim_per_frame: list[float] = field(default_factory=list)


def psnr(x, x_hat, max_val: float = 1.0) -> float:
    x, x_hat = np.asarray(x, dtype=np.float64), np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise DimensionError(f"psnr: shapes {x.shape} and {x_hat.shape} differ")
    if max_val <= 0:
        raise ValueError("max_val must be positive")
    mse = np.mean((x - x_hat) ** 2)
    if mse == 0:
        return PSNR_CAP_DB
    return float(min(PSNR_CAP_DB, 10.0 * np.log10(max_val**2 / mse)))


def gaussian_window(size: int = WINDOW, sigma: float = SIGMA) -> np.ndarray:
    coords = np.arange(size) - (size - 1) / 2
    g = np.exp(-(coords**2) / (2 * sigma**2))
    return g / g.sum()


def _filter2d(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    """Separable valid-mode filtering of the last two axes."""
    n = win.size
    rows = np.lib.stride_tricks.sliding_window_view(img, n, axis=-2) @ win
    return np.lib.stride_tricks.sliding_window_view(rows, n, axis=-1) @ win


def _ssim_terms(x: np.ndarray, y: np.ndarray, max_val: float) -> tuple[float, float]:
    """(mean SSIM, mean contrast-structure) over all valid window positions."""
    c1, c2 = (K1 * max_val) ** 2, (K2 * max_val) ** 2
    win = gaussian_window()
    mu_x, mu_y = _filter2d(x, win), _filter2d(y, win)
    sxx = _filter2d(x * x, win) - mu_x**2
    syy = _filter2d(y * y, win) - mu_y**2
    sxy = _filter2d(x * y, win) - mu_x * mu_y
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    lum = (2 * mu_x * mu_y + c1) / (mu_x**2 + mu_y**2 + c1)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def max_scales(height: int, width: int) -> int:
    n = 0
    while n < len(MS_SSIM_WEIGHTS) and min(height, width) >= (2**n) * WINDOW:
        n += 1
    return n


def _pool(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[-2] // 2 * 2, img.shape[-1] // 2 * 2
    img = img[..., :h, :w]
    return 0.25 * (img[..., 0::2, 0::2] + img[..., 0::2, 1::2] + img[..., 1::2, 0::2] + img[..., 1::2, 1::2])


def ms_ssim(x, x_hat, scales: int = 5, max_val: float = 1.0) -> float:
    """MS-SSIM of two 2-D images (or C x H x W frames, averaged per channel)."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(x_hat, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"ms_ssim: shapes {x.shape} and {y.shape} differ")
    if x.ndim == 3:
        return float(np.mean([ms_ssim(x[c], y[c], scales, max_val) for c in range(x.shape[0])]))
    if x.ndim != 2:
        raise DimensionError(f"ms_ssim: expected a 2-D image or C x H x W frame, got {x.shape}")
    n = min(scales, max_scales(*x.shape))
    if n < 1:
        raise DimensionError(f"ms_ssim: frame {x.shape} smaller than the {WINDOW}-pixel window")
    weights = np.array(MS_SSIM_WEIGHTS[:n])
    weights = weights / weights.sum()
    result = 1.0
    for j in range(n):
        ssim_j, cs_j = _ssim_terms(x, y, max_val)
        term = ssim_j if j == n - 1 else cs_j
        result *= max(term, 0.0) ** weights[j]
        x, y = _pool(x), _pool(y)
    return float(min(max(result, 0.0), 1.0))


def clip_metrics(x: np.ndarray, x_hat: np.ndarray, max_val: float = 1.0) -> MetricReport:
    """Per-frame PSNR and MS-SSIM of (T, C, H, W) clips, averaged over frames."""
    x, x_hat = np.asarray(x), np.asarray(x_hat)
    if x.shape != x_hat.shape:
        raise DimensionError(f"clip shapes {x.shape} and {x_hat.shape} differ")
    p = [psnr(a, b, max_val) for a, b in zip(x, x_hat)]
    m = [ms_ssim(a, b, max_val=max_val) for a, b in zip(x, x_hat)]
    return MetricReport(float(np.mean(p)), float(np.mean(m)), p, m)
