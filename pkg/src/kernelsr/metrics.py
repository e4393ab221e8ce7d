"""Full-reference quality metrics: PSNR and SSIM for unit-range images."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ParameterError
from .imagecore import to_luma

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class MetricReport:
    id: str
    psnr_db: float
    ssim: float


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ParameterError(f"shape mismatch: {a.shape} vs {b.shape}")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR in dB with peak 1.0; ``math.inf`` for identical images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _same_shape(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window_1d(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - size // 2
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _valid_filter(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable window, then trim to positions where it fits entirely
    r = len(g) // 2
    out = correlate1d(correlate1d(img, g, axis=0, mode="constant"), g, axis=1, mode="constant")
    return out[r:img.shape[0] - r, r:img.shape[1] - r]


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Local SSIM over every valid 11x11 window of the luma images."""
    a = to_luma(np.asarray(a, dtype=np.float64))
    b = to_luma(np.asarray(b, dtype=np.float64))
    _same_shape(a, b)
    if min(a.shape) < SSIM_WINDOW:
        raise ParameterError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape}")
    g = gaussian_window_1d()
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    mu_a = _valid_filter(a, g)
    mu_b = _valid_filter(b, g)
    var_a = _valid_filter(a * a, g) - mu_a * mu_a
    var_b = _valid_filter(b * b, g) - mu_b * mu_b
    cov = _valid_filter(a * b, g) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean SSIM (Gaussian window 11, sigma 1.5, K1=0.01, K2=0.03)."""
    return float(np.mean(ssim_map(a, b)))


def evaluate_pair(pair_id: str, test: np.ndarray, reference: np.ndarray) -> MetricReport:
    return MetricReport(pair_id, psnr(test, reference), ssim(test, reference))
