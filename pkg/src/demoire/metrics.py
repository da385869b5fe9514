"""Frame and clip quality metrics."""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from .align import warp
from .image import to_luma

PSNR_CAP = 99.0


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def l1(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean(np.abs(a - b)))


def psnr(a, b) -> float:
    """PSNR in dB with peak 1.0 over all channels; zero error gives 99 dB."""
    err = mse(a, b)
    if err == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / err))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(a, b, k1: float = 0.01, k2: float = 0.03) -> float:
    """Single-scale SSIM on luma: 11x11 Gaussian window (sigma 1.5), valid positions only."""
    a, b = _pair(a, b)
    if a.ndim == 3:
        a, b = to_luma(a).astype(np.float64), to_luma(b).astype(np.float64)
    if min(a.shape[:2]) < 11:
        raise ValueError(f"SSIM needs at least 11x11 pixels, got {a.shape[:2]}")
    win = _gaussian_window()

    def filt(x):
        return ndimage.correlate(x, win, mode="constant")[5:-5, 5:-5]

    c1, c2 = k1 ** 2, k2 ** 2
    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a ** 2
    var_b = filt(b * b) - mu_b ** 2
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def temporal_consistency(outputs, fields, border: int = 8) -> float:
    """Mean |warp(out_k, field_k) - out_{k+1}| over interior pixels.

    ``fields[k]`` aligns output k onto output k+1.
    """
    outputs = list(outputs)
    fields = list(fields)
    if len(outputs) < 2:
        raise ValueError("temporal consistency needs at least two frames")
    if len(fields) != len(outputs) - 1:
        raise ValueError(f"{len(outputs)} frames need {len(outputs) - 1} fields, got {len(fields)}")
    diffs = []
    for k, fld in enumerate(fields):
        moved = warp(outputs[k], fld).astype(np.float64)
        nxt = np.asarray(outputs[k + 1], dtype=np.float64)
        inner = (slice(border, -border or None), slice(border, -border or None))
        diffs.append(np.mean(np.abs(moved - nxt)[inner]))
    return float(np.mean(diffs))
