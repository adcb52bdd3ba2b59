"""Image- and flow-quality metrics on the [0,1] frame convention.

PSNR is capped at 99 dB so perfect samples keep aggregates finite.
SSIM uses the standard 11x11 Gaussian window (sigma 1.5, K1=0.01,
K2=0.03, dynamic range 1) evaluated on valid window positions only,
averaged over channels then pixels.  The interpolation-error metric is the
root-mean-square difference expressed on the 0-255 scale.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def _check_pair(pred, gt, name):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ContractViolation(f"{name}: shapes differ, {pred.shape} vs {gt.shape}")
    return pred, gt


def psnr(pred, gt) -> float:
    """Peak signal-to-noise ratio in dB on the unit dynamic range."""
    pred, gt = _check_pair(pred, gt, "psnr")
    mse = float(np.mean((pred - gt) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def _gaussian_window(size, sigma):
    r = size // 2
    g = np.exp(-np.arange(-r, r + 1, dtype=np.float64) ** 2 / (2 * sigma**2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(pred, gt, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean structural similarity over valid 11x11 windows and channels."""
    pred, gt = _check_pair(pred, gt, "ssim")
    if pred.ndim == 2:
        pred, gt = pred[None], gt[None]
    h, w = pred.shape[1:]
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ContractViolation(f"ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} inputs, got {h}x{w}")
    win = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = k1**2
    c2 = k2**2

    def windowed_mean(x):
        view = np.lib.stride_tricks.sliding_window_view(x, (SSIM_WINDOW, SSIM_WINDOW), axis=(1, 2))
        return np.tensordot(view, win, axes=([3, 4], [0, 1]))

    mu_p = windowed_mean(pred)
    mu_g = windowed_mean(gt)
    var_p = windowed_mean(pred * pred) - mu_p**2
    var_g = windowed_mean(gt * gt) - mu_g**2
    cov = windowed_mean(pred * gt) - mu_p * mu_g
    smap = ((2 * mu_p * mu_g + c1) * (2 * cov + c2)) / ((mu_p**2 + mu_g**2 + c1) * (var_p + var_g + c2))
    return float(smap.mean())


def interpolation_error(pred, gt) -> float:
    """Root-mean-square difference on the 0-255 scale."""
    pred, gt = _check_pair(pred, gt, "interpolation_error")
    return float(255.0 * np.sqrt(np.mean((pred - gt) ** 2)))


def epe(pred, gt) -> float:
    """Mean per-pixel Euclidean distance between two flow fields."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.shape[0] != 2:
        raise ContractViolation(f"epe: expected matching [2,H,W] fields, got {pred.shape} vs {gt.shape}")
    d = pred - gt
    return float(np.mean(np.sqrt(d[0] ** 2 + d[1] ** 2)))
