"""Full-reference quality and color-fidelity metrics.

Images are ``(H, W, 3)`` RGB arrays in ``[0, 1]``. Perfect matches yield
``inf`` for the logarithmic scores (PSNR, SRER).
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autodiff import Tensor, no_grad
from .losses import ssim as _ssim_tensor

__all__ = [
    "MetricReport",
    "psnr",
    "rmse",
    "mse",
    "ssim",
    "uqi",
    "srer",
    "sam",
    "angular_error",
    "delta_e2000",
    "ciede2000",
    "srgb_to_lab",
    "evaluate_pair",
]

SRER_FORMULA = "20*log10(||gt||_2 / ||gt - pred||_2)"


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float
    rmse: float
    uqi: float
    srer: float
    sam: float
    angular_mean: float
    angular_median: float
    delta_e: float

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_tuple(self) -> tuple[float, ...]:
        return astuple(self)


def _pair(pred, gt):
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape:
        raise ValueError(f"image shapes differ: {p.shape} vs {g.shape}")
    if p.ndim != 3 or p.shape[-1] != 3:
        raise ValueError(f"expected (H, W, 3) RGB images, got {p.shape}")
    for name, arr in (("prediction", p), ("ground truth", g)):
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError(f"{name} values must be finite and lie in [0, 1]")
    return p, g


def mse(pred, gt) -> float:
    p, g = _pair(pred, gt)
    return float(np.mean((p - g) ** 2))


def psnr(pred, gt) -> float:
    err = mse(pred, gt)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / err)


def rmse(pred, gt) -> float:
    return math.sqrt(mse(pred, gt))


def ssim(pred, gt) -> float:
    """Gaussian-window SSIM (11x11, sigma 1.5) averaged over pixels and channels."""
    p, g = _pair(pred, gt)
    with no_grad():
        a = Tensor(p.transpose(2, 0, 1)[None], dtype=np.float64)
        b = Tensor(g.transpose(2, 0, 1)[None], dtype=np.float64)
        return _ssim_tensor(a, b).item()


def uqi(pred, gt, window: int = 8) -> float:
    """Universal quality index over sliding ``window x window`` blocks (stride 1).

    A block whose denominator vanishes counts as 1 when both images are zero
    there and is skipped otherwise.
    """
    p, g = _pair(pred, gt)
    h, w = p.shape[:2]
    if h < window or w < window:
        raise ValueError(f"image {h}x{w} smaller than the {window}x{window} UQI window")
    scores = []
    for ch in range(3):
        x = sliding_window_view(p[..., ch], (window, window)).reshape(-1, window * window)
        y = sliding_window_view(g[..., ch], (window, window)).reshape(-1, window * window)
        mx = x.mean(axis=1)
        my = y.mean(axis=1)
        dx = x - mx[:, None]
        dy = y - my[:, None]
        n = window * window
        vx = np.where(np.ptp(x, axis=1) == 0, 0.0, (dx * dx).sum(axis=1) / (n - 1))
        vy = np.where(np.ptp(y, axis=1) == 0, 0.0, (dy * dy).sum(axis=1) / (n - 1))
        cxy = (dx * dy).sum(axis=1) / (n - 1)
        var_sum = vx + vy
        mean_sq = mx * mx + my * my
        den = var_sum * mean_sq
        ok = den > 0
        q = np.empty_like(den)
        q[ok] = 4.0 * cxy[ok] * mx[ok] * my[ok] / den[ok]
        both_zero = ~ok & (var_sum == 0) & (mean_sq == 0)
        q[both_zero] = 1.0
        scores.append(q[ok | both_zero])
    values = np.concatenate(scores)
    return float(values.mean()) if values.size else math.nan


def srer(pred, gt) -> float:
    """Signal-to-reconstruction-error ratio in dB, ``20*log10(||gt|| / ||gt - pred||)``."""
    p, g = _pair(pred, gt)
    err = np.linalg.norm(g - p)
    if err == 0.0:
        return math.inf
    signal = np.linalg.norm(g)
    if signal == 0.0:
        return -math.inf
    return 20.0 * math.log10(signal / err)


def _pixel_angles(pred, gt) -> np.ndarray:
    p, g = _pair(pred, gt)
    p = p.reshape(-1, 3)
    g = g.reshape(-1, 3)
    np_ = np.linalg.norm(p, axis=1)
    ng = np.linalg.norm(g, axis=1)
    keep = (np_ > 0) & (ng > 0)
    cos = (p[keep] * g[keep]).sum(axis=1) / (np_[keep] * ng[keep])
    return np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))


def sam(pred, gt) -> float:
    """Mean spectral angle in degrees; pixels with a zero vector are skipped."""
    angles = _pixel_angles(pred, gt)
    return float(angles.mean()) if angles.size else math.nan


def angular_error(pred, gt) -> tuple[float, float]:
    """Mean and median per-pixel RGB angle in degrees."""
    angles = _pixel_angles(pred, gt)
    if not angles.size:
        return math.nan, math.nan
    return float(angles.mean()), float(np.median(angles))


# sRGB (D65) -> XYZ
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_WHITE_D65 = np.array([0.95047, 1.0, 1.08883])


def srgb_to_lab(rgb) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    linear = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    xyz = linear @ _RGB_TO_XYZ.T / _WHITE_D65
    eps = 216.0 / 24389.0
    kappa = 24389.0 / 27.0
    f = np.where(xyz > eps, np.cbrt(xyz), (kappa * xyz + 16.0) / 116.0)
    L = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return np.stack([L, a, b], axis=-1)


def ciede2000(lab1, lab2, kL: float = 1.0, kC: float = 1.0, kH: float = 1.0) -> np.ndarray:
    """CIEDE2000 color difference between Lab arrays of shape ``(..., 3)``."""
    lab1 = np.asarray(lab1, dtype=np.float64)
    lab2 = np.asarray(lab2, dtype=np.float64)
    L1, a1, b1 = lab1[..., 0], lab1[..., 1], lab1[..., 2]
    L2, a2, b2 = lab2[..., 0], lab2[..., 1], lab2[..., 2]

    C1 = np.hypot(a1, b1)
    C2 = np.hypot(a2, b2)
    C_bar = (C1 + C2) / 2.0
    C_bar7 = C_bar**7
    G = 0.5 * (1.0 - np.sqrt(C_bar7 / (C_bar7 + 25.0**7)))
    a1p = (1.0 + G) * a1
    a2p = (1.0 + G) * a2
    C1p = np.hypot(a1p, b1)
    C2p = np.hypot(a2p, b2)
    h1p = np.degrees(np.arctan2(b1, a1p)) % 360.0
    h2p = np.degrees(np.arctan2(b2, a2p)) % 360.0
    h1p = np.where((a1p == 0) & (b1 == 0), 0.0, h1p)
    h2p = np.where((a2p == 0) & (b2 == 0), 0.0, h2p)

    dLp = L2 - L1
    dCp = C2p - C1p
    chroma_zero = (C1p * C2p) == 0
    dh = h2p - h1p
    dh = np.where(dh > 180.0, dh - 360.0, np.where(dh < -180.0, dh + 360.0, dh))
    dh = np.where(chroma_zero, 0.0, dh)
    dHp = 2.0 * np.sqrt(C1p * C2p) * np.sin(np.radians(dh / 2.0))

    Lp_bar = (L1 + L2) / 2.0
    Cp_bar = (C1p + C2p) / 2.0
    hsum = h1p + h2p
    h_bar = np.where(
        np.abs(h1p - h2p) <= 180.0,
        hsum / 2.0,
        np.where(hsum < 360.0, (hsum + 360.0) / 2.0, (hsum - 360.0) / 2.0),
    )
    h_bar = np.where(chroma_zero, hsum, h_bar)

    T = (
        1.0
        - 0.17 * np.cos(np.radians(h_bar - 30.0))
        + 0.24 * np.cos(np.radians(2.0 * h_bar))
        + 0.32 * np.cos(np.radians(3.0 * h_bar + 6.0))
        - 0.20 * np.cos(np.radians(4.0 * h_bar - 63.0))
    )
    d_theta = 30.0 * np.exp(-(((h_bar - 275.0) / 25.0) ** 2))
    Cp_bar7 = Cp_bar**7
    R_C = 2.0 * np.sqrt(Cp_bar7 / (Cp_bar7 + 25.0**7))
    Lm = (Lp_bar - 50.0) ** 2
    S_L = 1.0 + 0.015 * Lm / np.sqrt(20.0 + Lm)
    S_C = 1.0 + 0.045 * Cp_bar
    S_H = 1.0 + 0.015 * Cp_bar * T
    R_T = -np.sin(np.radians(2.0 * d_theta)) * R_C

    tl = dLp / (kL * S_L)
    tc = dCp / (kC * S_C)
    th = dHp / (kH * S_H)
    return np.sqrt(tl * tl + tc * tc + th * th + R_T * tc * th)


def delta_e2000(pred, gt) -> float:
    """Mean CIEDE2000 difference after sRGB -> Lab (D65) conversion."""
    p, g = _pair(pred, gt)
    return float(ciede2000(srgb_to_lab(p), srgb_to_lab(g)).mean())


def evaluate_pair(pred, gt) -> MetricReport:
    angular_mean, angular_median = angular_error(pred, gt)
    return MetricReport(
        psnr=psnr(pred, gt),
        ssim=ssim(pred, gt),
        rmse=rmse(pred, gt),
        uqi=uqi(pred, gt),
        srer=srer(pred, gt),
        sam=sam(pred, gt),
        angular_mean=angular_mean,
        angular_median=angular_median,
        delta_e=delta_e2000(pred, gt),
    )
