"""RGB <-> HSV conversion on ``[..., 3]`` float arrays in ``[0, 1]``.

Hue is normalized to ``[0, 1)`` (degrees / 360) and defined as 0 wherever
saturation is 0.
"""

import numpy as np

__all__ = ["rgb_to_hsv", "hsv_to_rgb", "replace_value_channel"]


def _check_unit_range(image, name):
    arr = np.asarray(image)
    if arr.ndim < 1 or arr.shape[-1] != 3:
        raise ValueError(f"{name} must have a trailing channel axis of size 3, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    lo, hi = float(arr.min(initial=0.0)), float(arr.max(initial=0.0))
    if lo < 0.0 or hi > 1.0:
        raise ValueError(f"{name} values must lie in [0, 1], got range [{lo:.6g}, {hi:.6g}]")
    return arr


def _out_dtype(arr):
    return arr.dtype if arr.dtype in (np.float32, np.float64) else np.float64


def rgb_to_hsv(image):
    """Hexcone RGB -> HSV.

    Parameters
    ----------
    image : array_like, shape (..., 3)
        RGB values in ``[0, 1]``.

    Returns
    -------
    ndarray, shape (..., 3)
        ``(H, S, V)`` with ``V = max(R, G, B)``, ``S = (V - min) / V`` (0 when
        ``V == 0``) and ``H`` in ``[0, 1)``.
    """
    arr = _check_unit_range(image, "RGB image")
    dtype = _out_dtype(arr)
    rgb = arr.astype(np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    c = v - rgb.min(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(v > 0, c / v, 0.0)
        safe_c = np.where(c > 0, c, 1.0)
        h_r = ((g - b) / safe_c) % 6.0
        h_g = (b - r) / safe_c + 2.0
        h_b = (r - g) / safe_c + 4.0
    h = np.where(v == r, h_r, np.where(v == g, h_g, h_b)) / 6.0
    h = np.where(c > 0, h, 0.0)
    hsv = np.stack([h, s, v], axis=-1).astype(dtype)
    hue = hsv[..., 0]
    hue[hue >= 1.0] = 0.0
    # V is taken straight from the input so it equals max(R, G, B) bit for bit
    hsv[..., 2] = arr.max(axis=-1)
    return hsv


def hsv_to_rgb(image):
    """Inverse hexcone HSV -> RGB; the result is clamped to ``[0, 1]``."""
    arr = np.asarray(image)
    if arr.ndim < 1 or arr.shape[-1] != 3:
        raise ValueError(f"HSV image must have a trailing channel axis of size 3, got shape {arr.shape}")
    arr = _check_unit_range(arr, "HSV image")
    dtype = _out_dtype(arr)
    hsv = arr.astype(np.float64)
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    h6 = (h % 1.0) * 6.0
    sector = np.floor(h6)
    f = h6 - sector
    sector = sector.astype(np.int64) % 6
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.choose(sector, [v, q, p, p, t, v])
    g = np.choose(sector, [t, v, v, q, p, p])
    b = np.choose(sector, [p, p, t, v, v, q])
    rgb = np.stack([r, g, b], axis=-1)
    return np.clip(rgb, 0.0, 1.0).astype(dtype)


def replace_value_channel(original, new_v):
    """Return a copy of ``original`` (HSV, ``[..., 3]``) with its V plane swapped for ``new_v``."""
    hsv = np.asarray(original)
    v = np.asarray(new_v)
    if hsv.shape[-1] != 3 or v.shape != hsv.shape[:-1]:
        raise ValueError(f"V plane shape {v.shape} does not match HSV image shape {hsv.shape}")
    out = hsv.copy()
    out[..., 2] = v
    return out
