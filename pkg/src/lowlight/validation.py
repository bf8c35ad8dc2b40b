"""Input checks shared by the estimators."""

import numpy as np

__all__ = ["check_image", "check_images", "check_image_pairs"]


def check_image(image, name="image"):
    """Return ``image`` as a float32 ``(H, W, 3)`` array in ``[0, 1]``.

    ``uint8`` input is scaled by 1/255. Float input must already be in range.
    """
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[-1] != 3:
        raise ValueError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if arr.dtype == np.uint8:
        return arr.astype(np.float32) / 255.0
    if not np.issubdtype(arr.dtype, np.floating):
        raise TypeError(f"{name} must be uint8 or floating point, got {arr.dtype}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name} values must lie in [0, 1]")
    return arr.astype(np.float32)


def check_images(X, name="X"):
    """Accept one image, a ``(N, H, W, 3)`` array or a list of images; return a list."""
    if isinstance(X, np.ndarray) and X.ndim == 3:
        X = [X]
    if isinstance(X, np.ndarray) and X.ndim != 4:
        raise ValueError(f"{name} must be an image, a (N, H, W, 3) array or a list of images")
    images = [check_image(x, f"{name}[{i}]") for i, x in enumerate(X)]
    if not images:
        raise ValueError(f"{name} is empty")
    return images


def check_image_pairs(X, y):
    low = check_images(X, "X")
    high = check_images(y, "y")
    if len(low) != len(high):
        raise ValueError(f"X and y hold {len(low)} and {len(high)} images")
    for i, (a, b) in enumerate(zip(low, high)):
        if a.shape != b.shape:
            raise ValueError(f"pair {i}: X shape {a.shape} != y shape {b.shape}")
    return list(zip(low, high))
