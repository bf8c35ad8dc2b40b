"""Image I/O, low/high dataset pairing and seeded random crops."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


class DatasetError(ValueError):
    pass


def read_image(path: str | Path) -> np.ndarray:
    """Load an 8-bit image as float32 RGB in ``[0, 1]`` (``v / 255``, no gamma handling)."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise DatasetError(f"cannot read image {path}: {exc}") from exc
    return arr.astype(np.float32) / 255.0


def quantize(image: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_image(path: str | Path, image: np.ndarray) -> None:
    """Write a float image in ``[0, 1]`` (``(H, W)`` or ``(H, W, 3)``) as 8-bit PNG."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(quantize(image)).save(path, format="PNG")


def _list_images(directory: Path) -> dict[str, Path]:
    return {p.stem: p for p in sorted(directory.iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES}


@dataclass
class DatasetIndex:
    """``(low, high)`` path pairs matched by file stem across two directories."""

    pairs: list[tuple[Path, Path]]
    unmatched: list[Path] = field(default_factory=list)

    @classmethod
    def from_dirs(cls, low_dir: str | Path, high_dir: str | Path, check_sizes: bool = True) -> "DatasetIndex":
        low_dir, high_dir = Path(low_dir), Path(high_dir)
        for d in (low_dir, high_dir):
            if not d.is_dir():
                raise DatasetError(f"not a directory: {d}")
        low = _list_images(low_dir)
        high = _list_images(high_dir)
        names = sorted(set(low) & set(high))
        unmatched = [low[n] for n in sorted(set(low) - set(high))] + [high[n] for n in sorted(set(high) - set(low))]
        for path in unmatched:
            logger.warning("no counterpart for %s", path)
        index = cls([(low[n], high[n]) for n in names], unmatched)
        if check_sizes:
            for lo, hi in index.pairs:
                with Image.open(lo) as a, Image.open(hi) as b:
                    if a.size != b.size:
                        raise DatasetError(f"size mismatch: {lo} is {a.size}, {hi} is {b.size}")
        return index

    @classmethod
    def from_root(cls, root: str | Path) -> "DatasetIndex":
        root = Path(root)
        return cls.from_dirs(root / "low", root / "high")

    def __len__(self) -> int:
        return len(self.pairs)

    def load(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(read_image(lo), read_image(hi)) for lo, hi in self.pairs]


def as_pairs(data) -> list[tuple[np.ndarray, np.ndarray]]:
    """Accept a :class:`DatasetIndex` or a sequence of ``(low, high)`` arrays."""
    pairs = data.load() if isinstance(data, DatasetIndex) else [(np.asarray(a), np.asarray(b)) for a, b in data]
    if not pairs:
        raise DatasetError("dataset is empty")
    for k, (lo, hi) in enumerate(pairs):
        if lo.shape != hi.shape or lo.ndim != 3 or lo.shape[-1] != 3:
            raise DatasetError(f"pair {k}: expected matching (H, W, 3) images, got {lo.shape} and {hi.shape}")
    return [(lo.astype(np.float32), hi.astype(np.float32)) for lo, hi in pairs]


def sample_batch(pairs, step: int, batch_size: int, crop_size: int, seed: int):
    """Batch for one training step as ``(low, high)`` arrays of shape ``(B, crop, crop, 3)``.

    Images are taken round-robin and every crop offset is drawn from a
    generator seeded by ``(seed, step)``, so the batch depends only on those.
    """
    rng = np.random.default_rng([seed, step])
    lows, highs = [], []
    for k in range(batch_size):
        lo, hi = pairs[(step * batch_size + k) % len(pairs)]
        h, w = lo.shape[:2]
        y = int(rng.integers(0, h - crop_size + 1))
        x = int(rng.integers(0, w - crop_size + 1))
        lows.append(lo[y : y + crop_size, x : x + crop_size])
        highs.append(hi[y : y + crop_size, x : x + crop_size])
    return np.stack(lows), np.stack(highs)
