"""Training objectives for the enhancer (stage one) and restorer (stage two)."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = [
    "LossReport",
    "FeatureExtractor",
    "gradient_map",
    "ssim",
    "gaussian_window",
    "perceptual_loss",
    "stage1_loss",
    "stage2_loss",
    "VGG16_CONV_INDICES",
]

SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass
class LossReport:
    """Composite loss with its per-term breakdown.

    ``signs`` records how each term enters the total (the SSIM similarity
    enters negated), so ``total == sum(signs[k] * terms[k])``.
    """

    total: Tensor
    terms: dict[str, Tensor]
    signs: dict[str, float] = field(default_factory=dict)

    def values(self) -> dict[str, float]:
        out = {k: v.item() for k, v in self.terms.items()}
        out["total"] = self.total.item()
        return out

    def signed_sum(self) -> float:
        return sum(self.signs.get(k, 1.0) * v.item() for k, v in self.terms.items())


def gradient_map(image: Tensor) -> tuple[Tensor, Tensor]:
    """Forward differences along width (horizontal) and height (vertical).

    The last column of the horizontal map and the last row of the vertical
    map are zero, so both maps keep the input shape.
    """
    if image.ndim != 4:
        raise ValueError(f"gradient_map expects [N,C,H,W], got {image.shape}")
    n, c, h, w = image.shape
    if h < 2 or w < 2:
        raise ValueError(f"gradient_map needs H,W >= 2, got {h}x{w}")
    zero_col = Tensor(np.zeros((n, c, h, 1)), dtype=image.dtype)
    zero_row = Tensor(np.zeros((n, c, 1, w)), dtype=image.dtype)
    dh = ad.concat([image[:, :, :, 1:] - image[:, :, :, :-1], zero_col], axis=3)
    dv = ad.concat([image[:, :, 1:, :] - image[:, :, :-1, :], zero_row], axis=2)
    return dh, dv


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def ssim(a: Tensor, b: Tensor, window_size: int = 11, sigma: float = 1.5, data_range: float = 1.0,
         return_map: bool = False):
    """Mean structural similarity over all pixels and channels.

    Local statistics use an ``window_size`` Gaussian window applied to the
    reflection-padded inputs, so the SSIM map has the input's shape.
    """
    if a.shape != b.shape:
        raise ValueError(f"ssim: shape mismatch {a.shape} vs {b.shape}")
    if a.ndim != 4:
        raise ValueError(f"ssim expects [N,C,H,W], got {a.shape}")
    n, c, h, w = a.shape
    pad = window_size // 2
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    kernel = Tensor(gaussian_window(window_size, sigma)[None, None], dtype=a.dtype)

    pa = ad.reflect_pad(a.reshape(n * c, 1, h, w), pad)
    pb = ad.reflect_pad(b.reshape(n * c, 1, h, w), pad)

    def blur(t):
        return ad.conv2d(t, kernel)

    mu_a = blur(pa)
    mu_b = blur(pb)
    mu_ab = mu_a * mu_b
    mu_aa = mu_a * mu_a
    mu_bb = mu_b * mu_b
    var_a = blur(pa * pa) - mu_aa
    var_b = blur(pb * pb) - mu_bb
    cov = blur(pa * pb) - mu_ab

    numerator = (2.0 * mu_ab + c1) * (2.0 * cov + c2)
    denominator = (mu_aa + mu_bb + c1) * (var_a + var_b + c2)
    ssim_map = (numerator / denominator).reshape(n, c, h, w)
    value = ssim_map.mean()
    if return_map:
        return value, ssim_map
    return value


# torchvision's vgg16().features layout: conv indices; a ReLU follows each conv
# and max-pools sit at 4, 9, 16, 23, 30.
VGG16_CONV_INDICES = (0, 2, 5, 7, 10, 12, 14, 17, 19, 21, 24, 26, 28)
VGG16_POOL_INDICES = (4, 9, 16, 23, 30)


class FeatureExtractor:
    """Fixed convolutional feature network used by the perceptual loss.

    ``layers`` is a sequence of ``("conv", weight, bias, stride, padding)``,
    ``("relu",)`` and ``("pool",)`` entries. The weights never receive
    updates but gradients flow through them to the input.
    """

    def __init__(self, layers, in_channels: int = 3):
        self.layers = []
        for layer in layers:
            if layer[0] == "conv":
                _, weight, bias, stride, padding = layer
                weight = Tensor(np.asarray(weight, dtype=np.float32), dtype=np.float32)
                bias = None if bias is None else Tensor(np.asarray(bias, dtype=np.float32), dtype=np.float32)
                self.layers.append(("conv", weight, bias, int(stride), int(padding)))
            elif layer[0] in ("relu", "pool"):
                self.layers.append((layer[0],))
            else:
                raise ValueError(f"unknown layer kind {layer[0]!r}")
        self.in_channels = in_channels

    @classmethod
    def default(cls, seed: int = 0) -> "FeatureExtractor":
        """Seeded 4-layer conv stack 3->16->32->64->64 with two stride-2 stages."""
        rng = np.random.default_rng(seed)
        spec = [(16, 3, 1), (32, 16, 2), (64, 32, 2), (64, 64, 1)]
        layers = []
        for cout, cin, stride in spec:
            weight = rng.normal(0.0, np.sqrt(2.0 / (cin * 9)), size=(cout, cin, 3, 3))
            layers.append(("conv", weight, np.zeros(cout), stride, 1))
            layers.append(("relu",))
        return cls(layers)

    @classmethod
    def from_vgg16(cls, tensors: dict[str, np.ndarray], tap: int | None = None) -> "FeatureExtractor":
        """Build from VGG16 ``features.{i}.weight/bias`` arrays, truncated after index ``tap``.

        The default tap is the deepest pre-pooling ReLU whose conv is present.
        """
        contiguous = []
        for i in VGG16_CONV_INDICES:
            if f"features.{i}.weight" not in tensors:
                break
            contiguous.append(i)
        if not contiguous:
            raise ValueError("VGG16 weights must contain at least features.0.weight")
        if tap is None:
            tap = max(p - 1 for p in VGG16_POOL_INDICES if p - 2 in contiguous) if contiguous[-1] >= 2 else 1
        missing = [i for i in VGG16_CONV_INDICES if i <= tap and i not in contiguous]
        if missing:
            raise ValueError(f"tap {tap} needs conv layers {missing} missing from the weights file")
        layers = []
        for idx in range(tap + 1):
            if idx in VGG16_CONV_INDICES:
                layers.append(("conv", tensors[f"features.{idx}.weight"], tensors.get(f"features.{idx}.bias"), 1, 1))
            elif idx in VGG16_POOL_INDICES:
                layers.append(("pool",))
            else:
                layers.append(("relu",))
        return cls(layers, in_channels=int(np.asarray(tensors["features.0.weight"]).shape[1]))

    @classmethod
    def from_file(cls, path: str | Path, tap: int | None = None) -> "FeatureExtractor":
        from .checkpoint import load_checkpoint

        ckpt = load_checkpoint(path)
        return cls.from_vgg16({k: v.data for k, v in ckpt.tensors.items()}, tap=tap)

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(f"feature extractor expects [N,{self.in_channels},H,W], got {x.shape}")
        for layer in self.layers:
            kind = layer[0]
            if kind == "conv":
                _, weight, bias, stride, padding = layer
                x = ad.conv2d(x, weight, bias, stride=stride, padding=padding)
            elif kind == "relu":
                x = ad.relu(x)
            else:
                x = ad.max_pool2x2(x)
        return x


def _match_channels(x: Tensor, channels: int) -> Tensor:
    if x.shape[1] == channels:
        return x
    if x.shape[1] == 1:
        return ad.concat([x] * channels, axis=1)
    raise ValueError(f"cannot feed {x.shape[1]}-channel input to a {channels}-channel extractor")


def perceptual_loss(a: Tensor, b: Tensor, extractor: FeatureExtractor) -> Tensor:
    """``||F(a) - F(b)||^2 / (C*H*W)`` on feature maps, averaged over the batch."""
    if a.shape != b.shape:
        raise ValueError(f"perceptual_loss: shape mismatch {a.shape} vs {b.shape}")
    fa = extractor(_match_channels(a, extractor.in_channels))
    fb = extractor(_match_channels(b, extractor.in_channels))
    return ad.square(fa - fb).mean()


def stage1_loss(v_out: Tensor, v_high: Tensor, extractor: FeatureExtractor,
                with_ssim: bool = False) -> LossReport:
    """L1 + L1 on gradient maps + perceptual distance, optionally minus SSIM."""
    if v_out.shape != v_high.shape:
        raise ValueError(f"stage1_loss: shape mismatch {v_out.shape} vs {v_high.shape}")
    l1 = ad.absolute(v_out - v_high).mean()
    oh, ov = gradient_map(v_out)
    th, tv = gradient_map(v_high)
    grad = ad.absolute(oh - th).mean() + ad.absolute(ov - tv).mean()
    perceptual = perceptual_loss(v_out, v_high, extractor)
    terms = {"l1": l1, "grad": grad, "perceptual": perceptual}
    signs = {"l1": 1.0, "grad": 1.0, "perceptual": 1.0}
    total = l1 + grad + perceptual
    if with_ssim:
        s = ssim(v_out, v_high)
        terms["ssim"] = s
        signs["ssim"] = -1.0
        total = total - s
    return LossReport(total, terms, signs)


def stage2_loss(i_out: Tensor, i_high: Tensor) -> LossReport:
    """MSE - SSIM + MSE on gradient maps; equals -1 at a perfect match."""
    if i_out.shape != i_high.shape:
        raise ValueError(f"stage2_loss: shape mismatch {i_out.shape} vs {i_high.shape}")
    mse = ad.square(i_out - i_high).mean()
    s = ssim(i_out, i_high)
    oh, ov = gradient_map(i_out)
    th, tv = gradient_map(i_high)
    grad = ad.square(oh - th).mean() + ad.square(ov - tv).mean()
    total = mse - s + grad
    return LossReport(total, {"mse": mse, "ssim": s, "grad": grad}, {"mse": 1.0, "ssim": -1.0, "grad": 1.0})
