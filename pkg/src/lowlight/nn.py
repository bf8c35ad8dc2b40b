"""Squeeze-and-excitation block and the two U-Nets built from it.

Parameter naming (``depth = d`` levels, ``i`` in ``0..d-1``)::

    enc{i}.conv1 / enc{i}.conv2    two 3x3 convs at width base * 2**i
    enc{i}.down                    stride-2 3x3 conv (2x downsample)
    mid.conv1 / mid.conv2          bottleneck at width base * 2**d
    dec{i}.up                      3x3 conv after nearest 2x upsampling
    se{i}.fc1 / se{i}.fc2          SE gate on skip i (channel attention only)
    dec{i}.conv1 / dec{i}.conv2    two 3x3 convs after concatenating the skip
    head                           1x1 conv to ``out_channels``

Each name carries ``.weight`` and ``.bias``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = [
    "UNetConfig",
    "NetworkParams",
    "SeBlockParams",
    "init_params",
    "param_shapes",
    "se_block_forward",
    "unet_forward",
    "se_param_count",
]


@dataclass(frozen=True)
class UNetConfig:
    in_channels: int = 3
    out_channels: int = 1
    base_channels: int = 8
    depth: int = 3
    with_channel_attention: bool = False
    se_reduction: int = 4
    final_activation: str = "sigmoid"

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1 or self.base_channels < 1:
            raise ValueError("channel counts must be positive")
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.final_activation not in ("sigmoid", "identity"):
            raise ValueError(f"final_activation must be 'sigmoid' or 'identity', got {self.final_activation!r}")
        if self.with_channel_attention and (self.se_reduction < 1 or self.base_channels % self.se_reduction):
            raise ValueError(
                f"SE reduction {self.se_reduction} must divide base_channels {self.base_channels}"
            )

    def width(self, level: int) -> int:
        return self.base_channels * 2**level

    @property
    def multiple(self) -> int:
        """Spatial extents must be divisible by this."""
        return 2**self.depth

    def fingerprint(self) -> str:
        """Canonical JSON text identifying the architecture."""
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.fingerprint().encode()).hexdigest()[:16]

    @classmethod
    def from_fingerprint(cls, text: str) -> "UNetConfig":
        return cls(**json.loads(text))


@dataclass
class SeBlockParams:
    fc1_weight: Tensor
    fc1_bias: Tensor
    fc2_weight: Tensor
    fc2_bias: Tensor

    @property
    def channels(self) -> int:
        return self.fc1_weight.shape[1]

    @property
    def bottleneck(self) -> int:
        return self.fc1_weight.shape[0]

    @classmethod
    def from_params(cls, params: "NetworkParams | dict", prefix: str) -> "SeBlockParams":
        return cls(
            params[f"{prefix}.fc1.weight"],
            params[f"{prefix}.fc1.bias"],
            params[f"{prefix}.fc2.weight"],
            params[f"{prefix}.fc2.bias"],
        )


def _conv_shape(cout, cin, k):
    return (cout, cin, k, k)


def param_shapes(config: UNetConfig) -> dict[str, tuple[int, ...]]:
    """Ordered mapping of every parameter name to its shape for ``config``."""
    shapes: dict[str, tuple[int, ...]] = {}

    def conv(name, cout, cin, k=3):
        shapes[f"{name}.weight"] = _conv_shape(cout, cin, k)
        shapes[f"{name}.bias"] = (cout,)

    cin = config.in_channels
    for i in range(config.depth):
        w = config.width(i)
        conv(f"enc{i}.conv1", w, cin)
        conv(f"enc{i}.conv2", w, w)
        conv(f"enc{i}.down", w, w)
        cin = w
    wm = config.width(config.depth)
    conv("mid.conv1", wm, cin)
    conv("mid.conv2", wm, wm)
    for i in reversed(range(config.depth)):
        w = config.width(i)
        conv(f"dec{i}.up", w, config.width(i + 1))
        if config.with_channel_attention:
            hidden = w // config.se_reduction
            shapes[f"se{i}.fc1.weight"] = (hidden, w)
            shapes[f"se{i}.fc1.bias"] = (hidden,)
            shapes[f"se{i}.fc2.weight"] = (w, hidden)
            shapes[f"se{i}.fc2.bias"] = (w,)
        conv(f"dec{i}.conv1", w, 2 * w)
        conv(f"dec{i}.conv2", w, w)
    conv("head", config.out_channels, config.width(0), k=1)
    return shapes


def se_param_count(channels: int, reduction: int) -> int:
    hidden = channels // reduction
    return 2 * channels * hidden + hidden + channels


class NetworkParams:
    """Named learnable tensors of one U-Net plus the config that generated them."""

    def __init__(self, config: UNetConfig, tensors: dict[str, Tensor]):
        expected = param_shapes(config)
        if set(tensors) != set(expected):
            extra = sorted(set(tensors) - set(expected))
            missing = sorted(set(expected) - set(tensors))
            raise ValueError(f"parameter names do not match config: missing={missing[:4]} extra={extra[:4]}")
        for name, shape in expected.items():
            if tensors[name].shape != shape:
                raise ValueError(f"{name}: shape {tensors[name].shape} != expected {shape}")
        self.config = config
        self.tensors = {name: tensors[name] for name in expected}

    @property
    def fingerprint(self) -> str:
        return self.config.fingerprint()

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def names(self) -> list[str]:
        return list(self.tensors)

    def num_elements(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def copy(self, dtype=None, requires_grad: bool | None = None) -> "NetworkParams":
        return NetworkParams(
            self.config,
            {
                k: Tensor(
                    v.data.copy(),
                    requires_grad=v.requires_grad if requires_grad is None else requires_grad,
                    dtype=dtype or v.dtype,
                )
                for k, v in self.tensors.items()
            },
        )

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None


def init_params(config: UNetConfig, seed: int = 0) -> NetworkParams:
    """He-normal weights (``std = sqrt(2 / fan_in)``), zero biases, drawn in name order."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".bias"):
            data = np.zeros(shape, dtype=np.float32)
        else:
            fan_in = int(np.prod(shape[1:]))
            data = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape).astype(np.float32)
        tensors[name] = Tensor(data, requires_grad=True, dtype=np.float32)
    return NetworkParams(config, tensors)


def se_block_forward(features: Tensor, params: SeBlockParams) -> Tensor:
    """Reweight channels by ``sigmoid(fc2(relu(fc1(mean_hw(features)))))``."""
    if features.ndim != 4 or features.shape[1] != params.channels:
        raise ValueError(f"SE block expects {params.channels} channels, got features of shape {features.shape}")
    n, c = features.shape[:2]
    squeeze = ad.global_average_pool(features).reshape(n, c)
    hidden = ad.relu(ad.linear(squeeze, params.fc1_weight, params.fc1_bias))
    gate = ad.sigmoid(ad.linear(hidden, params.fc2_weight, params.fc2_bias))
    return ad.channel_scale(features, gate.reshape(n, c, 1, 1))


def _conv_relu(x, params, name, stride=1):
    return ad.relu(ad.conv2d(x, params[f"{name}.weight"], params[f"{name}.bias"], stride=stride, padding=1))


def unet_forward(x: Tensor, params: NetworkParams, config: UNetConfig | None = None) -> Tensor:
    config = config or params.config
    if params.config != config:
        raise ValueError("parameters were built for a different configuration")
    if x.ndim != 4 or x.shape[1] != config.in_channels:
        raise ValueError(f"expected input [N,{config.in_channels},H,W], got {x.shape}")
    h, w = x.shape[2:]
    if h % config.multiple or w % config.multiple:
        raise ValueError(f"spatial extents {h}x{w} must be divisible by {config.multiple}")

    skips = []
    for i in range(config.depth):
        x = _conv_relu(x, params, f"enc{i}.conv1")
        x = _conv_relu(x, params, f"enc{i}.conv2")
        skips.append(x)
        x = _conv_relu(x, params, f"enc{i}.down", stride=2)
    x = _conv_relu(x, params, "mid.conv1")
    x = _conv_relu(x, params, "mid.conv2")
    for i in reversed(range(config.depth)):
        x = _conv_relu(ad.upsample_nearest2x(x), params, f"dec{i}.up")
        skip = skips[i]
        if config.with_channel_attention:
            skip = se_block_forward(skip, SeBlockParams.from_params(params, f"se{i}"))
        x = ad.concat([x, skip], axis=1)
        x = _conv_relu(x, params, f"dec{i}.conv1")
        x = _conv_relu(x, params, f"dec{i}.conv2")
    out = ad.conv2d(x, params["head.weight"], params["head.bias"])
    if config.final_activation == "sigmoid":
        out = ad.sigmoid(out)
    return out
