"""Two-stage low-light image enhancement: HSV value-channel enhancer followed by
an RGB restoration U-Net with channel attention on its skip connections."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .color import hsv_to_rgb, replace_value_channel, rgb_to_hsv
from .estimators import Restorer, TwoStageEnhancer, ValueEnhancer
from .losses import FeatureExtractor, stage1_loss, stage2_loss
from .metrics import MetricReport, evaluate_pair
from .nn import UNetConfig, init_params, unet_forward
from .pipeline import TrainConfig, enhance, evaluate, train_stage1, train_stage2

__version__ = "0.1.0"

__all__ = [
    "Checkpoint",
    "FeatureExtractor",
    "MetricReport",
    "Restorer",
    "TrainConfig",
    "TwoStageEnhancer",
    "UNetConfig",
    "ValueEnhancer",
    "enhance",
    "evaluate",
    "evaluate_pair",
    "hsv_to_rgb",
    "init_params",
    "load_checkpoint",
    "replace_value_channel",
    "rgb_to_hsv",
    "save_checkpoint",
    "stage1_loss",
    "stage2_loss",
    "train_stage1",
    "train_stage2",
    "unet_forward",
]
