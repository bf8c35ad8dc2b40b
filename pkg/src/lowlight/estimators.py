"""scikit-learn style wrappers around the two training stages.

``X`` is always low-light RGB (one ``(H, W, 3)`` image, an ``(N, H, W, 3)``
array or a list of images) and ``y`` the matching well-lit images.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .checkpoint import Checkpoint
from .metrics import psnr
from .pipeline import TrainConfig, enhance_array, stage1_forward, train_stage1, train_stage2
from .validation import check_image_pairs, check_images

__all__ = ["ValueEnhancer", "Restorer", "TwoStageEnhancer"]


class _TrainParamsMixin:
    def _train_config(self, stage: int, **extra) -> TrainConfig:
        return TrainConfig(
            stage=stage,
            batch_size=self.batch_size,
            crop_size=self.crop_size,
            learning_rate=self.learning_rate,
            max_steps=self.max_steps,
            seed=self.seed,
            base_channels=self.base_channels,
            depth=self.depth,
            **extra,
        )


class ValueEnhancer(_TrainParamsMixin, TransformerMixin, BaseEstimator):
    """Stage one: predicts the well-lit V plane from the low-light HSV planes.

    ``predict`` returns V planes; ``transform`` returns the low-light H and S
    recombined with the predicted V, converted to RGB.
    """

    def __init__(self, base_channels=8, depth=3, crop_size=64, batch_size=4, learning_rate=1e-4,
                 max_steps=1000, seed=0, use_hs_input=True, use_ssim_loss=False, feature_extractor=None):
        self.base_channels = base_channels
        self.depth = depth
        self.crop_size = crop_size
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.max_steps = max_steps
        self.seed = seed
        self.use_hs_input = use_hs_input
        self.use_ssim_loss = use_ssim_loss
        self.feature_extractor = feature_extractor

    def fit(self, X, y):
        pairs = check_image_pairs(X, y)
        cfg = self._train_config(1, use_hs_input=self.use_hs_input, use_ssim_loss_stage1=self.use_ssim_loss)
        self.checkpoint_ = train_stage1(pairs, cfg, extractor=self.feature_extractor)
        self.params_ = self.checkpoint_.params(requires_grad=False)
        self.loss_history_ = self.checkpoint_.history
        return self

    def _run(self, X):
        check_is_fitted(self, "params_")
        out_v, out_rgb = [], []
        for image in check_images(X):
            v, rgb = stage1_forward(self.params_, image[None], self.use_hs_input)
            out_v.append(v[0])
            out_rgb.append(rgb[0])
        return out_v, out_rgb

    def predict(self, X):
        return _stack(self._run(X)[0])

    def transform(self, X):
        return _stack(self._run(X)[1])


class Restorer(_TrainParamsMixin, BaseEstimator):
    """Stage two: restores the recombined RGB produced by a fitted :class:`ValueEnhancer`."""

    def __init__(self, enhancer=None, base_channels=8, depth=3, crop_size=64, batch_size=4, learning_rate=1e-4,
                 max_steps=1000, seed=0, with_channel_attention=True):
        self.enhancer = enhancer
        self.base_channels = base_channels
        self.depth = depth
        self.crop_size = crop_size
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.max_steps = max_steps
        self.seed = seed
        self.with_channel_attention = with_channel_attention

    def fit(self, X, y):
        if self.enhancer is None:
            raise ValueError("Restorer needs a fitted ValueEnhancer")
        check_is_fitted(self.enhancer, "checkpoint_")
        pairs = check_image_pairs(X, y)
        cfg = self._train_config(2, use_hs_input=self.enhancer.use_hs_input,
                                 with_channel_attention=self.with_channel_attention)
        self.checkpoint_ = train_stage2(pairs, self.enhancer.checkpoint_, cfg)
        self.params_ = self.checkpoint_.params(requires_grad=False)
        self.loss_history_ = self.checkpoint_.history
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        outputs = [
            enhance_array(image, self.enhancer.params_, self.params_, self.enhancer.use_hs_input)["output"]
            for image in check_images(X)
        ]
        return _stack(outputs)

    def score(self, X, y):
        """Mean PSNR (dB) of the predictions; identical pairs are skipped as infinite."""
        return _mean_psnr(self.predict(X), check_images(y))


class TwoStageEnhancer(BaseEstimator):
    """Both stages fitted in sequence: enhancer to completion, then the restorer on its frozen output."""

    def __init__(self, base_channels=8, depth=3, crop_size=64, batch_size=4, learning_rate=1e-4,
                 stage1_steps=1000, stage2_steps=1000, seed=0, use_hs_input=True, use_ssim_loss_stage1=False,
                 with_channel_attention=True, feature_extractor=None):
        self.base_channels = base_channels
        self.depth = depth
        self.crop_size = crop_size
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.stage1_steps = stage1_steps
        self.stage2_steps = stage2_steps
        self.seed = seed
        self.use_hs_input = use_hs_input
        self.use_ssim_loss_stage1 = use_ssim_loss_stage1
        self.with_channel_attention = with_channel_attention
        self.feature_extractor = feature_extractor

    def fit(self, X, y):
        shared = dict(base_channels=self.base_channels, depth=self.depth, crop_size=self.crop_size,
                      batch_size=self.batch_size, learning_rate=self.learning_rate, seed=self.seed)
        self.enhancer_ = ValueEnhancer(max_steps=self.stage1_steps, use_hs_input=self.use_hs_input,
                                       use_ssim_loss=self.use_ssim_loss_stage1,
                                       feature_extractor=self.feature_extractor, **shared).fit(X, y)
        self.restorer_ = Restorer(self.enhancer_, max_steps=self.stage2_steps,
                                  with_channel_attention=self.with_channel_attention, **shared).fit(X, y)
        return self

    @classmethod
    def from_checkpoints(cls, stage1: Checkpoint, stage2: Checkpoint, use_hs_input=True) -> "TwoStageEnhancer":
        """Wrap already-trained checkpoints for inference."""
        enh_cfg, res_cfg = stage1.config, stage2.config
        model = cls(base_channels=enh_cfg.base_channels, depth=enh_cfg.depth, use_hs_input=use_hs_input,
                    with_channel_attention=res_cfg.with_channel_attention, stage1_steps=stage1.step,
                    stage2_steps=stage2.step)
        model.enhancer_ = ValueEnhancer(base_channels=enh_cfg.base_channels, depth=enh_cfg.depth,
                                        use_hs_input=use_hs_input)
        model.enhancer_.checkpoint_ = stage1
        model.enhancer_.params_ = stage1.params(requires_grad=False)
        model.restorer_ = Restorer(model.enhancer_, base_channels=res_cfg.base_channels, depth=res_cfg.depth,
                                   with_channel_attention=res_cfg.with_channel_attention)
        model.restorer_.checkpoint_ = stage2
        model.restorer_.params_ = stage2.params(requires_grad=False)
        return model

    def predict(self, X):
        check_is_fitted(self, "restorer_")
        return self.restorer_.predict(X)

    def score(self, X, y):
        return _mean_psnr(self.predict(X), check_images(y))


def _stack(images):
    shapes = {im.shape for im in images}
    return np.stack(images) if len(shapes) == 1 else list(images)


def _mean_psnr(preds, gts) -> float:
    scores = [psnr(np.clip(p, 0, 1), g) for p, g in zip(preds, gts)]
    finite = [s for s in scores if np.isfinite(s)]
    return float(np.mean(finite)) if finite else float("inf")
