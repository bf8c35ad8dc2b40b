"""Two-stage training, inference and dataset evaluation.

Stage one learns the V plane of the well-lit image from the low-light HSV
planes. Stage two takes the low-light H and S recombined with the enhanced V
(converted back to RGB) and learns the final RGB image, optionally with
channel attention on its skip connections.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Tensor, adam_step, no_grad
from .checkpoint import Checkpoint, FingerprintError, load_checkpoint
from .color import hsv_to_rgb, replace_value_channel, rgb_to_hsv
from .data import DatasetIndex, as_pairs, read_image, sample_batch, write_image, IMAGE_SUFFIXES
from .losses import FeatureExtractor, stage1_loss, stage2_loss
from .metrics import MetricReport, evaluate_pair
from .nn import NetworkParams, UNetConfig, init_params, unet_forward

logger = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "TrainingError",
    "train_stage1",
    "train_stage2",
    "stage1_forward",
    "enhance_array",
    "enhance",
    "evaluate",
    "write_loss_log",
]


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    stage: int = 1
    batch_size: int = 4
    crop_size: int = 64
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    max_steps: int = 1000
    seed: int = 0
    use_hs_input: bool = True
    use_ssim_loss_stage1: bool = False
    with_channel_attention: bool = True
    base_channels: int = 8
    depth: int = 3
    se_reduction: int = 4
    perceptual_seed: int = 0
    vgg_weights: str | None = None
    perceptual_tap: int | None = None

    def __post_init__(self):
        if self.stage not in (1, 2):
            raise ValueError(f"stage must be 1 or 2, got {self.stage}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")
        if self.crop_size < 1 or self.crop_size % 2**self.depth:
            raise ValueError(f"crop_size {self.crop_size} must be a positive multiple of 2**depth = {2**self.depth}")

    def enhancer_config(self) -> UNetConfig:
        return UNetConfig(3, 1, self.base_channels, self.depth, False, self.se_reduction, "sigmoid")

    def restorer_config(self) -> UNetConfig:
        return UNetConfig(3, 3, self.base_channels, self.depth, self.with_channel_attention, self.se_reduction, "sigmoid")

    def feature_extractor(self) -> FeatureExtractor:
        if self.vgg_weights:
            return FeatureExtractor.from_file(self.vgg_weights, tap=self.perceptual_tap)
        return FeatureExtractor.default(self.perceptual_seed)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def _nchw(batch: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(batch).transpose(0, 3, 1, 2))


def stage1_input(hsv: np.ndarray, use_hs_input: bool = True) -> np.ndarray:
    """Network input ``[N,3,H,W]`` from an HSV batch ``(N,H,W,3)``.

    Without H and S the V plane is replicated into all three channels so the
    architecture stays the same.
    """
    if use_hs_input:
        return _nchw(hsv)
    v = hsv[..., 2]
    return np.ascontiguousarray(np.stack([v, v, v], axis=1))


def stage1_forward(params: NetworkParams, low_rgb: np.ndarray, use_hs_input: bool = True):
    """Run the enhancer on ``(N,H,W,3)`` low-light RGB without recording a graph.

    Returns ``(enhanced_v, recombined_rgb)`` as ``(N,H,W)`` and ``(N,H,W,3)``.
    """
    hsv = rgb_to_hsv(low_rgb)
    with no_grad():
        v = unet_forward(Tensor(stage1_input(hsv, use_hs_input), dtype=np.float32), params).data[:, 0]
    recombined = hsv_to_rgb(replace_value_channel(hsv, v))
    return v, recombined


def _check_crop(pairs, crop: int) -> None:
    for k, (lo, _) in enumerate(pairs):
        if lo.shape[0] < crop or lo.shape[1] < crop:
            raise TrainingError(f"crop size {crop} exceeds image {k} of size {lo.shape[0]}x{lo.shape[1]}")


def _optimizer(params: NetworkParams, cfg: TrainConfig) -> AdamState:
    return AdamState.for_params(params.tensors, learning_rate=cfg.learning_rate, beta1=cfg.beta1,
                                beta2=cfg.beta2, epsilon=cfg.epsilon)


def _step(params, state, loss_fn, step, history):
    params.zero_grad()
    try:
        report = loss_fn()
    except ad.NonFiniteError as exc:
        last = history[-1] if history else {}
        raise TrainingError(f"non-finite values at step {step} ({exc}); last losses: {last}") from exc
    values = report.values()
    if not all(math.isfinite(v) for v in values.values()):
        raise TrainingError(f"non-finite loss at step {step}: {values}")
    report.total.backward()
    adam_step(params.tensors, state)
    history.append({"step": step, **values})


def train_stage1(data, cfg: TrainConfig, extractor: FeatureExtractor | None = None) -> Checkpoint:
    """Train the V-plane enhancer; the returned checkpoint carries the loss history."""
    if cfg.stage != 1:
        raise ValueError("train_stage1 needs cfg.stage == 1")
    pairs = as_pairs(data)
    _check_crop(pairs, cfg.crop_size)
    extractor = extractor or cfg.feature_extractor()
    params = init_params(cfg.enhancer_config(), cfg.seed)
    state = _optimizer(params, cfg)
    history: list[dict[str, float]] = []

    for step in range(cfg.max_steps):
        low, high = sample_batch(pairs, step, cfg.batch_size, cfg.crop_size, cfg.seed)
        x = Tensor(stage1_input(rgb_to_hsv(low), cfg.use_hs_input))
        target = Tensor(rgb_to_hsv(high)[:, None, :, :, 2])

        def loss_fn():
            out = unet_forward(x, params)
            return stage1_loss(out, target, extractor, with_ssim=cfg.use_ssim_loss_stage1)

        _step(params, state, loss_fn, step + 1, history)
        if (step + 1) % 50 == 0:
            logger.info("stage1 step %d: %s", step + 1, history[-1])
    return Checkpoint.from_params(params, state, cfg.max_steps, history)


def _enhancer_params(stage1_ckpt) -> tuple[NetworkParams, UNetConfig]:
    if not isinstance(stage1_ckpt, Checkpoint):
        stage1_ckpt = load_checkpoint(stage1_ckpt)
    config = stage1_ckpt.config
    if config.in_channels != 3 or config.out_channels != 1:
        raise FingerprintError(f"stage-one checkpoint is not an enhancer network: {stage1_ckpt.fingerprint}")
    return stage1_ckpt.params(requires_grad=False), config


def train_stage2(data, stage1_ckpt, cfg: TrainConfig) -> Checkpoint:
    """Train the RGB restorer on the frozen enhancer's recombined output."""
    if cfg.stage != 2:
        raise ValueError("train_stage2 needs cfg.stage == 2")
    enhancer, _ = _enhancer_params(stage1_ckpt)
    pairs = as_pairs(data)
    _check_crop(pairs, cfg.crop_size)
    params = init_params(cfg.restorer_config(), cfg.seed)
    state = _optimizer(params, cfg)
    history: list[dict[str, float]] = []

    for step in range(cfg.max_steps):
        low, high = sample_batch(pairs, step, cfg.batch_size, cfg.crop_size, cfg.seed)
        _, intermediate = stage1_forward(enhancer, low, cfg.use_hs_input)
        x = Tensor(_nchw(intermediate))
        target = Tensor(_nchw(high))

        def loss_fn():
            return stage2_loss(unet_forward(x, params), target)

        _step(params, state, loss_fn, step + 1, history)
        if (step + 1) % 50 == 0:
            logger.info("stage2 step %d: %s", step + 1, history[-1])
    return Checkpoint.from_params(params, state, cfg.max_steps, history)


def write_loss_log(history: list[dict[str, float]], path: str | Path) -> None:
    """CSV with header ``step,<terms...>,total``."""
    if not history:
        Path(path).write_text("step,total\n")
        return
    terms = [k for k in history[0] if k not in ("step", "total")]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", *terms, "total"])
        for row in history:
            writer.writerow([row["step"], *(repr(row[t]) for t in terms), repr(row["total"])])


def _pad_to_multiple(image: np.ndarray, multiple: int) -> tuple[np.ndarray, tuple[int, int]]:
    h, w = image.shape[:2]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return image, (h, w)
    return np.pad(image, ((0, ph), (0, pw), (0, 0)), mode="reflect"), (h, w)


def enhance_array(low_rgb: np.ndarray, enhancer: NetworkParams, restorer: NetworkParams,
                  use_hs_input: bool = True) -> dict[str, np.ndarray]:
    """Full two-stage pipeline on one ``(H, W, 3)`` image.

    Extents that are not a multiple of the networks' downsampling factor are
    reflect-padded and cropped back. Returns the keys ``output``,
    ``enhanced_v`` and ``stage_one``.
    """
    if restorer.config.in_channels != 3 or restorer.config.out_channels != 3:
        raise FingerprintError(f"stage-two checkpoint is not a restorer network: {restorer.fingerprint}")
    low_rgb = np.asarray(low_rgb, dtype=np.float32)
    multiple = max(enhancer.config.multiple, restorer.config.multiple)
    padded, (h, w) = _pad_to_multiple(low_rgb, multiple)
    v, recombined = stage1_forward(enhancer, padded[None], use_hs_input)
    with no_grad():
        out = unet_forward(Tensor(_nchw(recombined), dtype=np.float32), restorer).data
    return {
        "output": out[0].transpose(1, 2, 0)[:h, :w],
        "enhanced_v": v[0][:h, :w],
        "stage_one": recombined[0][:h, :w],
    }


def enhance(input_path, stage1_ckpt, stage2_ckpt, output_path, use_hs_input: bool = True,
            dump_intermediates: bool = False) -> dict[str, Path]:
    """Enhance one image file; optionally write the enhanced V plane and the stage-one RGB."""
    enhancer, _ = _enhancer_params(stage1_ckpt)
    if not isinstance(stage2_ckpt, Checkpoint):
        stage2_ckpt = load_checkpoint(stage2_ckpt)
    restorer = stage2_ckpt.params(requires_grad=False)
    result = enhance_array(read_image(input_path), enhancer, restorer, use_hs_input)
    output_path = Path(output_path)
    write_image(output_path, result["output"])
    written = {"output": output_path}
    if dump_intermediates:
        for key in ("enhanced_v", "stage_one"):
            path = output_path.with_name(f"{output_path.stem}_{key}.png")
            write_image(path, result[key])
            written[key] = path
    return written


def _images_by_stem(directory: Path) -> dict[str, Path]:
    return {p.stem: p for p in sorted(directory.iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES}


def evaluate(pred_dir, gt_dir, out_path=None) -> list[dict]:
    """Score every prediction against the ground truth with the same file stem.

    Each row holds the image name, every :class:`MetricReport` field and an
    ``error`` column (empty on success). A final ``mean`` row averages the
    finite values of each column; a column whose values are all infinite
    averages to ``inf``.
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    preds = _images_by_stem(pred_dir)
    gts = _images_by_stem(gt_dir)
    names = MetricReport.field_names()
    rows = []
    for stem in sorted(set(preds) | set(gts)):
        row = {"image": stem, **{n: None for n in names}, "error": ""}
        try:
            if stem not in preds or stem not in gts:
                raise ValueError("no counterpart in " + ("prediction" if stem not in preds else "ground-truth") + " dir")
            report = evaluate_pair(read_image(preds[stem]), read_image(gts[stem]))
            row.update(asdict(report))
        except Exception as exc:  # one bad pair must not sink the report
            row["error"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
        rows.append(row)

    mean_row = {"image": "mean", "error": ""}
    for n in names:
        vals = [r[n] for r in rows if r[n] is not None and not math.isnan(r[n])]
        finite = [v for v in vals if math.isfinite(v)]
        if finite:
            mean_row[n] = math.fsum(finite) / len(finite)
        elif vals:
            mean_row[n] = vals[0] if all(v == vals[0] for v in vals) else math.nan
        else:
            mean_row[n] = math.nan
    rows.append(mean_row)

    if out_path is not None:
        with open(out_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["image", *names, "error"])
            for r in rows:
                writer.writerow([r["image"], *("" if r[n] is None else repr(float(r[n])) for n in names), r["error"]])
    return rows


def load_dataset(root=None, low_dir=None, high_dir=None) -> DatasetIndex:
    if root is not None:
        return DatasetIndex.from_root(root)
    return DatasetIndex.from_dirs(low_dir, high_dir)
