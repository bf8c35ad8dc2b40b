"""Command-line entry point.

Subcommands: ``train-stage1``, ``train-stage2``, ``enhance``, ``evaluate`` and
``inspect-checkpoint``. Training flags can also come from a flat
``key=value`` file passed with ``--config``; keys are the long flag names
without the leading dashes (``crop=64``, ``no-ca=true``) and explicit flags win.

Failures exit with status 1 and a single stderr line
``error: <kind>: <message>``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import DatasetError
from .metrics import SRER_FORMULA
from .pipeline import TrainConfig, TrainingError, enhance, evaluate, load_dataset, train_stage1, train_stage2, write_loss_log

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off", ""}


class CliError(Exception):
    pass


def _add_training_args(p: argparse.ArgumentParser, stage: int) -> None:
    p.add_argument("--config", help="flat key=value file; keys are flag names")
    p.add_argument("--data", help="dataset root holding low/ and high/ subdirectories")
    p.add_argument("--low-dir")
    p.add_argument("--high-dir")
    p.add_argument("--out", required=True, help="checkpoint to write")
    p.add_argument("--log", help="loss log CSV to write")
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--crop", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--eps", type=float, default=1e-8)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--base-channels", type=int, default=8)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--se-reduction", type=int, default=4)
    p.add_argument("--no-hs-input", action="store_true", help="feed V replicated x3 instead of [H,S,V]")
    if stage == 1:
        p.add_argument("--ssim-loss-stage1", action="store_true", help="add -SSIM to the enhancement loss")
        p.add_argument("--vgg-weights", help="VGG16 features.* weights in checkpoint format")
        p.add_argument("--perceptual-tap", type=int, help="VGG16 features index to tap")
        p.add_argument("--perceptual-seed", type=int, default=0)
    else:
        p.add_argument("--stage1", required=True, help="trained stage-one checkpoint")
        p.add_argument("--no-ca", action="store_true", help="restorer without channel attention")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lowlight", description="Two-stage low-light image enhancement")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_training_args(sub.add_parser("train-stage1", help="train the V-channel enhancer"), 1)
    _add_training_args(sub.add_parser("train-stage2", help="train the RGB restorer"), 2)

    p = sub.add_parser("enhance", help="run both stages on an image")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--stage1", required=True)
    p.add_argument("--stage2", required=True)
    p.add_argument("--no-hs-input", action="store_true", help="stage one was trained on V only")
    p.add_argument("--dump-intermediates", action="store_true",
                   help="also write <output>_enhanced_v.png and <output>_stage_one.png")

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    p.add_argument("pred_dir")
    p.add_argument("gt_dir")
    p.add_argument("--out", default="metrics.csv")

    p = sub.add_parser("inspect-checkpoint", help="print a checkpoint's contents")
    p.add_argument("path")
    return parser


def read_config_file(path: str) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.lstrip("-")] = value
    return values


def _subcommand(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _config_path(argv: list[str]) -> str | None:
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if token.startswith("--config="):
            return token.split("=", 1)[1]
    return None


def apply_config_file(sub: argparse.ArgumentParser, config_path: str) -> None:
    """Install file values as the subcommand's defaults so explicit flags still win."""
    actions = {a.option_strings[-1].lstrip("-"): a for a in sub._actions if a.option_strings}
    defaults = {}
    for key, raw in read_config_file(config_path).items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise CliError(f"{config_path}: unknown key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            low = raw.lower()
            if low not in _TRUE | _FALSE:
                raise CliError(f"{config_path}: {key} expects a boolean, got {raw!r}")
            defaults[action.dest] = low in _TRUE
        else:
            try:
                defaults[action.dest] = action.type(raw) if action.type else raw
            except ValueError:
                raise CliError(f"{config_path}: bad value for {key}: {raw!r}") from None
        action.required = False
    sub.set_defaults(**defaults)


def train_config_from_args(args, stage: int) -> TrainConfig:
    return TrainConfig(
        stage=stage,
        batch_size=args.batch,
        crop_size=args.crop,
        learning_rate=args.lr,
        beta1=args.beta1,
        beta2=args.beta2,
        epsilon=args.eps,
        max_steps=args.steps,
        seed=args.seed,
        use_hs_input=not args.no_hs_input,
        use_ssim_loss_stage1=getattr(args, "ssim_loss_stage1", False),
        with_channel_attention=not getattr(args, "no_ca", False),
        base_channels=args.base_channels,
        depth=args.depth,
        se_reduction=args.se_reduction,
        perceptual_seed=getattr(args, "perceptual_seed", 0),
        vgg_weights=getattr(args, "vgg_weights", None),
        perceptual_tap=getattr(args, "perceptual_tap", None),
    )


def _dataset(args):
    if args.data:
        return load_dataset(root=args.data)
    if args.low_dir and args.high_dir:
        return load_dataset(low_dir=args.low_dir, high_dir=args.high_dir)
    raise CliError("give --data or both --low-dir and --high-dir")


def _train(args, stage: int) -> None:
    cfg = train_config_from_args(args, stage)
    data = _dataset(args)
    if data.unmatched:
        print(f"warning: {len(data.unmatched)} file(s) without a counterpart: "
              + ", ".join(p.name for p in data.unmatched[:5]), file=sys.stderr)
    ckpt = train_stage1(data, cfg) if stage == 1 else train_stage2(data, load_checkpoint(args.stage1), cfg)
    save_checkpoint(ckpt, args.out)
    if args.log:
        write_loss_log(ckpt.history, args.log)
    last = ckpt.history[-1] if ckpt.history else {}
    print(f"wrote {args.out} after {ckpt.step} steps" + (f"; final total loss {last['total']:.6f}" if last else ""))


def _inspect(path: str) -> None:
    ckpt = load_checkpoint(path)
    print(f"fingerprint: {ckpt.fingerprint}")
    print(f"step: {ckpt.step}")
    total = 0
    for name, t in ckpt.tensors.items():
        total += t.data.size
        print(f"  {name:24s} {'x'.join(map(str, t.shape)):>16s}  mean={float(np.mean(t.data)):+.4e}")
    print(f"tensors: {len(ckpt.tensors)}  values: {total}")
    if ckpt.optimizer is not None:
        o = ckpt.optimizer
        print(f"optimizer: adam step={o.step} lr={o.learning_rate} beta1={o.beta1} beta2={o.beta2} eps={o.epsilon}")


def run(argv: list[str]) -> None:
    parser = build_parser()
    config_path = _config_path(argv)
    if config_path:
        command = next((a for a in argv if a in ("train-stage1", "train-stage2")), None)
        if command is None:
            raise CliError("--config applies to train-stage1 and train-stage2 only")
        apply_config_file(_subcommand(parser, command), config_path)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    if args.command == "train-stage1":
        _train(args, 1)
    elif args.command == "train-stage2":
        _train(args, 2)
    elif args.command == "enhance":
        written = enhance(args.input, args.stage1, args.stage2, args.output,
                          use_hs_input=not args.no_hs_input, dump_intermediates=args.dump_intermediates)
        for key, path in written.items():
            print(f"{key}: {path}")
    elif args.command == "evaluate":
        rows = evaluate(args.pred_dir, args.gt_dir, args.out)
        failed = sum(1 for r in rows if r["error"])
        print(f"wrote {args.out}: {len(rows) - 1} image(s), {failed} error row(s); srer = {SRER_FORMULA}")
    elif args.command == "inspect-checkpoint":
        _inspect(args.path)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        run(argv)
    except (CliError, CheckpointError, DatasetError, TrainingError, ValueError, OSError) as exc:
        message = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
