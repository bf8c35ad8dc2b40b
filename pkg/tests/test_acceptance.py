"""Acceptance suite: one test per primary criterion.

Every test records a ``criterion N: PASS|FAIL`` line that is printed in the
terminal summary (and immediately, when run with ``-s``).
"""

import contextlib
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_RESULTS, synthetic_pairs
from ciede2000_pairs import SHARMA_PAIRS
from fd_helpers import kink_free_unet_point
from oracles import angles_loops, median_by_sort, mse_loops, uqi_loops
from test_color import boundary_rgb

from lowlight import autodiff as ad
from lowlight.autodiff import Tensor, float64_mode, gradient_check
from lowlight.checkpoint import from_bytes, to_bytes
from lowlight.color import hsv_to_rgb, rgb_to_hsv
from lowlight.losses import FeatureExtractor, gradient_map, perceptual_loss, ssim, stage1_loss, stage2_loss
from lowlight.metrics import angular_error, ciede2000, psnr, rmse, sam, uqi
from lowlight.nn import SeBlockParams, UNetConfig, init_params, param_shapes, se_block_forward, se_param_count, unet_forward
from lowlight.pipeline import TrainConfig, enhance_array, train_stage1, train_stage2, write_loss_log

FD_TOL = 1e-4


@contextlib.contextmanager
def criterion(number, title):
    notes = []
    try:
        yield notes
    except BaseException:
        line = f"criterion {number} ({title}): FAIL  {'; '.join(notes)}"
        ACCEPTANCE_RESULTS.append(line)
        print(line)
        raise
    line = f"criterion {number} ({title}): PASS  {'; '.join(notes)}"
    ACCEPTANCE_RESULTS.append(line)
    print(line)


def check(notes, ok, message):
    notes.append(message)
    assert ok, message


def test_criterion_1_gradient_integrity():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    with criterion(1, "gradient integrity") as notes, float64_mode():
        errors = {}
        x = Tensor(rng.normal(size=(2, 2, 6, 6)), requires_grad=True)
        w = Tensor(rng.normal(size=(3, 2, 3, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=3), requires_grad=True)
        errors["conv2d"] = max(
            gradient_check(lambda: ad.square(ad.conv2d(x, w, b, stride, 1)).sum(), [x, w, b]) for stride in (1, 2)
        )

        f = Tensor(rng.normal(size=(2, 8, 4, 4)), requires_grad=True)
        se = SeBlockParams(*(Tensor(rng.normal(size=s), requires_grad=True) for s in [(2, 8), (2,), (8, 2), (8,)]))
        errors["se_block"] = gradient_check(
            lambda: (se_block_forward(f, se) * f).sum(), [f, se.fc1_weight, se.fc1_bias, se.fc2_weight, se.fc2_bias]
        )

        for name, out_ch, ca in (("enhancer_unet", 1, False), ("restorer_unet", 3, True)):
            cfg = UNetConfig(out_channels=out_ch, base_channels=4, depth=1, with_channel_attention=ca)
            params, inp = kink_free_unet_point(cfg, rng)
            proj = Tensor(rng.normal(size=(1, out_ch, 8, 8)))
            errors[name] = gradient_check(lambda: (unet_forward(inp, params) * proj).sum(),
                                          [inp, *(t for _, t in params.items())])

        ext = FeatureExtractor.default()
        v_out = Tensor(rng.random((1, 1, 8, 8)), requires_grad=True)
        v_high = Tensor(rng.random((1, 1, 8, 8)))
        errors["stage1_loss"] = gradient_check(lambda: stage1_loss(v_out, v_high, ext, with_ssim=True).total, [v_out])
        i_out = Tensor(rng.random((1, 3, 8, 8)), requires_grad=True)
        i_high = Tensor(rng.random((1, 3, 8, 8)))
        errors["stage2_loss"] = gradient_check(lambda: stage2_loss(i_out, i_high).total, [i_out])

        elapsed = time.perf_counter() - start
        worst = max(errors, key=errors.get)
        check(notes, errors[worst] < FD_TOL, f"max relative error {errors[worst]:.2e} ({worst}) < {FD_TOL:g}")
        check(notes, elapsed < 120, f"{elapsed:.1f} s < 120 s")


def test_criterion_2_color_round_trip():
    with criterion(2, "color round-trip") as notes:
        rgb = np.concatenate([np.random.default_rng(202).random((10_000, 3)), boundary_rgb()])
        err = float(np.abs(hsv_to_rgb(rgb_to_hsv(rgb)) - rgb).max())
        check(notes, err < 1e-6, f"max error {err:.2e} over {len(rgb)} pixels < 1e-6")


def test_criterion_3_loss_anchors():
    rng = np.random.default_rng(303)
    ext = FeatureExtractor.default()
    with criterion(3, "loss anchors") as notes:
        x1 = Tensor(rng.random((2, 1, 16, 16)))
        x3 = Tensor(rng.random((2, 3, 16, 16)))
        s1 = stage1_loss(x1, x1, ext).total.item()
        s2 = stage2_loss(x3, x3).total.item()
        sim = ssim(x3, x3).item()
        check(notes, s1 == 0.0, f"stage1(x,x) = {s1}")
        check(notes, s2 == -1.0, f"stage2(x,x) = {s2}")
        check(notes, abs(sim - 1) <= 1e-9, f"|ssim(x,x) - 1| = {abs(sim - 1):.1e}")

        worst = 0.0
        for _ in range(100):
            a1, b1 = Tensor(rng.random((1, 1, 16, 16))), Tensor(rng.random((1, 1, 16, 16)))
            a3, b3 = Tensor(rng.random((1, 3, 16, 16))), Tensor(rng.random((1, 3, 16, 16)))
            oh, ov = gradient_map(a1)
            th, tv = gradient_map(b1)
            manual1 = (ad.absolute(a1 - b1).mean().item() + ad.absolute(oh - th).mean().item()
                       + ad.absolute(ov - tv).mean().item() + perceptual_loss(a1, b1, ext).item())
            oh, ov = gradient_map(a3)
            th, tv = gradient_map(b3)
            manual2 = (ad.square(a3 - b3).mean().item() - ssim(a3, b3).item()
                       + ad.square(oh - th).mean().item() + ad.square(ov - tv).mean().item())
            worst = max(worst, abs(stage1_loss(a1, b1, ext).total.item() - manual1),
                        abs(stage2_loss(a3, b3).total.item() - manual2))
        check(notes, worst < 1e-6, f"recomposition error {worst:.1e} over 100 pairs < 1e-6")


def test_criterion_4_metric_oracles():
    rng = np.random.default_rng(404)
    with criterion(4, "metric oracles") as notes:
        de = max(abs(float(ciede2000(np.array(r[:3]), np.array(r[3:6]))) - r[6]) for r in SHARMA_PAIRS)
        check(notes, de < 1e-4, f"CIEDE2000 max error {de:.1e} on {len(SHARMA_PAIRS)} published pairs")

        worst = 0.0
        for _ in range(20):
            p, g = rng.random((32, 32, 3)), rng.random((32, 32, 3))
            m = mse_loops(p, g)
            angles = angles_loops(p, g)
            mean = sum(angles) / len(angles)
            am, amed = angular_error(p, g)
            worst = max(worst, abs(psnr(p, g) - 10 * np.log10(1 / m)), abs(rmse(p, g) - np.sqrt(m)),
                        abs(uqi(p, g) - uqi_loops(p, g)), abs(sam(p, g) - mean), abs(am - mean),
                        abs(amed - median_by_sort(angles)))
        check(notes, worst < 1e-6, f"scalar-loop oracle max error {worst:.1e} on 20 pairs")

        gt = rng.random((32, 32, 3)) * 0.6 + 0.2
        noise = rng.uniform(-1, 1, gt.shape)
        scores = [psnr(np.clip(gt + a * noise, 0, 1), gt) for a in (0.01, 0.05, 0.1, 0.2)]
        check(notes, all(a > b for a, b in zip(scores, scores[1:])),
              "PSNR over noise " + " > ".join(f"{s:.2f}" for s in scores))


def test_criterion_5_se_mechanism():
    rng = np.random.default_rng(505)
    with criterion(5, "SE mechanism") as notes:
        x = Tensor(rng.normal(size=(2, 16, 6, 6)))
        unit = SeBlockParams(Tensor(rng.normal(size=(4, 16))), Tensor(np.zeros(4)),
                             Tensor(np.zeros((16, 4))), Tensor(np.full(16, 50.0)))
        diff = float(np.abs(se_block_forward(x, unit).data - x.data).max())
        check(notes, diff < 1e-6, f"unit gate deviation {diff:.1e}")

        ca = UNetConfig(out_channels=3, base_channels=8, depth=3, with_channel_attention=True)
        plain = UNetConfig(out_channels=3, base_channels=8, depth=3, with_channel_attention=False)
        extra = set(init_params(ca, 0).names()) - set(init_params(plain, 0).names())
        missing = set(init_params(plain, 0).names()) - set(init_params(ca, 0).names())
        expected = {f"se{i}.{fc}.{k}" for i in range(3) for fc in ("fc1", "fc2") for k in ("weight", "bias")}
        check(notes, extra == expected and not missing, f"CA adds exactly {len(extra)} SE tensors")

        shapes = param_shapes(UNetConfig(out_channels=3, base_channels=64, depth=1, with_channel_attention=True))
        count = sum(int(np.prod(s)) for n, s in shapes.items() if n.startswith("se0."))
        formula = 2 * 64 * 16 + 16 + 64
        check(notes, shapes["se0.fc1.weight"] == (16, 64) and count == se_param_count(64, 4) == formula,
              f"C=64 r=4: bottleneck {shapes['se0.fc1.weight'][0]}, {count} parameters = {formula}")


def _windowed_non_increasing(values, window=50):
    means = [float(np.mean(values[i:i + window])) for i in range(0, len(values) - window + 1, window)]
    steps = list(zip(means, means[1:]))
    return sum(b <= a for a, b in steps) / len(steps)


@pytest.mark.slow
def test_criterion_6_overfit_smoke():
    pairs = synthetic_pairs(n=2, size=64, seed=0)
    common = dict(base_channels=8, depth=3, crop_size=64, batch_size=2, learning_rate=1e-3, max_steps=500, seed=0)
    with criterion(6, "overfit smoke") as notes:
        start = time.perf_counter()
        s1 = train_stage1(pairs, TrainConfig(stage=1, **common))
        s2 = train_stage2(pairs, s1, TrainConfig(stage=2, **common))
        elapsed = time.perf_counter() - start
        l1 = s1.history[-1]["l1"]
        total = s2.history[-1]["total"]
        check(notes, l1 < 0.05, f"stage-one final L1 {l1:.4f} < 0.05")
        check(notes, total < -0.5, f"stage-two final total {total:.4f} < -0.5")
        for name, ckpt in (("stage one", s1), ("stage two", s2)):
            frac = _windowed_non_increasing([r["total"] for r in ckpt.history])
            check(notes, frac >= 0.8, f"{name} 50-step windows non-increasing {frac:.0%}")
        check(notes, elapsed < 600, f"{elapsed:.0f} s < 600 s")


def test_criterion_7_determinism(tmp_path):
    pairs = synthetic_pairs(n=2, size=32, seed=7)
    small = dict(base_channels=4, depth=2, crop_size=16, batch_size=2, learning_rate=1e-3, max_steps=5, seed=11)
    with criterion(7, "determinism and persistence") as notes:
        runs = []
        for k in range(2):
            a = train_stage1(pairs, TrainConfig(stage=1, **small))
            b = train_stage2(pairs, a, TrainConfig(stage=2, **small))
            write_loss_log(a.history, tmp_path / f"s1_{k}.csv")
            write_loss_log(b.history, tmp_path / f"s2_{k}.csv")
            runs.append((a, b))
        logs_equal = all((tmp_path / f"{s}_0.csv").read_bytes() == (tmp_path / f"{s}_1.csv").read_bytes()
                         for s in ("s1", "s2"))
        check(notes, logs_equal, "loss logs identical")
        ckpts_equal = all(to_bytes(x) == to_bytes(y) for x, y in zip(*runs))
        check(notes, ckpts_equal, "checkpoints identical")
        a, b = runs[0]
        trip = all(to_bytes(from_bytes(to_bytes(c))) == to_bytes(c) for c in (a, b))
        values = all(np.array_equal(from_bytes(to_bytes(b)).tensors[n].data, t.data) for n, t in b.tensors.items())
        check(notes, trip and values, "checkpoint round-trip bit-exact")
        low = pairs[0][0]
        outs = [enhance_array(low, a.params(False), b.params(False))["output"] for _ in range(2)]
        check(notes, outs[0].tobytes() == outs[1].tobytes(), "enhance output bit-identical")


def test_criterion_8_ablation_plumbing():
    pairs = synthetic_pairs(n=2, size=32, seed=8)
    small = dict(base_channels=4, depth=2, crop_size=16, batch_size=2, learning_rate=1e-3, max_steps=1, seed=3)
    with criterion(8, "ablation plumbing") as notes:
        base = train_stage1(pairs, TrainConfig(stage=1, **small))
        no_hs = train_stage1(pairs, TrainConfig(stage=1, use_hs_input=False, **small))
        with_ssim = train_stage1(pairs, TrainConfig(stage=1, use_ssim_loss_stage1=True, **small))
        t0 = base.history[0]["total"]
        check(notes, no_hs.history[0]["total"] != t0,
              f"--no-hs-input step-1 loss {no_hs.history[0]['total']:.6f} vs {t0:.6f}")
        check(notes, with_ssim.history[0]["total"] != t0 and "ssim" in with_ssim.history[0],
              f"--ssim-loss-stage1 step-1 loss {with_ssim.history[0]['total']:.6f} vs {t0:.6f}")
        ca = train_stage2(pairs, base, TrainConfig(stage=2, **small))
        no_ca = train_stage2(pairs, base, TrainConfig(stage=2, with_channel_attention=False, **small))
        removed = set(ca.tensors) - set(no_ca.tensors)
        check(notes, bool(removed) and all(n.startswith("se") for n in removed) and set(no_ca.tensors) < set(ca.tensors),
              f"--no-ca drops {len(removed)} SE tensors")
