import numpy as np
import pytest

from lowlight.autodiff import AdamState, Tensor
from lowlight.checkpoint import (
    MAGIC,
    Checkpoint,
    CheckpointError,
    FingerprintError,
    from_bytes,
    load_checkpoint,
    save_checkpoint,
    to_bytes,
)
from lowlight.nn import UNetConfig, init_params


def trained_like(with_optimizer=True, ca=False):
    cfg = UNetConfig(in_channels=3, out_channels=3, base_channels=4, depth=2, with_channel_attention=ca)
    params = init_params(cfg, seed=3)
    opt = None
    if with_optimizer:
        opt = AdamState.for_params(params.tensors, learning_rate=1e-3)
        rng = np.random.default_rng(0)
        for name in params.names():
            opt.first_moment[name] = rng.normal(size=params[name].shape).astype(np.float32)
            opt.second_moment[name] = rng.random(size=params[name].shape).astype(np.float32)
        opt.step = 17
    return Checkpoint.from_params(params, opt, step=17)


def test_round_trip_bit_exact(tmp_path):
    ckpt = trained_like()
    path = tmp_path / "a.ckpt"
    save_checkpoint(ckpt, path)
    back = load_checkpoint(path)
    assert back.fingerprint == ckpt.fingerprint
    assert back.step == 17
    assert list(back.tensors) == list(ckpt.tensors)
    for name, t in ckpt.tensors.items():
        assert back.tensors[name].data.tobytes() == t.data.tobytes()
    o, b = ckpt.optimizer, back.optimizer
    assert (b.step, b.learning_rate, b.beta1, b.beta2, b.epsilon) == (o.step, o.learning_rate, o.beta1, o.beta2, o.epsilon)
    for name in o.first_moment:
        assert b.first_moment[name].tobytes() == o.first_moment[name].tobytes()
        assert b.second_moment[name].tobytes() == o.second_moment[name].tobytes()
    assert to_bytes(back) == path.read_bytes()


def test_without_optimizer():
    ckpt = trained_like(with_optimizer=False)
    back = from_bytes(to_bytes(ckpt))
    assert back.optimizer is None
    assert back.params().config == ckpt.config


def test_header():
    data = to_bytes(trained_like())
    assert data[:8] == MAGIC == b"TSNCAv01"


def test_bad_magic():
    data = bytearray(to_bytes(trained_like()))
    data[:8] = b"TSNCAv02"
    with pytest.raises(CheckpointError, match="magic"):
        from_bytes(bytes(data))


def test_truncation_names_tensor(tmp_path):
    ckpt = trained_like(with_optimizer=False)
    data = to_bytes(ckpt)
    path = tmp_path / "cut.ckpt"
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(CheckpointError) as info:
        load_checkpoint(path)
    msg = str(info.value)
    assert "truncated" in msg
    assert any(f"'{name}'" in msg for name in ckpt.tensors)


def test_trailing_bytes():
    with pytest.raises(CheckpointError, match="trailing"):
        from_bytes(to_bytes(trained_like()) + b"\x00")


def test_fingerprint_mismatch(tmp_path):
    path = tmp_path / "ca.ckpt"
    save_checkpoint(trained_like(ca=True), path)
    plain = trained_like(ca=False).config
    with pytest.raises(FingerprintError):
        load_checkpoint(path, expected=plain)
    load_checkpoint(path, expected=trained_like(ca=True).config)


def test_ca_and_plain_differ_by_se_names():
    with_ca = set(trained_like(ca=True).tensors)
    plain = set(trained_like(ca=False).tensors)
    assert plain < with_ca
    assert all(name.startswith("se") for name in with_ca - plain)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError, match="cannot read"):
        load_checkpoint(tmp_path / "nope.ckpt")


def test_non_network_fingerprint():
    ckpt = Checkpoint("vgg16", {"features.0.weight": Tensor(np.zeros((2, 3, 3, 3)))})
    back = from_bytes(to_bytes(ckpt))
    with pytest.raises(FingerprintError):
        back.config
