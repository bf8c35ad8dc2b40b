"""Binary tensor-container checkpoints.

Layout (all integers little-endian)::

    b"TSNCAv01"
    u32 fingerprint length, fingerprint bytes (UTF-8)
    tensor table
    u8  optimizer flag; when 1:
        u64 adam step, f64 lr, f64 beta1, f64 beta2, f64 eps,
        tensor table (names "m/<param>" and "v/<param>")
    u64 training step

    tensor table := u32 count, then per tensor:
        u32 name length, name bytes (UTF-8), u32 rank,
        rank x u64 extents, float32 values (row-major)
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import AdamState, Tensor
from .nn import NetworkParams, UNetConfig

__all__ = ["MAGIC", "Checkpoint", "CheckpointError", "FingerprintError", "save_checkpoint", "load_checkpoint"]

MAGIC = b"TSNCAv01"


class CheckpointError(ValueError):
    """Malformed or truncated checkpoint file."""


class FingerprintError(CheckpointError):
    """Checkpoint architecture does not match the expected configuration."""


@dataclass
class Checkpoint:
    fingerprint: str
    tensors: dict[str, Tensor]
    optimizer: AdamState | None = None
    step: int = 0
    # per-step loss rows from the run that produced this checkpoint; not serialized
    history: list[dict[str, float]] = field(default_factory=list, compare=False, repr=False)

    @classmethod
    def from_params(cls, params: NetworkParams, optimizer: AdamState | None = None, step: int = 0,
                    history=None) -> "Checkpoint":
        return cls(params.fingerprint, dict(params.tensors), optimizer, step, list(history or []))

    @property
    def config(self) -> UNetConfig:
        try:
            return UNetConfig.from_fingerprint(self.fingerprint)
        except (ValueError, TypeError) as exc:
            raise FingerprintError(f"fingerprint is not a network configuration: {self.fingerprint[:60]!r}") from exc

    def params(self, requires_grad: bool = True) -> NetworkParams:
        tensors = {k: Tensor(v.data.copy(), requires_grad=requires_grad, dtype=np.float32)
                   for k, v in self.tensors.items()}
        return NetworkParams(self.config, tensors)

    def check_config(self, expected: UNetConfig) -> None:
        if self.fingerprint != expected.fingerprint():
            raise FingerprintError(
                f"architecture mismatch: checkpoint {self.fingerprint} vs expected {expected.fingerprint()}"
            )


def _write_table(buf, tensors: dict[str, np.ndarray]) -> None:
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())


def to_bytes(ckpt: Checkpoint) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    fp = ckpt.fingerprint.encode("utf-8")
    buf.write(struct.pack("<I", len(fp)))
    buf.write(fp)
    _write_table(buf, {k: v.data for k, v in ckpt.tensors.items()})
    opt = ckpt.optimizer
    if opt is None:
        buf.write(b"\x00")
    else:
        buf.write(b"\x01")
        buf.write(struct.pack("<Q4d", opt.step, opt.learning_rate, opt.beta1, opt.beta2, opt.epsilon))
        moments = {f"m/{k}": v for k, v in opt.first_moment.items()}
        moments.update({f"v/{k}": v for k, v in opt.second_moment.items()})
        _write_table(buf, moments)
    buf.write(struct.pack("<Q", ckpt.step))
    return buf.getvalue()


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(ckpt))


class _Reader:
    def __init__(self, data: bytes, source: str):
        self.data = data
        self.pos = 0
        self.source = source

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.source}: truncated while reading {what}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def table(self, section: str) -> dict[str, np.ndarray]:
        (count,) = self.unpack("<I", f"{section} tensor count")
        out = {}
        for idx in range(count):
            label = f"{section} tensor #{idx}"
            (nlen,) = self.unpack("<I", f"{label} name length")
            name = self.take(nlen, f"{label} name").decode("utf-8")
            label = f"{section} tensor #{idx} {name!r}"
            (rank,) = self.unpack("<I", f"{label} rank")
            shape = self.unpack(f"<{rank}Q", f"{label} extents")
            size = int(np.prod(shape, dtype=np.int64))
            values = np.frombuffer(self.take(4 * size, f"{label} values"), dtype="<f4")
            out[name] = values.reshape(shape).astype(np.float32)
        return out


def from_bytes(data: bytes, source: str = "<bytes>") -> Checkpoint:
    r = _Reader(data, source)
    if r.take(len(MAGIC), "header") != MAGIC:
        raise CheckpointError(f"{source}: bad magic/version header (expected {MAGIC!r})")
    (fplen,) = r.unpack("<I", "fingerprint length")
    fingerprint = r.take(fplen, "fingerprint").decode("utf-8")
    tensors = {k: Tensor(v, requires_grad=False, dtype=np.float32) for k, v in r.table("parameter").items()}
    (flag,) = r.unpack("<B", "optimizer flag")
    optimizer = None
    if flag == 1:
        step, lr, b1, b2, eps = r.unpack("<Q4d", "optimizer header")
        moments = r.table("optimizer")
        optimizer = AdamState(lr, b1, b2, eps, step)
        for key, arr in moments.items():
            kind, name = key.split("/", 1)
            (optimizer.first_moment if kind == "m" else optimizer.second_moment)[name] = arr
    elif flag != 0:
        raise CheckpointError(f"{source}: invalid optimizer flag {flag}")
    (step,) = r.unpack("<Q", "training step")
    if r.pos != len(data):
        raise CheckpointError(f"{source}: {len(data) - r.pos} trailing bytes after checkpoint")
    return Checkpoint(fingerprint, tensors, optimizer, int(step))


def load_checkpoint(path: str | Path, expected: UNetConfig | None = None) -> Checkpoint:
    """Read a checkpoint; with ``expected`` the architecture fingerprint must match."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint ({exc.strerror})") from exc
    ckpt = from_bytes(data, str(path))
    if expected is not None:
        ckpt.check_config(expected)
    return ckpt
