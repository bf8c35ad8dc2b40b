import numpy as np
import pytest

from lowlight.data import write_image


def synthetic_pairs(n=2, size=64, seed=0):
    """Smooth sinusoidal scenes (high) and dimmed, noisy copies (low), 8-bit quantized."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    pairs = []
    for k in range(n):
        freq = rng.uniform(1, 4, size=3)
        phase = rng.uniform(0, 2 * np.pi, size=3)
        high = np.stack(
            [0.5 + 0.35 * np.sin(2 * np.pi * (freq[c] * xx + (k + 1) * yy) + phase[c]) for c in range(3)], axis=-1
        )
        low = np.clip(0.15 * high + rng.normal(0, 0.01, high.shape), 0, 1)
        pairs.append(((np.round(low * 255) / 255).astype(np.float32), (np.round(high * 255) / 255).astype(np.float32)))
    return pairs


@pytest.fixture
def pairs():
    return synthetic_pairs()


@pytest.fixture
def dataset_dir(tmp_path, pairs):
    root = tmp_path / "data"
    for k, (low, high) in enumerate(pairs):
        write_image(root / "low" / f"img{k}.png", low)
        write_image(root / "high" / f"img{k}.png", high)
    return root


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(line)
