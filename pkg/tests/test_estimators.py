import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import synthetic_pairs

from lowlight.checkpoint import to_bytes
from lowlight.estimators import Restorer, TwoStageEnhancer, ValueEnhancer
from lowlight.validation import check_image, check_images

SMALL = dict(base_channels=4, depth=2, crop_size=16, batch_size=2, learning_rate=1e-3, seed=2)


@pytest.fixture(scope="module")
def data():
    pairs = synthetic_pairs(n=2, size=24, seed=9)
    return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])


def test_params_and_clone():
    est = TwoStageEnhancer(stage1_steps=3, with_channel_attention=False)
    params = est.get_params()
    assert params["stage1_steps"] == 3 and params["with_channel_attention"] is False
    twin = clone(est)
    assert twin.get_params() == params
    assert clone(ValueEnhancer(depth=2)).depth == 2


def test_not_fitted(data):
    with pytest.raises(NotFittedError):
        ValueEnhancer().predict(data[0])
    with pytest.raises(NotFittedError):
        TwoStageEnhancer().predict(data[0])


def test_value_enhancer(data):
    X, y = data
    est = ValueEnhancer(max_steps=2, **SMALL).fit(X, y)
    assert len(est.loss_history_) == 2
    v = est.predict(X)
    rgb = est.transform(X)
    assert v.shape == (2, 24, 24) and rgb.shape == (2, 24, 24, 3)
    assert v.min() >= 0 and v.max() <= 1
    # transform keeps the low-light hue and saturation and swaps in the predicted V
    np.testing.assert_allclose(rgb.max(axis=-1), v, atol=1e-6)


def test_two_stage_fit_predict_score(data):
    X, y = data
    model = TwoStageEnhancer(stage1_steps=2, stage2_steps=2, **SMALL).fit(X, y)
    out = model.predict(X[0])
    assert out.shape == (1, 24, 24, 3)
    assert np.isfinite(model.score(X, y))
    again = TwoStageEnhancer(stage1_steps=2, stage2_steps=2, **SMALL).fit(X, y)
    assert to_bytes(again.restorer_.checkpoint_) == to_bytes(model.restorer_.checkpoint_)

    wrapped = TwoStageEnhancer.from_checkpoints(model.enhancer_.checkpoint_, model.restorer_.checkpoint_)
    np.testing.assert_array_equal(wrapped.predict(X), model.predict(X))


def test_restorer_needs_enhancer(data):
    with pytest.raises(ValueError):
        Restorer().fit(*data)


def test_list_of_mixed_sizes(data):
    X, y = data
    model = TwoStageEnhancer(stage1_steps=1, stage2_steps=1, **SMALL).fit(X, y)
    out = model.predict([X[0], X[1][:20, :12]])
    assert isinstance(out, list) and out[1].shape == (20, 12, 3)


def test_validation():
    assert check_image(np.full((2, 2, 3), 255, np.uint8)).max() == 1.0
    with pytest.raises(ValueError):
        check_image(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        check_image(np.full((2, 2, 3), 2.0))
    with pytest.raises(TypeError):
        check_image(np.zeros((2, 2, 3), dtype=np.int32))
    with pytest.raises(ValueError):
        check_images([])
    with pytest.raises(ValueError, match="hold"):
        ValueEnhancer().fit([np.zeros((16, 16, 3))], [np.zeros((16, 16, 3))] * 2)
