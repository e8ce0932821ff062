import numpy as np
import pytest

from ulprint.imagecore import save_mask
from ulprint.preenhance import fallback_preprocess
from ulprint.ridgegabor import make_groundtruth
from ulprint.segnet.model import ToyNet
from ulprint.segnet.predict import (FileMaskPredictor, GaborPredictor, ModelPredictor, PredictorError, predict_mask,
                                    predict_with_fallback)
from ulprint.synthetic import synthetic_latent


def mask_with_ratio(ratio, shape=(100, 100)):
    m = np.zeros(shape[0] * shape[1], np.uint8)
    m[: int(round(ratio * m.size))] = 1
    return m.reshape(shape)


class Scripted:
    """Returns the queued masks in order and records its inputs."""

    def __init__(self, *masks):
        self.masks = list(masks)
        self.inputs = []

    def __call__(self, latent):
        self.inputs.append(latent.copy())
        return self.masks[len(self.inputs) - 1]


LATENT = np.random.default_rng(0).random((100, 100))


def test_high_coverage_returns_immediately():
    stub = Scripted(mask_with_ratio(0.10), mask_with_ratio(0.5))
    mask, rep = predict_with_fallback(LATENT, stub, return_report=True)
    assert len(stub.inputs) == 1 and not rep.triggered
    assert np.array_equal(mask, stub.masks[0])


def test_retry_keeps_larger_second_mask():
    stub = Scripted(mask_with_ratio(0.03), mask_with_ratio(0.07))
    mask, rep = predict_with_fallback(LATENT, stub, return_report=True)
    assert len(stub.inputs) == 2 and rep.triggered and rep.used_second
    assert np.array_equal(mask, stub.masks[1])
    assert np.array_equal(stub.inputs[1], fallback_preprocess(LATENT))
    assert rep.final_ratio == pytest.approx(0.07)


@pytest.mark.parametrize("second", [0.02, 0.03])
def test_retry_keeps_first_unless_count_increases(second):
    stub = Scripted(mask_with_ratio(0.03), mask_with_ratio(second))
    mask = predict_with_fallback(LATENT, stub)
    assert len(stub.inputs) == 2
    assert np.array_equal(mask, stub.masks[0])


def test_threshold_boundary():
    stub = Scripted(mask_with_ratio(0.05), mask_with_ratio(0.9))
    predict_with_fallback(LATENT, stub)
    assert len(stub.inputs) == 1


def test_never_more_than_two_calls():
    stub = Scripted(*[np.zeros((100, 100), np.uint8)] * 5)
    predict_with_fallback(LATENT, stub)
    assert len(stub.inputs) == 2


def test_predict_mask_checks_output():
    with pytest.raises(PredictorError):
        predict_mask(LATENT, lambda x: np.zeros((10, 10), np.uint8))
    with pytest.raises(ValueError):
        predict_mask(LATENT, lambda x: np.full((100, 100), 0.5))


def test_file_predictor_verbatim(tmp_path):
    m = (np.random.default_rng(1).random((30, 40)) > 0.5).astype(np.uint8)
    save_mask(m, tmp_path / "m.png")
    assert np.array_equal(predict_mask(np.zeros((30, 40)), FileMaskPredictor(tmp_path / "m.png")), m)


def test_gabor_predictor_delegates():
    img, _, _ = synthetic_latent(128, seed=2)
    assert np.array_equal(predict_mask(img, GaborPredictor()), make_groundtruth(img))


def test_model_predictor(tmp_path):
    from ulprint.segnet.model import save_checkpoint
    net = ToyNet(seed=4)
    save_checkpoint(net, tmp_path / "n.ulpt")
    img = np.random.default_rng(3).random((64, 64))
    assert np.array_equal(ModelPredictor.from_checkpoint(tmp_path / "n.ulpt")(img), net.predict_mask(img))
