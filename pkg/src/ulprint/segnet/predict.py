"""Mask sources and the low-coverage retry around them.

A predictor is any callable ``latent -> binary mask``. Three are provided:
an external mask file, the Gabor ground-truth generator and a trained toy
model.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..imagecore import check_gray, check_mask, load_mask, white_ratio
from ..preenhance import PreenhanceConfig, fallback_preprocess
from ..ridgegabor import GaborConfig, make_groundtruth
from .model import ToyNet, load_checkpoint

FALLBACK_MIN_WHITE = 0.05


class PredictorError(RuntimeError):
    pass


class FileMaskPredictor:
    """Returns a pre-computed mask read from disk, whatever the input image."""

    def __init__(self, path):
        self.path = Path(path)

    def __call__(self, latent: np.ndarray) -> np.ndarray:
        return load_mask(self.path)


@dataclass
class GaborPredictor:
    cfg: GaborConfig = field(default_factory=GaborConfig)
    pre_cfg: PreenhanceConfig = field(default_factory=PreenhanceConfig)

    def __call__(self, latent: np.ndarray) -> np.ndarray:
        return make_groundtruth(latent, self.cfg, self.pre_cfg)


class ModelPredictor:
    """Toy segmenter forward pass, argmax of the two-class softmax."""

    def __init__(self, model: ToyNet):
        self.model = model

    @classmethod
    def from_checkpoint(cls, path) -> "ModelPredictor":
        return cls(load_checkpoint(path))

    def __call__(self, latent: np.ndarray) -> np.ndarray:
        return self.model.predict_mask(latent)


def predict_mask(latent: np.ndarray, predictor) -> np.ndarray:
    """Run ``predictor`` and check it returned a binary mask at latent resolution."""
    latent = check_gray(latent, "latent")
    mask = check_mask(predictor(latent), "predicted mask")
    if mask.shape != latent.shape:
        raise PredictorError(f"predictor returned a {mask.shape} mask for a {latent.shape} latent")
    return mask


@dataclass
class FallbackReport:
    triggered: bool
    calls: int
    first_ratio: float
    second_ratio: float | None = None
    used_second: bool = False

    @property
    def final_ratio(self) -> float:
        return self.second_ratio if self.used_second else self.first_ratio


def predict_with_fallback(latent: np.ndarray, predictor, min_white: float = FALLBACK_MIN_WHITE,
                          return_report: bool = False):
    """Predict a ridge mask, retrying once on a contrast-enhanced, denoised
    latent when fewer than ``min_white`` of the pixels are ridges.

    The retry's mask is kept only if it has strictly more ridge pixels.
    """
    first = predict_mask(latent, predictor)
    r1 = white_ratio(first)
    if r1 >= min_white:
        report = FallbackReport(False, 1, r1)
        return (first, report) if return_report else first
    second = predict_mask(fallback_preprocess(latent), predictor)
    r2 = white_ratio(second)
    use_second = np.count_nonzero(second) > np.count_nonzero(first)
    report = FallbackReport(True, 2, r1, r2, bool(use_second))
    mask = second if use_second else first
    return (mask, report) if return_report else mask
