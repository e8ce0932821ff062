"""Dice + focal segmentation loss with its analytic gradient, and IoU."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class LossParams:
    w_dice: float = 0.5
    w_focal: float = 0.5
    alpha: float = 0.25
    gamma: float = 2.0
    smooth: float = 1.0

    def __post_init__(self):
        if abs(self.w_dice + self.w_focal - 1.0) > 1e-9:
            raise ValueError("w_dice + w_focal must equal 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if not self.smooth > 0:
            raise ValueError("smooth must be > 0")


def _pair(pred, truth):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"dimension mismatch: pred {pred.shape} vs truth {truth.shape}")
    return pred, truth.astype(pred.dtype if pred.dtype.kind == "f" else np.float64)


def dice_loss(pred, truth, smooth: float = 1.0) -> float:
    """Soft Dice loss ``1 - (2*sum(p*t) + s) / (sum(p) + sum(t) + s)``."""
    p, t = _pair(pred, truth)
    inter = np.sum(p * t)
    return float(1.0 - (2.0 * inter + smooth) / (np.sum(p) + np.sum(t) + smooth))


def _p_true(pred, truth):
    p = np.clip(pred, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return np.where(truth > 0.5, p, 1.0 - p)


def focal_loss(pred, truth, alpha: float = 0.25, gamma: float = 2.0) -> float:
    """Mean of ``alpha * (1 - p_t)**gamma * -log(p_t)`` over pixels."""
    p, t = _pair(pred, truth)
    pt = _p_true(p, t)
    return float(np.mean(alpha * (1.0 - pt) ** gamma * -np.log(pt)))


def closs(pred, truth, params: LossParams = LossParams()) -> float:
    """Weighted sum of Dice and focal loss (both terms nonnegative)."""
    return (params.w_dice * dice_loss(pred, truth, params.smooth)
            + params.w_focal * focal_loss(pred, truth, params.alpha, params.gamma))


def closs_grad(pred, truth, params: LossParams = LossParams()) -> np.ndarray:
    """Analytic d(closs)/d(pred), same shape as ``pred``.

    Pixels where the probability is clamped get no focal gradient.
    """
    p, t = _pair(pred, truth)
    s = params.smooth
    inter = np.sum(p * t)
    denom = np.sum(p) + np.sum(t) + s
    g_dice = -(2.0 * t * denom - (2.0 * inter + s)) / (denom * denom)

    pt = _p_true(p, t)
    one_m = 1.0 - pt
    a, g = params.alpha, params.gamma
    if g == 0:
        d_pt = -a / pt
    else:
        d_pt = a * (g * one_m ** (g - 1.0) * np.log(pt) - one_m ** g / pt)
    inside = (p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)
    sign = np.where(t > 0.5, 1.0, -1.0)
    g_focal = np.where(inside, d_pt * sign, 0.0) / p.size
    return (params.w_dice * g_dice + params.w_focal * g_focal).astype(p.dtype, copy=False)


def iou(pred_mask, truth) -> float:
    """Intersection over union of two binary masks; 1.0 when both are empty."""
    a = np.asarray(pred_mask).astype(bool)
    b = np.asarray(truth).astype(bool)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union
