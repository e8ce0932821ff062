"""Guided filtering of a latent image with a ridge mask as guidance, plus the final blend."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imagecore import blend_weighted, check_gray, check_mask, check_same_shape


@dataclass(frozen=True)
class GuidedFilterParams:
    r: int = 5
    eps: float = 1e-6
    w_latent: float = 0.2
    w_guided: float = 0.8

    def __post_init__(self):
        if int(self.r) != self.r or self.r < 1:
            raise ValueError(f"r must be an integer >= 1, got {self.r}")
        if not self.eps > 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")
        if not (0.0 <= self.w_latent <= 1.0 and 0.0 <= self.w_guided <= 1.0):
            raise ValueError("blend weights must lie in [0, 1]")
        if abs(self.w_latent + self.w_guided - 1.0) > 1e-9:
            raise ValueError("w_latent + w_guided must equal 1")


@dataclass
class GuidedFilterTrace:
    """Every intermediate plane of one guided-filter evaluation."""

    mean_I: np.ndarray
    mean_p: np.ndarray
    cov_Ip: np.ndarray
    var_I: np.ndarray
    a: np.ndarray
    b: np.ndarray
    mean_a: np.ndarray
    mean_b: np.ndarray
    n_clamped: int = 0  # output pixels pulled back into [0, 1]


def box_mean(plane: np.ndarray, r: int) -> np.ndarray:
    """Mean over the (2r+1)x(2r+1) window around every pixel.

    Borders are edge-replicated so every window is full size. Runs in O(N)
    through a zero-bordered summed-area table.
    """
    r = int(r)
    if r < 1:
        raise ValueError(f"radius must be >= 1, got {r}")
    x = np.asarray(plane, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("box_mean expects a 2-D plane")
    h, w = x.shape
    k = 2 * r + 1
    padded = np.pad(x, r, mode="edge")
    sat = np.zeros((h + 2 * r + 1, w + 2 * r + 1), dtype=np.float64)
    np.cumsum(padded, axis=0, out=sat[1:, 1:])
    np.cumsum(sat[1:, 1:], axis=1, out=sat[1:, 1:])
    total = sat[k:, k:] - sat[:-k, k:] - sat[k:, :-k] + sat[:-k, :-k]
    return total / (k * k)


def guided_filter(I: np.ndarray, p: np.ndarray, params: GuidedFilterParams = GuidedFilterParams()):
    """Filter latent ``I`` using mask ``p`` as guidance.

    Returns ``(q, trace)`` where ``q = mean_a * I + mean_b`` clamped to [0, 1].
    ``p`` may be a binary mask or any plane in [0, 1].
    """
    I = check_gray(I, "latent")
    p = np.asarray(p)
    p = check_mask(p).astype(np.float64) if p.dtype != np.float64 else check_gray(p, "guidance")
    check_same_shape(I, p)
    r, eps = params.r, params.eps

    mean_I = box_mean(I, r)
    mean_p = box_mean(p, r)
    cov_Ip = box_mean(I * p, r) - mean_I * mean_p
    var_I = np.maximum(box_mean(I * I, r) - mean_I * mean_I, 0.0)

    a = cov_Ip / (var_I + eps)
    b = mean_p - a * mean_I
    mean_a = box_mean(a, r)
    mean_b = box_mean(b, r)

    q_raw = mean_a * I + mean_b
    n_clamped = int(np.count_nonzero((q_raw < 0.0) | (q_raw > 1.0)))
    q = np.clip(q_raw, 0.0, 1.0)
    trace = GuidedFilterTrace(mean_I, mean_p, cov_Ip, var_I, a, b, mean_a, mean_b, n_clamped)
    return q, trace


def enhance_latent(latent: np.ndarray, ridge_mask: np.ndarray,
                   params: GuidedFilterParams = GuidedFilterParams()) -> np.ndarray:
    """Guided-filter the latent with its ridge mask, then blend with the latent.

    Defaults: radius 5, eps 1e-6, 0.2 latent / 0.8 filtered.
    """
    ridge_mask = check_mask(ridge_mask)
    q, _ = guided_filter(latent, ridge_mask, params)
    return blend_weighted(latent, q, params.w_latent, params.w_guided)
