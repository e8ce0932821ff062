"""Synthetic latents with known ground truth, used by tests, demos and the
bundled toy-training dataset."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import ndimage

from .augment import draw_random_letters, draw_random_lines, pair_rng
from .imagecore import save_gray, save_mask


def grating(shape, period: float, theta: float = np.pi / 2, phase: float = 0.5,
            lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Sinusoidal ridge pattern whose ridges run along ``theta``.

    ``theta`` is measured from the x axis (columns) towards +y (rows);
    ``theta = pi/2`` gives vertical ridges. ``phase`` is in pixels; the
    half-pixel default keeps samples off the zero crossings.
    """
    if np.isscalar(shape):
        shape = (shape, shape)
    y, x = np.mgrid[0:shape[0], 0:shape[1]].astype(np.float64)
    u = -x * np.sin(theta) + y * np.cos(theta)
    s = np.sin(2 * np.pi * (u + phase) / period)
    return lo + (hi - lo) * (0.5 + 0.5 * s)


def grating_ridges(shape, period: float, theta: float = np.pi / 2, phase: float = 0.5) -> np.ndarray:
    """Ridge (dark half-period) mask of :func:`grating`."""
    return (grating(shape, period, theta, phase) < 0.5).astype(np.uint8)


def ellipse_mask(shape, center, axes, angle: float = 0.0) -> np.ndarray:
    y, x = np.mgrid[0:shape[0], 0:shape[1]].astype(np.float64)
    dx, dy = x - center[1], y - center[0]
    c, s = np.cos(angle), np.sin(angle)
    u, v = c * dx + s * dy, -s * dx + c * dy
    return ((u / axes[1]) ** 2 + (v / axes[0]) ** 2 <= 1.0).astype(np.uint8)


def synthetic_latent(size: int = 256, seed: int = 0, period: float = 9.0, noise: float = 0.04,
                     contamination: bool = True):
    """Latent-like image: a grating blob on a bright textured background with
    handwriting-like strokes and glyphs.

    Returns ``(image, ridge_truth, blob)``. ``ridge_truth`` marks the dark
    ridges inside the blob.
    """
    rng = pair_rng(seed, 0)
    shape = (size, size)
    theta = float(rng.uniform(0, np.pi))
    blob = ellipse_mask(shape, (size / 2 + rng.uniform(-8, 8), size / 2 + rng.uniform(-8, 8)),
                        (0.36 * size, 0.30 * size), float(rng.uniform(0, np.pi)))
    ridges = grating_ridges(shape, period, theta) & blob
    g = grating(shape, period, theta, lo=0.15, hi=0.75)
    texture = ndimage.gaussian_filter(rng.normal(0.0, 1.0, shape), 6.0)
    texture = 0.78 + 0.06 * texture / (np.abs(texture).max() + 1e-12)
    img = np.where(blob == 1, g, texture)
    if contamination:
        img = draw_random_lines(img, rng, max_lines=4, width=(1, 3), ink=(0.2, 0.4))
        img = draw_random_letters(img, rng, n=6, scale=(3, 5), ink=(0.2, 0.4))
    img = np.clip(img + rng.normal(0.0, noise, shape), 0.0, 1.0)
    return img, ridges, blob


def grating_sample(size: int = 256, seed: int = 0, index: int = 0):
    """One (image, ridge mask) pair of the toy segmentation dataset.

    Each sample has a grating blob of random period (7-11 px) and
    orientation on a smooth noisy background; the mask holds the ridges.
    """
    rng = pair_rng(seed, index)
    shape = (size, size)
    theta = float(rng.uniform(0, np.pi))
    period = float(rng.uniform(7.0, 11.0))
    phase = float(rng.uniform(0, period))
    c = size / 2 + rng.uniform(-size / 8, size / 8, size=2)
    axes = rng.uniform(0.22 * size, 0.38 * size, size=2)
    blob = ellipse_mask(shape, c, axes, float(rng.uniform(0, np.pi)))
    g = grating(shape, period, theta, phase, lo=0.1, hi=0.7)
    ridges = (grating(shape, period, theta, phase) < 0.5).astype(np.uint8) & blob
    texture = ndimage.gaussian_filter(rng.normal(0.0, 1.0, shape), 4.0)
    texture = 0.75 + 0.12 * texture / (np.abs(texture).max() + 1e-12)
    img = np.where(blob == 1, g, texture)
    img = np.clip(img + rng.normal(0.0, 0.03, shape), 0.0, 1.0)
    return img, ridges


def write_grating_dataset(out_dir, count: int = 200, size: int = 256, seed: int = 0) -> list[Path]:
    """Write ``count`` pairs as ``sample_XXXX.png`` / ``sample_XXXX.mask.png``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i in range(count):
        img, mask = grating_sample(size, seed, i)
        stem = f"sample_{i:04d}"
        save_gray(img, out / f"{stem}.png")
        save_mask(mask, out / f"{stem}.mask.png")
        written.append(out / f"{stem}.png")
    return written
