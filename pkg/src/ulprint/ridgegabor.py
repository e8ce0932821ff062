"""Ridge orientation/frequency estimation, oriented Gabor filtering and
ground-truth ridge mask generation.

Angles describe the ridge direction in image coordinates (x to the right,
y down the rows), folded into ``[0, pi)``. Latents have dark ridges; masks
mark ridge pixels with 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .imagecore import check_gray, check_mask, check_same_shape
from .preenhance import PreenhanceConfig, contrast_boost, pre_enhance

MIN_PERIOD = 3.0
MAX_PERIOD = 25.0


@dataclass
class OrientationField:
    block: int
    angles: np.ndarray      # (gy, gx), radians in [0, pi)
    coherence: np.ndarray   # (gy, gx), in [0, 1]
    shape: tuple            # source image (rows, cols)

    @property
    def grid(self):
        return self.angles.shape


@dataclass
class FrequencyField:
    block: int
    freqs: np.ndarray   # cycles/pixel; NaN never stored, invalid blocks hold 0
    valid: np.ndarray   # bool per block

    @property
    def grid(self):
        return self.freqs.shape


@dataclass(frozen=True)
class GaborParams:
    sigma_x: float = 4.0
    sigma_y: float = 4.0
    kernel_radius: int = 11

    def __post_init__(self):
        if not (self.sigma_x > 0 and self.sigma_y > 0):
            raise ValueError("Gabor sigmas must be > 0")
        if self.kernel_radius < 2 * max(self.sigma_x, self.sigma_y):
            raise ValueError("kernel_radius must be at least 2*max(sigma)")


@dataclass(frozen=True)
class GaborConfig:
    block: int = 16
    gabor: GaborParams = field(default_factory=GaborParams)
    min_coherence: float = 0.3
    fusion: str = "min"
    contrast_boost: float = 1.5
    min_component: int = 4
    signature_length: int = 48
    region_smooth: int = 3

    def __post_init__(self):
        if self.fusion not in ("min", "mean"):
            raise ValueError(f"fusion must be 'min' or 'mean', got {self.fusion!r}")
        if self.block < 4:
            raise ValueError("block must be >= 4")
        if not 0.0 <= self.min_coherence <= 1.0:
            raise ValueError("min_coherence must lie in [0, 1]")


def _block_sums(plane: np.ndarray, block: int) -> np.ndarray:
    h, w = plane.shape
    gy, gx = -(-h // block), -(-w // block)
    padded = np.zeros((gy * block, gx * block))
    padded[:h, :w] = plane
    return padded.reshape(gy, block, gx, block).sum(axis=(1, 3))


def _upsample_blocks(grid: np.ndarray, block: int, shape) -> np.ndarray:
    return np.repeat(np.repeat(grid, block, axis=0), block, axis=1)[: shape[0], : shape[1]]


def orientation_field(img: np.ndarray, block: int = 16) -> OrientationField:
    """Block-wise ridge orientation from Sobel gradients (least-squares estimate)."""
    img = check_gray(img)
    if min(img.shape) < 2 * block:
        raise ValueError(f"image {img.shape} needs at least {2 * block} pixels per side for block {block}")
    gx = ndimage.sobel(img, axis=1, mode="nearest")
    gy = ndimage.sobel(img, axis=0, mode="nearest")
    vx = _block_sums(2.0 * gx * gy, block)
    vy = _block_sums(gx * gx - gy * gy, block)
    mag = _block_sums(gx * gx + gy * gy, block)
    angles = np.mod(0.5 * np.arctan2(vx, vy) + np.pi / 2, np.pi)
    angles[angles >= np.pi] = 0.0
    norm = np.hypot(vx, vy)
    coherence = np.zeros_like(mag)
    ok = mag >= 1e-12
    coherence[ok] = np.clip(norm[ok] / mag[ok], 0.0, 1.0)
    return OrientationField(block, angles, coherence, img.shape)


def _signature_period(sig: np.ndarray) -> float:
    """Mean spacing of local maxima (sub-pixel, parabolic); nan if < 2 peaks."""
    s = sig - sig.mean()
    if np.ptp(s) < 1e-6:
        return np.nan
    inner = s[1:-1]
    peaks = np.nonzero((inner > s[:-2]) & (inner >= s[2:]) & (inner > 0))[0] + 1
    if len(peaks) < 2:
        return np.nan
    left, mid, right = s[peaks - 1], s[peaks], s[peaks + 1]
    denom = left - 2 * mid + right
    offset = np.where(np.abs(denom) > 1e-12, 0.5 * (left - right) / np.where(denom == 0, 1, denom), 0.0)
    pos = peaks + np.clip(offset, -0.5, 0.5)
    return float((pos[-1] - pos[0]) / (len(pos) - 1))


def ridge_frequency(img: np.ndarray, of: OrientationField, length: int = 48) -> FrequencyField:
    """Block-wise ridge frequency from the x-signature across the ridges.

    A ``length`` x ``block`` window centred on each block is sampled with its
    long axis normal to the ridges; averaging along the ridge direction
    gives a 1-D signature whose mean peak spacing is the ridge period.
    """
    img = check_gray(img)
    if img.shape != tuple(of.shape):
        raise ValueError(f"orientation field built for {of.shape}, image is {img.shape}")
    b = of.block
    gy, gx = of.grid
    cy = (np.arange(gy) * b + (b - 1) / 2.0)[:, None]
    cx = (np.arange(gx) * b + (b - 1) / 2.0)[None, :]
    theta = of.angles
    # unit vectors along ridge and across (normal)
    rx, ry = np.cos(theta), np.sin(theta)
    nx, ny = -ry, rx
    k = np.arange(length) - (length - 1) / 2.0
    d = np.arange(b) - (b - 1) / 2.0
    xs = cx[..., None, None] + k[:, None] * nx[..., None, None] + d[None, :] * rx[..., None, None]
    ys = cy[..., None, None] + k[:, None] * ny[..., None, None] + d[None, :] * ry[..., None, None]
    samples = ndimage.map_coordinates(img, [ys.ravel(), xs.ravel()], order=1, mode="nearest")
    signatures = samples.reshape(gy, gx, length, b).mean(axis=3)
    freqs = np.zeros((gy, gx))
    valid = np.zeros((gy, gx), dtype=bool)
    for i in range(gy):
        for j in range(gx):
            period = _signature_period(signatures[i, j])
            if np.isfinite(period) and MIN_PERIOD <= period <= MAX_PERIOD:
                freqs[i, j] = 1.0 / period
                valid[i, j] = True
    return FrequencyField(b, freqs, valid)


def gabor_kernel(theta: float, freq: float, gp: GaborParams = GaborParams()) -> np.ndarray:
    """Even-symmetric Gabor kernel for ridges running along ``theta``.

    The DC component is removed so flat regions give zero response.
    """
    r = gp.kernel_radius
    y, x = np.mgrid[-r:r + 1, -r:r + 1].astype(np.float64)
    # coordinate across the ridges
    u = -x * np.sin(theta) + y * np.cos(theta)
    v = x * np.cos(theta) + y * np.sin(theta)
    env = np.exp(-0.5 * (u * u / gp.sigma_x ** 2 + v * v / gp.sigma_y ** 2))
    kern = env * np.cos(2 * np.pi * freq * u)
    kern -= env * (kern.sum() / env.sum())
    return kern


def gabor_response(img: np.ndarray, of: OrientationField, ff: FrequencyField,
                   gp: GaborParams = GaborParams()):
    """Raw oriented Gabor response and the per-pixel validity map."""
    img = check_gray(img)
    if of.grid != ff.grid or of.block != ff.block or img.shape != tuple(of.shape):
        raise ValueError("orientation/frequency fields do not match the image")
    b, r = of.block, gp.kernel_radius
    h, w = img.shape
    gy, gx = of.grid
    padded = np.pad(img, ((r, gy * b - h + r), (r, gx * b - w + r)), mode="reflect")
    resp = np.zeros((gy * b, gx * b))
    win = np.lib.stride_tricks.sliding_window_view
    for i in range(gy):
        for j in range(gx):
            if not ff.valid[i, j]:
                continue
            patch = padded[i * b:(i + 1) * b + 2 * r, j * b:(j + 1) * b + 2 * r]
            kern = gabor_kernel(of.angles[i, j], ff.freqs[i, j], gp)
            resp[i * b:(i + 1) * b, j * b:(j + 1) * b] = np.einsum(
                "ijkl,kl->ij", win(patch, kern.shape), kern, optimize=False)
    valid = _upsample_blocks(ff.valid, b, img.shape)
    return resp[:h, :w], valid


def gabor_enhance(img: np.ndarray, of: OrientationField, ff: FrequencyField,
                  gp: GaborParams = GaborParams()) -> np.ndarray:
    """Oriented Gabor enhancement; invalid-frequency blocks pass through unchanged.

    The response over valid blocks is min-max rescaled to [0, 1], so dark
    ridges stay dark.
    """
    img = check_gray(img)
    resp, valid = gabor_response(img, of, ff, gp)
    out = img.copy()
    if valid.any():
        vals = resp[valid]
        lo, hi = vals.min(), vals.max()
        out[valid] = (vals - lo) / (hi - lo) if hi > lo else 0.5
    return out


def _renormalize(img: np.ndarray) -> np.ndarray:
    lo, hi = img.min(), img.max()
    if hi <= lo:
        return img.copy()
    return (img - lo) / (hi - lo)


def fuse_enhanced(a: np.ndarray, b: np.ndarray, c: np.ndarray, mode: str = "min") -> np.ndarray:
    """Fuse three enhanced variants (darkest wins by default), rescaled to [0, 1]."""
    a, b, c = (check_gray(x) for x in (a, b, c))
    check_same_shape(a, b, c)
    if mode == "min":
        fused = np.minimum(np.minimum(a, b), c)
    elif mode == "mean":
        fused = (a + b + c) / 3.0
    else:
        raise ValueError(f"unknown fusion mode {mode!r}")
    return _renormalize(fused)


def binarize(img: np.ndarray, of: OrientationField, ff: FrequencyField,
             gp: GaborParams = GaborParams()) -> np.ndarray:
    """Ridge mask: 1 where the zero-mean Gabor response is negative (darker
    than the local mean); invalid blocks are 0."""
    resp, valid = gabor_response(img, of, ff, gp)
    return ((resp < 0.0) & valid).astype(np.uint8)


def region_mask(of: OrientationField, ff: FrequencyField, min_coherence: float = 0.3,
                smooth: int = 0) -> np.ndarray:
    """Recoverable-region mask: coherent blocks with a valid frequency.

    ``smooth > 1`` applies a ``smooth x smooth`` majority vote on the block
    grid (outside counts as unrecoverable), which drops isolated blocks
    triggered by strokes in the background.
    """
    if of.grid != ff.grid:
        raise ValueError("orientation and frequency grids differ")
    good = (of.coherence >= min_coherence) & ff.valid
    if smooth > 1:
        good = ndimage.median_filter(good.astype(np.uint8), size=smooth, mode="constant").astype(bool)
    return _upsample_blocks(good, of.block, of.shape).astype(np.uint8)


def remove_small_components(mask: np.ndarray, min_size: int = 4) -> np.ndarray:
    """Drop 8-connected white components with fewer than ``min_size`` pixels."""
    mask = check_mask(mask)
    labels, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        return mask
    sizes = np.bincount(labels.ravel())
    keep = sizes >= min_size
    keep[0] = False
    return keep[labels].astype(np.uint8)


def enhance_variant(img: np.ndarray, cfg: GaborConfig = GaborConfig()) -> np.ndarray:
    """Stand-in ridge enhancer: oriented Gabor filtering with fields from ``img`` itself."""
    of = orientation_field(img, cfg.block)
    ff = ridge_frequency(img, of, cfg.signature_length)
    return gabor_enhance(img, of, ff, cfg.gabor)


def make_groundtruth(img: np.ndarray, cfg: GaborConfig = GaborConfig(),
                     pre_cfg: PreenhanceConfig = PreenhanceConfig()) -> np.ndarray:
    """Ground-truth ridge mask from a latent.

    Three variants (original, pre-enhanced, pre-enhanced with boosted
    contrast) are each Gabor-enhanced and fused; the fused image is
    binarized and restricted to the recoverable region, and speckles are
    removed. The recoverable region is judged on the pre-enhanced image:
    after Gabor filtering even pure noise looks coherent.
    """
    img = check_gray(img)
    pre = pre_enhance(img, pre_cfg)
    variants = [img, pre, contrast_boost(pre, cfg.contrast_boost)]
    enhanced = [enhance_variant(v, cfg) for v in variants]
    fused = fuse_enhanced(*enhanced, mode=cfg.fusion)
    of = orientation_field(fused, cfg.block)
    ff = ridge_frequency(fused, of, cfg.signature_length)
    of_pre = orientation_field(pre, cfg.block)
    ff_pre = ridge_frequency(pre, of_pre, cfg.signature_length)
    region = region_mask(of_pre, ff_pre, cfg.min_coherence, cfg.region_smooth)
    mask = binarize(fused, of, ff, cfg.gabor) & region
    return remove_small_components(mask, cfg.min_component)
