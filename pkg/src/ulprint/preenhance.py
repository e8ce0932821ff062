"""Classical pre-enhancement: CLAHE, fast non-local means, adaptive threshold.

These stages feed both the ground-truth generator (``pre_enhance``) and the
low-coverage retry path of the mask predictor (``fallback_preprocess``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .guidedblend import box_mean
from .imagecore import blend_weighted, check_gray


@dataclass(frozen=True)
class ClaheParams:
    clip_limit: float = 2.0
    tiles_x: int = 8
    tiles_y: int = 8
    bins: int = 256

    def __post_init__(self):
        if not self.clip_limit > 0:
            raise ValueError("clip_limit must be > 0")
        if self.tiles_x < 1 or self.tiles_y < 1:
            raise ValueError("tile counts must be >= 1")
        if self.bins < 2:
            raise ValueError("bins must be >= 2")


@dataclass(frozen=True)
class NlMeansParams:
    h: float = 5.0  # on the 0-255 intensity scale
    template: int = 3
    search: int = 7

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be > 0")
        if self.template % 2 == 0 or self.search % 2 == 0:
            raise ValueError("template and search sizes must be odd")
        if self.template < 1 or self.search < self.template:
            raise ValueError("need 1 <= template <= search")


@dataclass(frozen=True)
class AdaptiveThreshParams:
    block: int = 15
    c: float = 0.02

    def __post_init__(self):
        if self.block % 2 == 0 or self.block < 3:
            raise ValueError(f"block must be odd and >= 3, got {self.block}")


@dataclass(frozen=True)
class PreenhanceConfig:
    clahe: ClaheParams = field(default_factory=ClaheParams)
    nlmeans: NlMeansParams = field(default_factory=NlMeansParams)
    threshold: AdaptiveThreshParams = field(default_factory=AdaptiveThreshParams)
    threshold_weight: float = 0.5


def _assert_unit(img: np.ndarray, stage: str) -> np.ndarray:
    if img.min() < 0.0 or img.max() > 1.0:
        raise AssertionError(f"{stage} left the [0, 1] range")
    return img


# --------------------------------------------------------------------- CLAHE

def _tile_edges(n: int, tiles: int) -> np.ndarray:
    return np.linspace(0, n, tiles + 1).round().astype(int)


def clahe_luts(img: np.ndarray, p: ClaheParams = ClaheParams(), return_flat: bool = False):
    """Per-tile clipped-histogram equalization lookup tables.

    Returns an array ``(tiles_y, tiles_x, bins)`` mapping bin index to an
    output intensity in [0, 1]. Every table is nondecreasing. Tiles whose
    pixels all fall in one bin have no contrast to redistribute; they get
    the identity table (bin centers) and are flagged in the optional
    ``flat`` array so :func:`clahe` can pass their pixels through exactly.
    """
    img = check_gray(img)
    h, w = img.shape
    if h < p.tiles_y or w < p.tiles_x:
        raise ValueError(f"image {w}x{h} is smaller than the {p.tiles_x}x{p.tiles_y} tile grid")
    bins = p.bins
    idx = np.minimum((img * bins).astype(np.int64), bins - 1)
    ys, xs = _tile_edges(h, p.tiles_y), _tile_edges(w, p.tiles_x)
    luts = np.empty((p.tiles_y, p.tiles_x, bins), dtype=np.float64)
    flat = np.zeros((p.tiles_y, p.tiles_x), dtype=bool)
    identity = (np.arange(bins) + 0.5) / bins
    for ty in range(p.tiles_y):
        for tx in range(p.tiles_x):
            tile = idx[ys[ty]:ys[ty + 1], xs[tx]:xs[tx + 1]]
            n = tile.size
            hist = np.bincount(tile.ravel(), minlength=bins).astype(np.float64)
            if np.count_nonzero(hist) == 1:
                flat[ty, tx] = True
                luts[ty, tx] = identity
                continue
            limit = max(p.clip_limit * n / bins, 1.0)
            excess = np.sum(np.maximum(hist - limit, 0.0))
            hist = np.minimum(hist, limit) + excess / bins
            cdf = np.cumsum(hist)
            luts[ty, tx] = np.clip(cdf / cdf[-1], 0.0, 1.0)
    return (luts, flat) if return_flat else luts


def clahe(img: np.ndarray, p: ClaheParams = ClaheParams()) -> np.ndarray:
    """Contrast-limited adaptive histogram equalization.

    Tile mappings are interpolated bilinearly between tile centers; pixels
    outside the outermost centers use the nearest tile(s).
    """
    img = check_gray(img)
    luts, flat = clahe_luts(img, p, return_flat=True)
    h, w = img.shape
    idx = np.minimum((img * p.bins).astype(np.int64), p.bins - 1)

    def axis_weights(n, tiles):
        edges = _tile_edges(n, tiles)
        centers = (edges[:-1] + edges[1:] - 1) / 2.0
        pos = np.arange(n, dtype=np.float64)
        hi = np.clip(np.searchsorted(centers, pos, side="right"), 1, max(tiles - 1, 1))
        lo = hi - 1
        if tiles == 1:
            return np.zeros(n, int), np.zeros(n, int), np.zeros(n)
        t = np.clip((pos - centers[lo]) / (centers[hi] - centers[lo]), 0.0, 1.0)
        return lo, hi, t

    y0, y1, ty = axis_weights(h, p.tiles_y)
    x0, x1, tx = axis_weights(w, p.tiles_x)
    Y0, X0 = np.meshgrid(y0, x0, indexing="ij")
    Y1, X1 = np.meshgrid(y1, x1, indexing="ij")
    TY, TX = np.meshgrid(ty, tx, indexing="ij")

    def mapped(Y, X):
        return np.where(flat[Y, X], img, luts[Y, X, idx])

    # lerp form keeps equal corner values exact
    top = mapped(Y0, X0)
    top = top + TX * (mapped(Y0, X1) - top)
    bottom = mapped(Y1, X0)
    bottom = bottom + TX * (mapped(Y1, X1) - bottom)
    out = top + TY * (bottom - top)
    return _assert_unit(np.clip(out, 0.0, 1.0), "clahe")


# ---------------------------------------------------------- non-local means

def nl_means(img: np.ndarray, p: NlMeansParams = NlMeansParams(), return_weight_sum: bool = False):
    """Fast non-local means.

    For every offset in the search window the squared-difference plane is
    box-averaged over the template window with a summed-area table, so the
    cost is O(N * search^2) whatever the template size. Weight of a
    candidate is ``exp(-d2 / h^2)`` with ``d2`` the mean squared patch
    difference and ``h = p.h / 255``.
    """
    img = check_gray(img)
    rows, cols = img.shape
    if rows <= p.search or cols <= p.search:
        raise ValueError(f"image {cols}x{rows} must be larger than the {p.search}x{p.search} search window")
    sr, tr = p.search // 2, p.template // 2
    h2 = (p.h / 255.0) ** 2
    pad = sr + tr
    padded = np.pad(img, pad, mode="reflect")
    core = padded[sr:sr + rows + 2 * tr, sr:sr + cols + 2 * tr]
    acc = np.zeros_like(img)
    wsum = np.zeros_like(img)
    k = p.template
    for dy in range(-sr, sr + 1):
        for dx in range(-sr, sr + 1):
            shifted = padded[sr + dy:sr + dy + rows + 2 * tr, sr + dx:sr + dx + cols + 2 * tr]
            diff2 = (core - shifted) ** 2
            if tr:
                sat = np.zeros((diff2.shape[0] + 1, diff2.shape[1] + 1))
                sat[1:, 1:] = diff2.cumsum(0).cumsum(1)
                d2 = (sat[k:, k:] - sat[:-k, k:] - sat[k:, :-k] + sat[:-k, :-k]) / (k * k)
            else:
                d2 = diff2
            wgt = np.exp(-np.maximum(d2, 0.0) / h2)
            acc += wgt * shifted[tr:tr + rows, tr:tr + cols]
            wsum += wgt
    out = acc / wsum  # self-weight is 1, so wsum >= 1
    out = _assert_unit(np.clip(out, 0.0, 1.0), "nl_means")
    if return_weight_sum:
        return out, wsum
    return out


# -------------------------------------------------------- adaptive threshold

def adaptive_threshold(img: np.ndarray, p: AdaptiveThreshParams = AdaptiveThreshParams()) -> np.ndarray:
    """Mark pixels darker than (local mean - c) with 1, others with 0."""
    img = check_gray(img)
    if p.block >= min(img.shape):
        raise ValueError(f"block {p.block} must be smaller than the image sides {img.shape}")
    local = box_mean(img, p.block // 2)
    return np.where(img > local - p.c, 0.0, 1.0)


# ----------------------------------------------------------------- pipelines

def contrast_boost(img: np.ndarray, factor: float = 1.5) -> np.ndarray:
    """Linear stretch about the image mean, clamped to [0, 1]."""
    img = check_gray(img)
    m = img.mean()
    return np.clip(m + factor * (img - m), 0.0, 1.0)


def pre_enhance(img: np.ndarray, cfg: PreenhanceConfig = PreenhanceConfig()) -> np.ndarray:
    """CLAHE, denoise, then darken ridges by blending in the threshold map."""
    x = clahe(img, cfg.clahe)
    x = nl_means(x, cfg.nlmeans)
    ridges = adaptive_threshold(x, cfg.threshold)
    w = cfg.threshold_weight
    # ridge pixels (1) are pulled towards black
    out = blend_weighted(x, 1.0 - ridges, 1.0 - w, w)
    return _assert_unit(out, "pre_enhance")


FALLBACK_NLMEANS = NlMeansParams(h=5.0, template=3, search=7)


def fallback_preprocess(img: np.ndarray) -> np.ndarray:
    """Retry preprocessing for low-coverage masks; parameters are fixed."""
    img = check_gray(img)
    processed = nl_means(clahe(img, ClaheParams()), FALLBACK_NLMEANS)
    return blend_weighted(img, processed, 0.5, 0.5)
