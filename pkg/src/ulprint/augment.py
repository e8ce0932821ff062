"""Joint (image, mask) training augmentation.

Random numbers come from numpy's PCG64. ``pair_rng(seed, index)`` derives the
stream for image ``index`` from ``SeedSequence([seed, index])``, so a dataset
is reproducible regardless of the order or process in which images are
augmented.

Geometric steps (crop, flip/rotate, resized crop) act on image and mask
alike; cutout, lines and letters only touch the image.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .font5x7 import CHARSET, GLYPHS
from .imagecore import check_gray, check_mask, check_same_shape


@dataclass(frozen=True)
class AugmentConfig:
    crop: int = 256
    p_geom: float = 0.75
    p_rrc: float = 0.5
    rrc_scale: tuple = (0.8, 1.2)
    p_cutout: float = 0.3
    cutout_max_holes: int = 5
    cutout_hole: int = 10
    p_lines: float = 0.3
    p_letters: float = 0.3
    seed: int = 0
    max_lines: int = 4
    line_width: tuple = (1, 3)
    max_letters: int = 6
    letter_scale: tuple = (2, 6)
    ink: tuple = (0.0, 0.3)

    def __post_init__(self):
        for name in ("p_geom", "p_rrc", "p_cutout", "p_lines", "p_letters"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        lo, hi = self.rrc_scale
        if not 0 < lo <= hi:
            raise ValueError(f"rrc_scale must be positive and ordered, got {self.rrc_scale}")
        if self.crop < 1:
            raise ValueError("crop must be >= 1")


def pair_rng(seed: int, index: int = 0) -> np.random.Generator:
    """Independent generator for one image of a dataset."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & (2**64 - 1), int(index)])))


# ----------------------------------------------------------------- geometry

def apply_geometric(arr: np.ndarray, op: tuple, is_mask: bool = False) -> np.ndarray:
    """Replay one recorded geometric step on an image or mask."""
    kind = op[0]
    if kind == "crop":
        _, y, x, size = op
        return arr[y:y + size, x:x + size].copy()
    if kind == "hflip":
        return arr[:, ::-1].copy()
    if kind == "vflip":
        return arr[::-1, :].copy()
    if kind == "rot90":
        return np.rot90(arr, op[1]).copy()
    if kind == "rrc":
        _, scale, cy, cx = op
        n = arr.shape[0]
        grid = (np.arange(n) - (n - 1) / 2.0) * scale
        ys, xs = np.meshgrid(grid + cy, grid + cx, indexing="ij")
        out = ndimage.map_coordinates(arr.astype(np.float64), [ys, xs],
                                      order=0 if is_mask else 1, mode="mirror")
        if is_mask:
            return out.astype(arr.dtype)
        return np.clip(out, 0.0, 1.0)
    raise ValueError(f"unknown geometric op {kind!r}")


def replay(arr: np.ndarray, ops, is_mask: bool = False) -> np.ndarray:
    for op in ops:
        arr = apply_geometric(arr, op, is_mask)
    return arr


# --------------------------------------------------------------- appearance

def cutout(img: np.ndarray, rng: np.random.Generator, max_holes: int = 5, max_size: int = 10) -> np.ndarray:
    out = img.copy()
    h, w = out.shape
    for _ in range(int(rng.integers(1, max_holes + 1))):
        hh, ww = (int(v) for v in rng.integers(1, max_size + 1, size=2))
        y = int(rng.integers(0, max(h - hh, 0) + 1))
        x = int(rng.integers(0, max(w - ww, 0) + 1))
        out[y:y + hh, x:x + ww] = 0.0
    return out


def draw_line(img: np.ndarray, p0, p1, width: float, ink: float) -> np.ndarray:
    """Anti-aliased segment from ``p0`` to ``p1`` ((x, y) pairs)."""
    out = np.array(img, dtype=np.float64, copy=True)
    (x0, y0), (x1, y1) = p0, p1
    pad = width / 2.0 + 1.0
    h, w = out.shape
    ylo, yhi = max(int(np.floor(min(y0, y1) - pad)), 0), min(int(np.ceil(max(y0, y1) + pad)) + 1, h)
    xlo, xhi = max(int(np.floor(min(x0, x1) - pad)), 0), min(int(np.ceil(max(x0, x1) + pad)) + 1, w)
    if ylo >= yhi or xlo >= xhi:
        return out
    yy, xx = np.mgrid[ylo:yhi, xlo:xhi].astype(np.float64)
    dx, dy = x1 - x0, y1 - y0
    seg2 = dx * dx + dy * dy
    t = np.clip(((xx - x0) * dx + (yy - y0) * dy) / seg2, 0.0, 1.0) if seg2 > 0 else np.zeros_like(xx)
    dist = np.hypot(xx - (x0 + t * dx), yy - (y0 + t * dy))
    cov = np.clip(width / 2.0 + 0.5 - dist, 0.0, 1.0)
    region = out[ylo:yhi, xlo:xhi]
    out[ylo:yhi, xlo:xhi] = np.where(cov > 0, (1.0 - cov) * region + cov * ink, region)
    return out


def draw_random_lines(img: np.ndarray, rng: np.random.Generator, max_lines: int = 4,
                      width=(1, 3), ink=(0.0, 0.3), min_length: float = 10.0) -> np.ndarray:
    """1..max_lines dark anti-aliased strokes with uniform random endpoints.

    Endpoints are redrawn until the stroke is at least ``min_length`` long
    (or the image cannot fit one).
    """
    out = check_gray(img).copy()
    h, w = out.shape
    reach = np.hypot(h - 1, w - 1)
    for _ in range(int(rng.integers(1, max_lines + 1))):
        for _attempt in range(32):
            x0, x1 = rng.uniform(0, w - 1, size=2)
            y0, y1 = rng.uniform(0, h - 1, size=2)
            if np.hypot(x1 - x0, y1 - y0) >= min(min_length, reach):
                break
        stroke = float(rng.uniform(width[0], width[1]))
        out = draw_line(out, (x0, y0), (x1, y1), stroke, float(rng.uniform(*ink)))
    return out


def draw_glyph(img: np.ndarray, ch: str, x: int, y: int, scale: int, ink: float) -> np.ndarray:
    """Stencil one 5x7 glyph with its top-left corner at (x, y); clipped at borders."""
    out = np.array(img, dtype=np.float64, copy=True)
    stencil = np.kron(GLYPHS[ch.upper()], np.ones((scale, scale), dtype=bool))
    h, w = out.shape
    sy0, sx0 = max(-y, 0), max(-x, 0)
    y0, x0 = max(y, 0), max(x, 0)
    y1, x1 = min(y + stencil.shape[0], h), min(x + stencil.shape[1], w)
    if y0 >= y1 or x0 >= x1:
        return out
    sub = stencil[sy0:sy0 + (y1 - y0), sx0:sx0 + (x1 - x0)]
    out[y0:y1, x0:x1][sub] = ink
    return out


def draw_random_letters(img: np.ndarray, rng: np.random.Generator, n: int | None = None,
                        max_letters: int = 6, scale=(2, 6), ink=(0.0, 0.3)) -> np.ndarray:
    """Stamp ``n`` (default 1..max_letters) random glyphs in dark ink."""
    out = check_gray(img).copy()
    h, w = out.shape
    if n is None:
        n = int(rng.integers(1, max_letters + 1))
    for _ in range(n):
        ch = CHARSET[int(rng.integers(len(CHARSET)))]
        s = int(rng.integers(scale[0], scale[1] + 1))
        x = int(rng.integers(0, max(w - 5 * s, 0) + 1))
        y = int(rng.integers(0, max(h - 7 * s, 0) + 1))
        out = draw_glyph(out, ch, x, y, s, float(rng.uniform(*ink)))
    return out


# --------------------------------------------------------------------- pair

def augment_pair(img: np.ndarray, mask: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator,
                 trace: list | None = None):
    """Augment an (image, mask) pair.

    ``trace``, if given, receives the geometric ops in application order
    followed by the names of the appearance steps that fired, e.g.
    ``[("crop", y, x, 256), ("hflip",), "cutout"]``.
    """
    img = check_gray(img)
    mask = check_mask(mask)
    check_same_shape(img, mask)
    h, w = img.shape
    n = cfg.crop
    if h < n or w < n:
        raise ValueError(f"source {w}x{h} is smaller than the {n}x{n} crop")
    ops = [("crop", int(rng.integers(0, h - n + 1)), int(rng.integers(0, w - n + 1)), n)]
    if rng.random() < cfg.p_geom:
        choice = int(rng.integers(3))
        if choice == 0:
            ops.append(("hflip",))
        elif choice == 1:
            ops.append(("vflip",))
        else:
            ops.append(("rot90", int(rng.integers(1, 4))))
    if rng.random() < cfg.p_rrc:
        scale = float(rng.uniform(*cfg.rrc_scale))
        # keep the sampled window centred within the patch
        half = (n - 1) / 2.0
        slack = max(half * (1.0 - scale), 0.0)
        cy = half + float(rng.uniform(-slack, slack))
        cx = half + float(rng.uniform(-slack, slack))
        ops.append(("rrc", scale, cy, cx))
    out_img = replay(img, ops)
    out_mask = replay(mask, ops, is_mask=True)
    applied = []
    if rng.random() < cfg.p_cutout:
        out_img = cutout(out_img, rng, cfg.cutout_max_holes, cfg.cutout_hole)
        applied.append("cutout")
    if rng.random() < cfg.p_lines:
        out_img = draw_random_lines(out_img, rng, cfg.max_lines, cfg.line_width, cfg.ink)
        applied.append("lines")
    if rng.random() < cfg.p_letters:
        out_img = draw_random_letters(out_img, rng, None, cfg.max_letters, cfg.letter_scale, cfg.ink)
        applied.append("letters")
    if trace is not None:
        trace.extend(ops)
        trace.extend(applied)
    return out_img, out_mask
