"""Image containers, raster I/O and pixel statistics.

Gray images are 2-D ``float64`` arrays with values in ``[0, 1]`` (rows x cols).
Binary masks are 2-D ``uint8`` arrays holding only 0 and 1. Quantization to
8 bits happens only when reading or writing files.
"""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

# Pillow modes that carry 8-bit samples.
_GRAY_MODES = {"L", "LA"}
_COLOR_MODES = {"RGB", "RGBA", "P", "PA"}
_SUFFIXES = {".png", ".pgm"}


class ImageFormatError(ValueError):
    """Raised for rasters that cannot be represented as 8-bit gray data."""


def check_gray(img: np.ndarray, name: str = "image") -> np.ndarray:
    """Validate a gray image and return it as float64."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name} values must lie in [0, 1]")
    return arr


def check_mask(mask: np.ndarray, name: str = "mask") -> np.ndarray:
    """Validate a binary mask and return it as uint8 {0, 1}."""
    arr = np.asarray(mask)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if arr.dtype == bool:
        return arr.astype(np.uint8)
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError(f"{name} must be strictly binary (0/1)")
    return arr.astype(np.uint8)


def check_same_shape(*arrays: np.ndarray) -> None:
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise ValueError(f"dimension mismatch: {sorted(shapes)}")


def _read_bytes(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image: {path}")
    try:
        with Image.open(path) as im:
            fmt = im.format
            mode = im.mode
            if fmt not in ("PNG", "PPM"):
                raise ImageFormatError(f"{path}: unsupported container {fmt!r}")
            if mode in _GRAY_MODES:
                data = np.asarray(im.getchannel(0), dtype=np.uint8)
            elif mode in _COLOR_MODES:
                rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
                luma = rgb @ np.asarray(LUMA_WEIGHTS)
                data = np.clip(np.rint(luma), 0, 255).astype(np.uint8)
            else:
                raise ImageFormatError(f"{path}: unsupported bit depth / mode {mode!r}")
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: not a readable raster") from exc
    except OSError as exc:
        # truncated or otherwise corrupt payloads
        raise ImageFormatError(f"{path}: {exc}") from exc
    if data.ndim != 2 or 0 in data.shape:
        raise ImageFormatError(f"{path}: zero-dimension image")
    return data


def _write_bytes(data: np.ndarray, path) -> None:
    path = Path(path)
    if not path.parent.is_dir():
        raise FileNotFoundError(f"parent directory does not exist: {path.parent}")
    suffix = path.suffix.lower()
    if suffix not in _SUFFIXES:
        raise ImageFormatError(f"{path}: unsupported extension {suffix!r} (use .png or .pgm)")
    im = Image.fromarray(np.ascontiguousarray(data, dtype=np.uint8), mode="L")
    fmt = "PNG" if suffix == ".png" else "PPM"
    # PNG output is fully determined by the pixel payload with these settings
    im.save(path, format=fmt)


def load_gray(path) -> np.ndarray:
    """Read an 8-bit PNG/PGM file as a float image in [0, 1].

    Color rasters are reduced with BT.601 luma weights and rounded back to
    8 bits before scaling, so equal-channel pixels keep their exact value.
    """
    return _read_bytes(path).astype(np.float64) / 255.0


def to_bytes(img: np.ndarray) -> np.ndarray:
    """Quantize a gray image to uint8 by round(v*255), clamped."""
    arr = np.asarray(img, dtype=np.float64)
    return np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)


def save_gray(img: np.ndarray, path) -> None:
    _write_bytes(to_bytes(check_gray(img)), path)


def load_mask(path) -> np.ndarray:
    """Read a {0, 255} raster as a {0, 1} mask; any other value is rejected."""
    data = _read_bytes(path)
    if not np.all((data == 0) | (data == 255)):
        raise ImageFormatError(f"{path}: mask files may only contain the values 0 and 255")
    return (data == 255).astype(np.uint8)


def save_mask(mask: np.ndarray, path) -> None:
    _write_bytes(check_mask(mask) * np.uint8(255), path)


def white_ratio(mask: np.ndarray) -> float:
    """Fraction of pixels set to 1."""
    m = check_mask(mask)
    return float(np.count_nonzero(m)) / m.size


def blend_weighted(a: np.ndarray, b: np.ndarray, wa: float, wb: float) -> np.ndarray:
    """Convex combination ``wa*a + wb*b`` clamped to [0, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_same_shape(a, b)
    if not (0.0 <= wa <= 1.0 and 0.0 <= wb <= 1.0):
        raise ValueError(f"blend weights must lie in [0, 1], got {wa}, {wb}")
    if abs(wa + wb - 1.0) > 1e-9:
        raise ValueError(f"blend weights must sum to 1, got {wa} + {wb}")
    return np.clip(wa * a + wb * b, 0.0, 1.0)


def is_image_file(path) -> bool:
    return Path(path).suffix.lower() in _SUFFIXES


def list_images(path) -> list[Path]:
    """Single file -> [file]; directory -> sorted raster files inside it."""
    p = Path(path)
    if p.is_dir():
        return sorted(q for q in p.iterdir() if q.is_file() and is_image_file(q))
    if p.exists():
        return [p]
    raise FileNotFoundError(os.fspath(p))


def file_stem(path) -> str:
    """Base name without extension or a trailing ``.mask``/``.enhanced`` tag."""
    stem = Path(path).name
    for suffix in _SUFFIXES:
        if stem.lower().endswith(suffix):
            stem = stem[: -len(suffix)]
            break
    for tag in (".mask", ".enhanced"):
        if stem.endswith(tag):
            stem = stem[: -len(tag)]
    return stem
