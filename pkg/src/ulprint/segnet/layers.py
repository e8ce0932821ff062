"""Dilated 2-D convolution and decoder blocks, forward and backward.

Tensors are ``(batch, channels, height, width)`` arrays. Convolutions are
stride 1 with "same" zero padding; the kernel tap ``(u, v)`` of a ``kh x kw``
kernel reads the input at offset ``(dh*(u - kh//2), dw*(v - kw//2))``.
Internally a convolution is a single im2col matrix product.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DILATION_SCHEDULE = ((1, 1), (2, 2), (4, 4))


@dataclass(frozen=True)
class ConvSpec:
    in_ch: int
    out_ch: int
    kernel: tuple = (3, 3)
    dilation: tuple = (1, 1)

    def __post_init__(self):
        kh, kw = self.kernel
        if kh % 2 == 0 or kw % 2 == 0 or kh < 1 or kw < 1:
            raise ValueError(f"kernel must be odd in both dims, got {self.kernel}")
        if self.dilation[0] < 1 or self.dilation[1] < 1:
            raise ValueError(f"dilation must be >= (1, 1), got {self.dilation}")
        if self.in_ch < 1 or self.out_ch < 1:
            raise ValueError("channel counts must be >= 1")

    @property
    def padding(self):
        (kh, kw), (dh, dw) = self.kernel, self.dilation
        return dh * (kh - 1) // 2, dw * (kw - 1) // 2

    @property
    def stride(self):
        return (1, 1)


def check_tensor4(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 4:
        raise ValueError(f"{name} must be rank 4 (batch, channels, height, width), got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def _check_weights(x, w, bias, spec: ConvSpec):
    if x.shape[1] != spec.in_ch:
        raise ValueError(f"input has {x.shape[1]} channels, spec expects {spec.in_ch}")
    expected = (spec.out_ch, spec.in_ch) + tuple(spec.kernel)
    if w.shape != expected:
        raise ValueError(f"weights have shape {w.shape}, expected {expected}")
    if bias is not None and np.shape(bias) != (spec.out_ch,):
        raise ValueError(f"bias must have shape ({spec.out_ch},)")


def _columns(x: np.ndarray, spec: ConvSpec):
    """im2col matrix ``(in_ch*kh*kw, batch*h*w)`` built from one strided view."""
    b, c, h, wd = x.shape
    (kh, kw), (dh, dw) = spec.kernel, spec.dilation
    ph, pw = spec.padding
    xp = np.pad(x.transpose(1, 0, 2, 3), ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    s = xp.strides
    taps = np.lib.stride_tricks.as_strided(
        xp, (c, kh, kw, b, h, wd), (s[0], s[2] * dh, s[3] * dw, s[1], s[2], s[3]), writeable=False)
    return taps.reshape(c * kh * kw, b * h * wd)


def conv2d_dilated(x: np.ndarray, w: np.ndarray, bias, spec: ConvSpec) -> np.ndarray:
    """Dilated 'same' convolution (cross-correlation), zero padded."""
    x = check_tensor4(x, "input")
    _check_weights(x, w, bias, spec)
    b, _, h, wd = x.shape
    y = w.reshape(spec.out_ch, -1) @ _columns(x, spec)
    if bias is not None:
        y += np.asarray(bias, dtype=y.dtype)[:, None]
    return np.ascontiguousarray(y.reshape(spec.out_ch, b, h, wd).transpose(1, 0, 2, 3))


def conv2d_dilated_backward(x: np.ndarray, w: np.ndarray, dy: np.ndarray, spec: ConvSpec):
    """Gradients ``(dx, dw, dbias)`` of :func:`conv2d_dilated` given ``dy``."""
    b, c, h, wd = x.shape
    (kh, kw), (dh, dw_) = spec.kernel, spec.dilation
    ph, pw = spec.padding
    dyt = dy.transpose(1, 0, 2, 3).reshape(spec.out_ch, -1)
    dw = (dyt @ _columns(x, spec).T).reshape(w.shape)
    dcols = (w.reshape(spec.out_ch, -1).T @ dyt).reshape(c, kh, kw, b, h, wd)
    dxp = np.zeros((c, b, h + 2 * ph, wd + 2 * pw), dtype=dcols.dtype)
    for u in range(kh):
        for v in range(kw):
            dxp[:, :, u * dh:u * dh + h, v * dw_:v * dw_ + wd] += dcols[:, u, v]
    dx = dxp[:, :, ph:ph + h, pw:pw + wd].transpose(1, 0, 2, 3)
    db = dy.sum(axis=(0, 2, 3))
    return np.ascontiguousarray(dx), dw, db


def upsample2x(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbour x2 upsampling."""
    return x.repeat(2, axis=2).repeat(2, axis=3)


def upsample2x_backward(dy: np.ndarray) -> np.ndarray:
    b, c, h, w = dy.shape
    return dy.reshape(b, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


def avgpool2x(x: np.ndarray) -> np.ndarray:
    b, c, h, w = x.shape
    return x.reshape(b, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def avgpool2x_backward(dy: np.ndarray) -> np.ndarray:
    return upsample2x(dy) * dy.dtype.type(0.25)


# ------------------------------------------------------------ decoder block

def _branch_specs(in_ch: int, out_ch: int, mode: str):
    specs = []
    for k, dil in enumerate(DILATION_SCHEDULE):
        cin = in_ch if (mode == "parallel" or k == 0) else out_ch
        specs.append(ConvSpec(cin, out_ch, (3, 3), dil))
    return specs


def init_decoder_block(rng: np.random.Generator, in_ch: int, out_ch: int, mode: str = "parallel",
                       dtype=np.float32) -> dict:
    """He-initialised weights ``w1, w2, w4`` (one per dilation rate) and bias ``b``."""
    params = {}
    for spec in _branch_specs(in_ch, out_ch, mode):
        std = np.sqrt(2.0 / (spec.in_ch * 9 * (3 if mode == "parallel" else 1)))
        params[f"w{spec.dilation[0]}"] = (rng.standard_normal((out_ch, spec.in_ch, 3, 3)) * std).astype(dtype)
    params["b"] = np.zeros(out_ch, dtype=dtype)
    return params


def dilated_convs(x: np.ndarray, params: dict, mode: str = "parallel"):
    """The three dilated 3x3 convolutions of a decoder block (no bias, no ReLU).

    ``parallel`` sums the branches; ``sequential`` chains them.
    """
    out_ch, in_ch = params["w1"].shape[:2]
    specs = _branch_specs(in_ch, out_ch, mode)
    ws = [params[f"w{s.dilation[0]}"] for s in specs]
    if mode == "parallel":
        z = conv2d_dilated(x, ws[0], None, specs[0])
        for wk, spec in zip(ws[1:], specs[1:]):
            z += conv2d_dilated(x, wk, None, spec)
        return z, (x,)
    if mode == "sequential":
        z1 = conv2d_dilated(x, ws[0], None, specs[0])
        z2 = conv2d_dilated(z1, ws[1], None, specs[1])
        z3 = conv2d_dilated(z2, ws[2], None, specs[2])
        return z3, (x, z1, z2)
    raise ValueError(f"unknown block mode {mode!r}")


def dilated_convs_backward(cache, params: dict, dz: np.ndarray, mode: str = "parallel"):
    out_ch, in_ch = params["w1"].shape[:2]
    specs = _branch_specs(in_ch, out_ch, mode)
    names = [f"w{s.dilation[0]}" for s in specs]
    grads = {}
    if mode == "parallel":
        (x,) = cache
        dx = None
        for name, spec in zip(names, specs):
            dxk, grads[name], _ = conv2d_dilated_backward(x, params[name], dz, spec)
            dx = dxk if dx is None else dx + dxk
        return dx, grads
    x, z1, z2 = cache
    dz2, grads[names[2]], _ = conv2d_dilated_backward(z2, params[names[2]], dz, specs[2])
    dz1, grads[names[1]], _ = conv2d_dilated_backward(z1, params[names[1]], dz2, specs[1])
    dx, grads[names[0]], _ = conv2d_dilated_backward(x, params[names[0]], dz1, specs[0])
    return dx, grads


def dilated_decoder_block(x: np.ndarray, params: dict, skip: np.ndarray | None = None,
                          mode: str = "parallel", return_cache: bool = False):
    """Upsample x2, concatenate ``skip``, apply the dilated convolutions at
    rates (1,1), (2,2), (4,4), add bias, ReLU."""
    x = check_tensor4(x, "input")
    up = upsample2x(x)
    if skip is not None:
        skip = check_tensor4(skip, "skip")
        if skip.shape[0] != up.shape[0] or skip.shape[2:] != up.shape[2:]:
            raise ValueError(f"skip features {skip.shape} do not match upsampled input {up.shape}")
        cat = np.concatenate([up, skip.astype(up.dtype, copy=False)], axis=1)
    else:
        cat = up
    if cat.shape[1] != params["w1"].shape[1]:
        raise ValueError(f"block expects {params['w1'].shape[1]} input channels, got {cat.shape[1]}")
    z, conv_cache = dilated_convs(cat, params, mode)
    z += params["b"][None, :, None, None]
    out = np.maximum(z, 0)
    if return_cache:
        return out, (x.shape[1], conv_cache, z)
    return out


def dilated_decoder_block_backward(cache, params: dict, dout: np.ndarray, mode: str = "parallel"):
    """Returns ``(dx, dskip or None, grads)``."""
    x_ch, conv_cache, z = cache
    dz = dout * (z > 0)
    dcat, grads = dilated_convs_backward(conv_cache, params, dz, mode)
    grads["b"] = dz.sum(axis=(0, 2, 3))
    dx = upsample2x_backward(dcat[:, :x_ch])
    dskip = dcat[:, x_ch:] if dcat.shape[1] > x_ch else None
    return dx, dskip, grads
