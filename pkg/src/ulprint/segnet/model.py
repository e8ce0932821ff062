"""Desk-scale encoder/decoder ridge segmenter, its Adam training loop and the
binary checkpoint format.

Layout mirrors the decoder of the full-size model: five encoder levels
(2x average pool + 3x3 conv + ReLU each), four dilated decoder blocks, one
plain decoder block and a 1x1 convolution with a two-class softmax head.
Inputs must have sides divisible by 32.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..augment import AugmentConfig, augment_pair, pair_rng
from ..imagecore import check_gray, check_mask
from .layers import (ConvSpec, avgpool2x, avgpool2x_backward, conv2d_dilated, conv2d_dilated_backward,
                     dilated_decoder_block, dilated_decoder_block_backward, init_decoder_block, upsample2x,
                     upsample2x_backward)
from .losses import LossParams, closs, closs_grad, iou

DTYPE = np.float32
DOWNSAMPLE = 32

CHECKPOINT_MAGIC = b"ULPT"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class ToyNetConfig:
    enc_widths: tuple = (4, 8, 8, 16, 16)
    dec_widths: tuple = (16, 8, 8, 4)
    plain_width: int = 4
    block_mode: str = "parallel"

    def __post_init__(self):
        if len(self.enc_widths) != 5:
            raise ValueError("toy net needs exactly 5 encoder levels")
        if len(self.dec_widths) != 4:
            raise ValueError("toy net needs exactly 4 dilated decoder blocks")
        if self.block_mode not in ("parallel", "sequential"):
            raise ValueError(f"block_mode must be 'parallel' or 'sequential', got {self.block_mode!r}")
        if min(self.enc_widths + self.dec_widths + (self.plain_width,)) < 1:
            raise ValueError("widths must be >= 1")


def _he(rng, shape):
    fan_in = shape[1] * shape[2] * shape[3]
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(DTYPE)


class ToyNet:
    """Parameters live in ``self.params`` as a flat ``name -> array`` dict."""

    def __init__(self, cfg: ToyNetConfig = ToyNetConfig(), seed: int = 0, params: dict | None = None):
        self.cfg = cfg
        if params is None:
            params = self._init_params(pair_rng(seed, 0xC0FFEE))
        self.params = params

    def _init_params(self, rng) -> dict:
        cfg = self.cfg
        p = {}
        cin = 1
        for i, width in enumerate(cfg.enc_widths):
            p[f"enc{i}.w"] = _he(rng, (width, cin, 3, 3))
            p[f"enc{i}.b"] = np.zeros(width, DTYPE)
            cin = width
        for k, width in enumerate(cfg.dec_widths):
            block = init_decoder_block(rng, cin + cfg.enc_widths[3 - k], width, cfg.block_mode, DTYPE)
            for name, arr in block.items():
                p[f"dec{k}.{name}"] = arr
            cin = width
        p["plain.w"] = _he(rng, (cfg.plain_width, cin + 1, 3, 3))
        p["plain.b"] = np.zeros(cfg.plain_width, DTYPE)
        p["head.w"] = _he(rng, (2, cfg.plain_width, 1, 1))
        p["head.b"] = np.zeros(2, DTYPE)
        return p

    def _block(self, k: int) -> dict:
        prefix = f"dec{k}."
        return {n[len(prefix):]: a for n, a in self.params.items() if n.startswith(prefix)}

    def copy(self) -> "ToyNet":
        return ToyNet(self.cfg, params={n: a.copy() for n, a in self.params.items()})

    # -------------------------------------------------------------- forward
    def forward(self, x: np.ndarray, return_cache: bool = False):
        """Class-1 (ridge) probability plane ``(B, H, W)`` for input ``(B, 1, H, W)``."""
        x = np.asarray(x, dtype=DTYPE)
        if x.ndim != 4 or x.shape[1] != 1:
            raise ValueError(f"expected input of shape (B, 1, H, W), got {x.shape}")
        if x.shape[2] % DOWNSAMPLE or x.shape[3] % DOWNSAMPLE:
            raise ValueError(f"input sides must be multiples of {DOWNSAMPLE}, got {x.shape[2:]}")
        p = self.params
        cache = {"x": x}
        feats = [x]
        h = x
        for i in range(5):
            pooled = avgpool2x(h)
            w = p[f"enc{i}.w"]
            z = conv2d_dilated(pooled, w, p[f"enc{i}.b"], ConvSpec(w.shape[1], w.shape[0]))
            h = np.maximum(z, 0)
            cache[f"enc{i}"] = (pooled, z)
            feats.append(h)
        d = feats[5]
        for k in range(4):
            d, cache[f"dec{k}"] = dilated_decoder_block(d, self._block(k), feats[4 - k], self.cfg.block_mode,
                                                        return_cache=True)
        up = upsample2x(d)
        cat = np.concatenate([up, x], axis=1)
        w = p["plain.w"]
        z = conv2d_dilated(cat, w, p["plain.b"], ConvSpec(w.shape[1], w.shape[0]))
        hp = np.maximum(z, 0)
        cache["plain"] = (d.shape[1], cat, z)
        logits = conv2d_dilated(hp, p["head.w"], p["head.b"], ConvSpec(hp.shape[1], 2, (1, 1)))
        cache["head"] = hp
        prob = softmax2(logits)
        if return_cache:
            return prob, cache
        return prob

    def backward(self, cache: dict, dprob: np.ndarray) -> dict:
        """Parameter gradients given d(loss)/d(ridge probability)."""
        p = self.params
        grads = {}
        prob = cache["prob"]
        dlog1 = (dprob * prob * (1 - prob)).astype(DTYPE)
        dlogits = np.stack([-dlog1, dlog1], axis=1)
        hp = cache["head"]
        dhp, grads["head.w"], grads["head.b"] = conv2d_dilated_backward(
            hp, p["head.w"], dlogits, ConvSpec(hp.shape[1], 2, (1, 1)))
        d_ch, cat, z = cache["plain"]
        dz = dhp * (z > 0)
        w = p["plain.w"]
        dcat, grads["plain.w"], grads["plain.b"] = conv2d_dilated_backward(cat, w, dz, ConvSpec(w.shape[1], w.shape[0]))
        dd = upsample2x_backward(dcat[:, :d_ch])
        dfeats = {}
        for k in reversed(range(4)):
            dd, dskip, g = dilated_decoder_block_backward(cache[f"dec{k}"], self._block(k), dd, self.cfg.block_mode)
            for name, arr in g.items():
                grads[f"dec{k}.{name}"] = arr
            dfeats[4 - k] = dskip
        dh = dd  # gradient w.r.t. feats[5]
        for i in reversed(range(5)):
            pooled, z = cache[f"enc{i}"]
            dz = dh * (z > 0)
            w = p[f"enc{i}.w"]
            dpooled, grads[f"enc{i}.w"], grads[f"enc{i}.b"] = conv2d_dilated_backward(
                pooled, w, dz, ConvSpec(w.shape[1], w.shape[0]))
            if i == 0:
                break
            dh = avgpool2x_backward(dpooled) + dfeats[i]
        return grads

    def loss_and_grads(self, x: np.ndarray, truth: np.ndarray, loss: LossParams):
        prob, cache = self.forward(x, return_cache=True)
        cache["prob"] = prob
        value = closs(prob, truth, loss)
        grads = self.backward(cache, closs_grad(prob, truth, loss))
        return value, grads

    # ------------------------------------------------------------ inference
    def predict_proba(self, img: np.ndarray) -> np.ndarray:
        """Ridge probability for a gray image of any size (reflect-padded to /32)."""
        img = check_gray(img)
        h, w = img.shape
        ph, pw = -h % DOWNSAMPLE, -w % DOWNSAMPLE
        padded = np.pad(img, ((0, ph), (0, pw)), mode="reflect" if (ph < h and pw < w) else "edge")
        prob = self.forward(padded[None, None])[0]
        return prob[:h, :w]

    def predict_mask(self, img: np.ndarray) -> np.ndarray:
        """Argmax of the two-class softmax (ties go to background)."""
        return (self.predict_proba(img) > 0.5).astype(np.uint8)

    __call__ = predict_mask


def softmax2(logits: np.ndarray) -> np.ndarray:
    """Probability of class 1 from two-class logits ``(B, 2, H, W)``."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return (e[:, 1] / e.sum(axis=1)).astype(logits.dtype, copy=False)


def softmax_channels(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


# ------------------------------------------------------------------- Adam

class Adam:
    def __init__(self, params: dict, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {n: np.zeros_like(a) for n, a in params.items()}
        self.v = {n: np.zeros_like(a) for n, a in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, g in grads.items():
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            update = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            params[name] -= update.astype(params[name].dtype, copy=False)


# -------------------------------------------------------------- training

@dataclass
class TrainResult:
    model: ToyNet           # best-validation-IoU parameters
    last: ToyNet            # parameters after the final epoch
    best_iou: float
    best_epoch: int         # 0 means the initialisation was never beaten
    history: list = field(default_factory=list)  # (epoch, train_loss, val_iou)


def split_dataset(pairs: Sequence, val_fraction: float, seed: int):
    n = len(pairs)
    order = pair_rng(seed, 0x5EED).permutation(n)
    n_val = max(1, int(round(n * val_fraction))) if n > 1 else 0
    val = [pairs[i] for i in sorted(order[:n_val])]
    train = [pairs[i] for i in sorted(order[n_val:])] or list(pairs)
    return train, val or list(pairs)


def evaluate_iou(model: ToyNet, pairs: Sequence) -> float:
    """Mean per-image IoU of the model's argmax masks."""
    if not pairs:
        return float("nan")
    return float(np.mean([iou(model.predict_mask(img), mask) for img, mask in pairs]))


def toy_train(dataset: Sequence, cfg: ToyNetConfig = ToyNetConfig(), epochs: int = 30, lr: float = 1e-4,
              seed: int = 0, loss: LossParams = LossParams(), augment: AugmentConfig | None = None,
              batch_size: int = 8, val_fraction: float = 0.2, val_pairs: Sequence | None = None,
              log: Callable | None = None) -> TrainResult:
    """Train the toy segmenter with Adam on ``closs``; keep the best-IoU parameters.

    ``dataset`` holds (gray image, binary mask) pairs. Without ``val_pairs``
    a seeded ``val_fraction`` split is held out. ``augment`` (if given) is
    applied to every training sample each epoch with a stream derived from
    ``(seed, epoch, index)``. ``log`` is called with each history row.
    """
    pairs = [(check_gray(img), check_mask(mask)) for img, mask in dataset]
    if not pairs:
        raise ValueError("empty dataset")
    if val_pairs is None:
        train, val = split_dataset(pairs, val_fraction, seed)
    else:
        train, val = pairs, [(check_gray(i), check_mask(m)) for i, m in val_pairs]
    model = ToyNet(cfg, seed)
    opt = Adam(model.params, lr)
    best = model.copy()
    best_iou, best_epoch = evaluate_iou(model, val), 0
    history = []
    n = len(train)
    for epoch in range(1, epochs + 1):
        order = pair_rng(seed, 2 * epoch + 1).permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            xs, ys = [], []
            for i in idx:
                img, mask = train[i]
                if augment is not None:
                    img, mask = augment_pair(img, mask, augment, pair_rng(seed, (epoch << 32) + int(i)))
                xs.append(img)
                ys.append(mask)
            x = np.stack(xs)[:, None].astype(DTYPE)
            y = np.stack(ys).astype(DTYPE)
            value, grads = model.loss_and_grads(x, y, loss)
            if not np.isfinite(value):
                raise TrainingDiverged(f"loss became {value} at epoch {epoch}")
            opt.step(model.params, grads)
            losses.append(value)
        val_iou = evaluate_iou(model, val)
        row = (epoch, float(np.mean(losses)), val_iou)
        history.append(row)
        if log is not None:
            log(row)
        if val_iou > best_iou:
            best, best_iou, best_epoch = model.copy(), val_iou, epoch
    return TrainResult(best, model, best_iou, best_epoch, history)


# ------------------------------------------------------------- checkpoint

def _meta_vector(cfg: ToyNetConfig) -> np.ndarray:
    mode = 1.0 if cfg.block_mode == "sequential" else 0.0
    return np.array([mode, *cfg.enc_widths, *cfg.dec_widths, cfg.plain_width], dtype=DTYPE)


def checkpoint_bytes(model: ToyNet) -> bytes:
    """Little-endian: magic, u32 version, u32 layer count, then per layer
    u32 name length, utf-8 name, u32 ndim, u32 dims, raw f32 data."""
    layers = [("meta.config", _meta_vector(model.cfg))] + list(model.params.items())
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(layers)))
    for name, arr in layers:
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


def save_checkpoint(model: ToyNet, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(model))


def load_checkpoint(path) -> ToyNet:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        return _parse_checkpoint(data)
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint ({exc})") from exc


def _parse_checkpoint(data: bytes) -> ToyNet:
    if data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError("bad magic")
    version, count = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 12
    layers = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = struct.unpack_from("<I", data, pos)
        pos += 4
        dims = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        size = int(np.prod(dims, dtype=np.int64)) * 4
        if pos + size > len(data):
            raise CheckpointError(f"truncated layer {name!r}")
        layers[name] = np.frombuffer(data, dtype="<f4", count=size // 4, offset=pos).reshape(dims).astype(DTYPE)
        pos += size
    if pos != len(data):
        raise CheckpointError("trailing bytes after last layer")
    meta = layers.pop("meta.config", None)
    if meta is None or meta.shape != (11,):
        raise CheckpointError("missing or malformed meta.config layer")
    cfg = ToyNetConfig(tuple(int(v) for v in meta[1:6]), tuple(int(v) for v in meta[6:10]), int(meta[10]),
                       "sequential" if meta[0] else "parallel")
    template = ToyNet(cfg, 0).params
    if set(template) != set(layers):
        raise CheckpointError(f"layer names do not match the architecture: {sorted(set(template) ^ set(layers))}")
    for name, arr in template.items():
        if layers[name].shape != arr.shape:
            raise CheckpointError(f"layer {name!r} has shape {layers[name].shape}, expected {arr.shape}")
    return ToyNet(cfg, params={name: layers[name] for name in template})
