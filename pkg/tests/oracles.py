"""Slow, obviously-correct reference implementations used by the tests."""
import numpy as np


def box_mean_naive(plane, r):
    """Window mean by explicit loops over an edge-replicated border."""
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    out = np.empty_like(plane)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for di in range(-r, r + 1):
                for dj in range(-r, r + 1):
                    ii = min(max(i + di, 0), h - 1)
                    jj = min(max(j + dj, 0), w - 1)
                    acc += plane[ii, jj]
            out[i, j] = acc / (2 * r + 1) ** 2
    return out


def guided_filter_naive(I, p, r, eps):
    """Per-pixel guided filter: window statistics gathered pixel by pixel."""
    I = np.asarray(I, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    h, w = I.shape
    Ip = np.pad(I, r, mode="edge")
    pp = np.pad(p, r, mode="edge")
    k = 2 * r + 1
    a = np.empty_like(I)
    b = np.empty_like(I)
    for i in range(h):
        for j in range(w):
            wi = Ip[i:i + k, j:j + k]
            wp = pp[i:i + k, j:j + k]
            mi, mp = wi.mean(), wp.mean()
            cov = (wi * wp).mean() - mi * mp
            var = max((wi * wi).mean() - mi * mi, 0.0)
            a[i, j] = cov / (var + eps)
            b[i, j] = mp - a[i, j] * mi
    ap = np.pad(a, r, mode="edge")
    bp = np.pad(b, r, mode="edge")
    q = np.empty_like(I)
    for i in range(h):
        for j in range(w):
            q[i, j] = ap[i:i + k, j:j + k].mean() * I[i, j] + bp[i:i + k, j:j + k].mean()
    return np.clip(q, 0.0, 1.0)


def conv2d_naive(x, w, bias, dilation=(1, 1)):
    """Direct loop 'same' convolution (cross-correlation) with zero padding."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    dh, dw = dilation
    y = np.zeros((n, cout, h, wd))
    for b in range(n):
        for o in range(cout):
            for i in range(h):
                for j in range(wd):
                    acc = bias[o]
                    for c in range(cin):
                        for u in range(kh):
                            for v in range(kw):
                                ii = i + dh * (u - kh // 2)
                                jj = j + dw * (v - kw // 2)
                                if 0 <= ii < h and 0 <= jj < wd:
                                    acc += x[b, c, ii, jj] * w[o, c, u, v]
                    y[b, o, i, j] = acc
    return y


def focal_naive(pred, truth, alpha, gamma):
    total = 0.0
    for p, t in zip(np.ravel(pred), np.ravel(truth)):
        p = min(max(p, 1e-7), 1 - 1e-7)
        pt = p if t == 1 else 1 - p
        total += alpha * (1 - pt) ** gamma * -np.log(pt)
    return total / np.size(pred)


def iou_naive(a, b):
    a = np.ravel(a).tolist()
    b = np.ravel(b).tolist()
    inter = sum(1 for x, y in zip(a, b) if x and y)
    union = sum(1 for x, y in zip(a, b) if x or y)
    return 1.0 if union == 0 else inter / union


def central_diff(f, x, h=1e-4):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = f(x)
        x[idx] = orig - h
        fm = f(x)
        x[idx] = orig
        g[idx] = (fp - fm) / (2 * h)
    return g
