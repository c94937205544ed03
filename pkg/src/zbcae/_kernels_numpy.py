"""Pure-numpy kernel implementations (fallback backend).

Same contracts as ``zbcae._kernels_numba``: dtype-preserving, switches as
int64, max ties broken at the first row-major in-window index. Convolutions
go through im2col so the heavy lifting lands in BLAS.
"""

import numpy as np


def _windows(x, kh, kw):
    # (n, c, oh, ow, kh, kw) read-only view
    return np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))


def conv_valid(x, f):
    n, c, h, w = x.shape
    k, _, kh, kw = f.shape
    win = _windows(x, kh, kw)
    oh, ow = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    out = cols @ f.reshape(k, c * kh * kw).T
    return np.ascontiguousarray(out.reshape(n, oh, ow, k).transpose(0, 3, 1, 2))


def conv_full_transpose(y, f):
    k, c, kh, kw = f.shape
    ypad = np.pad(y, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    # adjoint of conv_valid = full correlation with spatially-flipped,
    # channel-swapped filters
    g = np.ascontiguousarray(f[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    return conv_valid(ypad, g)


def conv_grad_filters(x, g, k, c, kh, kw):
    n = x.shape[0]
    oh, ow = g.shape[2], g.shape[3]
    win = _windows(x, kh, kw)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    g2 = g.transpose(0, 2, 3, 1).reshape(n * oh * ow, k)
    return np.ascontiguousarray(g2.T @ cols).reshape(k, c, kh, kw)


def maxpool(x, p):
    n, c, h, w = x.shape
    h2, w2 = h // p, w // p
    win = x[:, :, : h2 * p, : w2 * p].reshape(n, c, h2, p, w2, p)
    win = win.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, p * p)
    sw = win.argmax(axis=-1).astype(np.int64)
    out = np.take_along_axis(win, sw[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), sw


def _grid(n, c, h2, w2):
    i0 = np.arange(n)[:, None, None, None]
    i1 = np.arange(c)[None, :, None, None]
    i2 = np.arange(h2)[None, None, :, None]
    i3 = np.arange(w2)[None, None, None, :]
    return i0, i1, i2, i3


def unpool(y, sw, p):
    n, c, h2, w2 = y.shape
    out = np.zeros((n, c, h2 * p, w2 * p), y.dtype)
    i0, i1, i2, i3 = _grid(n, c, h2, w2)
    out[i0, i1, i2 * p + sw // p, i3 * p + sw % p] = y
    return out


def unpool_grad(g, sw, p):
    n, c, h2, w2 = sw.shape
    i0, i1, i2, i3 = _grid(n, c, h2, w2)
    return np.ascontiguousarray(g[i0, i1, i2 * p + sw // p, i3 * p + sw % p])


def quadrant_pool(x):
    n, c, h, w = x.shape
    hm, wm = (h + 1) // 2, (w + 1) // 2
    out = np.empty((n, c, 2, 2), x.dtype)
    idx = np.empty((n, c, 2, 2), np.int64)
    for qi, (r0, r1) in enumerate(((0, hm), (hm, h))):
        for qj, (c0, c1) in enumerate(((0, wm), (wm, w))):
            sub = x[:, :, r0:r1, c0:c1].reshape(n, c, -1)
            a = sub.argmax(axis=-1)
            out[:, :, qi, qj] = np.take_along_axis(sub, a[..., None], -1)[..., 0]
            idx[:, :, qi, qj] = (r0 + a // (c1 - c0)) * w + (c0 + a % (c1 - c0))
    return out, idx


def quadrant_scatter(y, idx, h, w):
    n, c = y.shape[:2]
    out = np.zeros((n, c, h * w), y.dtype)
    i0 = np.arange(n)[:, None, None, None]
    i1 = np.arange(c)[None, :, None, None]
    out[i0, i1, idx] = y
    return out.reshape(n, c, h, w)


def quadrant_gather(g, idx):
    n, c, h, w = g.shape
    i0 = np.arange(n)[:, None, None, None]
    i1 = np.arange(c)[None, :, None, None]
    return np.ascontiguousarray(g.reshape(n, c, h * w)[i0, i1, idx])
