"""Core tensor kernels: convolution, pooling, activations, reconstruction loss.

Activations and gradients travel as rank-4 float arrays laid out
(batch, channels, rows, cols); filter banks are (out_channels, in_channels,
kh, kw). "Convolution" here means cross-correlation (no kernel flip) and
``conv_full_transpose`` is its exact algebraic adjoint, which is what ties
encoder and decoder weights together. Max-pool switches store the row-major
in-window index of each window's max (first index wins ties); quadrant
pooling records absolute positions instead because its windows are ragged.

Everything is a pure function of its inputs and dtype-preserving: feed
float32 for normal training, float64 for finite-difference checks.
"""

import numpy as np

from zbcae._backend import kernels
from zbcae.errors import CorruptSwitchError, ShapeError


def _as4d(a, name):
    a = np.asarray(a)
    if a.ndim != 4:
        raise ShapeError(f"{name} must be rank-4, got shape {a.shape}")
    return a


def conv_valid(x, f):
    """Valid cross-correlation of x (n,c,h,w) with filters f (k,c,kh,kw)."""
    x, f = _as4d(x, "input"), _as4d(f, "filters")
    if x.shape[1] != f.shape[1]:
        raise ShapeError(
            f"channel mismatch: input has {x.shape[1]}, filters expect {f.shape[1]}"
        )
    if f.shape[2] > x.shape[2] or f.shape[3] > x.shape[3]:
        raise ShapeError(
            f"filters {f.shape[2:]} larger than input {x.shape[2:]}"
        )
    return kernels().conv_valid(x, f)


def conv_full_transpose(y, f):
    """Adjoint of conv_valid: maps (n,k,h,w) back to (n,c,h+kh-1,w+kw-1)."""
    y, f = _as4d(y, "input"), _as4d(f, "filters")
    if y.shape[1] != f.shape[0]:
        raise ShapeError(
            f"channel mismatch: input has {y.shape[1]}, filters produce {f.shape[0]}"
        )
    return kernels().conv_full_transpose(y, f)


def conv_grad_filters(x, grad_out, filter_dims):
    """Gradient of sum(conv_valid(x, f) * grad_out) with respect to f."""
    x, grad_out = _as4d(x, "input"), _as4d(grad_out, "grad_out")
    k, c, kh, kw = filter_dims
    expect = (x.shape[0], k, x.shape[2] - kh + 1, x.shape[3] - kw + 1)
    if x.shape[1] != c or grad_out.shape != expect:
        raise ShapeError(
            f"grad_out shape {grad_out.shape} does not match conv output "
            f"{expect} for filters {tuple(filter_dims)}"
        )
    return kernels().conv_grad_filters(x, grad_out, k, c, kh, kw)


def maxpool(x, p):
    """Max-pool with a p-by-p window; returns (pooled, switches).

    Rows/cols not divisible by p are truncated. Switch entries are the
    row-major in-window index of each max, first occurrence on ties.
    """
    x = _as4d(x, "input")
    if p < 1:
        raise ShapeError(f"pool window must be >= 1, got {p}")
    if x.shape[2] < p or x.shape[3] < p:
        raise ShapeError(f"input {x.shape[2:]} smaller than pool window {p}")
    return kernels().maxpool(x, int(p))


def unpool(y, switches, p):
    """Scatter pooled values back to their switch positions, zeros elsewhere."""
    y = _as4d(y, "input")
    switches = _as4d(np.asarray(switches), "switches")
    if y.shape != switches.shape:
        raise ShapeError(
            f"input {y.shape} and switches {switches.shape} must match"
        )
    if switches.size and (switches.min() < 0 or switches.max() >= p * p):
        raise CorruptSwitchError(
            f"switch entries must lie in [0, {p * p}) for window {p}"
        )
    return kernels().unpool(y, switches, int(p))


def unpool_grad(grad_out, switches, p):
    """Adjoint of unpool: gather the cotangent at each switch position."""
    grad_out = _as4d(grad_out, "grad_out")
    switches = _as4d(np.asarray(switches), "switches")
    n, c, h2, w2 = switches.shape
    if grad_out.shape != (n, c, h2 * p, w2 * p):
        raise ShapeError(
            f"grad_out {grad_out.shape} does not match unpooled shape "
            f"{(n, c, h2 * p, w2 * p)}"
        )
    if switches.size and (switches.min() < 0 or switches.max() >= p * p):
        raise CorruptSwitchError(
            f"switch entries must lie in [0, {p * p}) for window {p}"
        )
    return kernels().unpool_grad(grad_out, switches, int(p))


def quadrant_pool(x):
    """Max over each spatial quadrant; returns ((n,c,2,2), absolute argmax).

    Quadrants split at ceil(h/2) and ceil(w/2); the record stores flat
    row*w+col positions into the input map for scatter/gather on the way back.
    """
    x = _as4d(x, "input")
    if x.shape[2] < 2 or x.shape[3] < 2:
        raise ShapeError(f"quadrant pooling needs h,w >= 2, got {x.shape[2:]}")
    return kernels().quadrant_pool(x)


def quadrant_unpool(y, indices, height, width):
    """Scatter (n,c,2,2) values to their recorded positions in (h,w) maps."""
    y = _as4d(y, "input")
    indices = _as4d(np.asarray(indices), "indices")
    if y.shape != indices.shape or y.shape[2:] != (2, 2):
        raise ShapeError(
            f"expected (n,c,2,2) values and indices, got {y.shape} / {indices.shape}"
        )
    if indices.size and (indices.min() < 0 or indices.max() >= height * width):
        raise CorruptSwitchError(
            f"quadrant indices must lie in [0, {height * width})"
        )
    return kernels().quadrant_scatter(y, indices, int(height), int(width))


def quadrant_unpool_grad(grad_out, indices):
    """Adjoint of quadrant_unpool: gather cotangents at recorded positions."""
    grad_out = _as4d(grad_out, "grad_out")
    indices = _as4d(np.asarray(indices), "indices")
    if grad_out.shape[:2] != indices.shape[:2]:
        raise ShapeError(
            f"grad_out {grad_out.shape} and indices {indices.shape} disagree "
            "on batch/channels"
        )
    h, w = grad_out.shape[2], grad_out.shape[3]
    if indices.size and (indices.min() < 0 or indices.max() >= h * w):
        raise CorruptSwitchError(f"quadrant indices must lie in [0, {h * w})")
    return kernels().quadrant_gather(grad_out, indices)


def relu(x):
    """Elementwise max(0, x)."""
    x = np.asarray(x)
    return np.maximum(x, x.dtype.type(0))


def relu_grad(x, grad_out):
    """Pass grad_out where x > 0, zero where x <= 0."""
    x, grad_out = np.asarray(x), np.asarray(grad_out)
    if x.shape != grad_out.shape:
        raise ShapeError(f"x {x.shape} and grad_out {grad_out.shape} must match")
    return np.where(x > 0, grad_out, grad_out.dtype.type(0))


def mse(x, r):
    """Mean squared difference over all elements, reduced in float64."""
    x, r = np.asarray(x), np.asarray(r)
    if x.shape != r.shape:
        raise ShapeError(f"operands {x.shape} and {r.shape} must match")
    d = x.ravel().astype(np.float64) - r.ravel().astype(np.float64)
    return float(np.dot(d, d) / d.size)


def mse_grad(x, r):
    """Gradient of mse(x, r) with respect to r: 2*(r - x)/size."""
    x, r = np.asarray(x), np.asarray(r)
    if x.shape != r.shape:
        raise ShapeError(f"operands {x.shape} and {r.shape} must match")
    return (r - x) * r.dtype.type(2.0 / x.size)
