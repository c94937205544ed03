"""Weight initialization schemes.

Zero-bias ReLU encoders cannot rely on a bias shift to keep units active, so
first-layer filters start as standardized patches cropped from the dataset
and deeper layers start as the nearest orthonormal matrix to a Gaussian
draw (SVD with all singular values set to one), tapered by a 2-D Hamming
window to stop overlapping patches from accumulating intensity. The
classifier head draws Gaussian weights with std k/sqrt(fan_in), one
k ~ Uniform[0.2, 1.2] per layer.

Every function is a pure function of (arguments, rng state).
"""

import numpy as np

from zbcae.augment import standardize
from zbcae.errors import ShapeError


def patch_init(images, filter_dims, rng, dtype=np.float32):
    """Filters cropped at uniform random positions from dataset images.

    `images` is (n, c, h, w); each crop is standardized the same way network
    inputs are, so filter scale matches activation scale.
    """
    images = np.asarray(images)
    k, c, kh, kw = filter_dims
    if images.ndim != 4 or images.shape[0] == 0:
        raise ShapeError("patch_init needs a nonempty (n,c,h,w) image set")
    n, ic, h, w = images.shape
    if ic != c:
        raise ShapeError(f"dataset has {ic} channels, filters want {c}")
    if h < kh or w < kw:
        raise ShapeError(f"images {h}x{w} smaller than filters {kh}x{kw}")
    bank = np.empty((k, c, kh, kw), dtype)
    for fi in range(k):
        i = int(rng.integers(n))
        r = int(rng.integers(h - kh + 1))
        s = int(rng.integers(w - kw + 1))
        bank[fi] = standardize(images[i, :, r : r + kh, s : s + kw]).astype(dtype)
    return bank


def svd_orthogonal_init(filter_dims, rng, dtype=np.float32):
    """Gaussian filters projected to the nearest matrix with orthonormal rows.

    The bank is matricized one row per filter, (k, c*kh*kw); k must not
    exceed the fan-in or orthonormal rows cannot exist.
    """
    k, c, kh, kw = filter_dims
    fan_in = c * kh * kw
    if k > fan_in:
        raise ShapeError(
            f"cannot orthonormalize {k} filters of fan-in {fan_in}: k > fan-in"
        )
    g = rng.standard_normal((k, fan_in))
    u, _, vt = np.linalg.svd(g, full_matrices=False)
    return (u @ vt).reshape(k, c, kh, kw).astype(dtype)


def hamming_window_2d(kh, kw):
    """Outer product of 1-D Hamming windows 0.54 - 0.46*cos(2*pi*i/(n-1)).

    Built from one half mirrored so w[i] == w[n-1-i] holds bit-exactly.
    """

    def window(n):
        if n == 1:
            return np.ones(1)
        i = np.arange((n + 1) // 2)
        half = 0.54 - 0.46 * np.cos(2.0 * np.pi * i / (n - 1))
        return np.concatenate([half, half[: n // 2][::-1]])

    return np.outer(window(kh), window(kw))


def apply_hamming(filters):
    """Taper every filter's spatial slice by the 2-D Hamming window."""
    filters = np.asarray(filters)
    win = hamming_window_2d(filters.shape[2], filters.shape[3])
    return (filters * win[None, None, :, :]).astype(filters.dtype)


def gaussian_head_init(fan_in, fan_out, rng, dtype=np.float32):
    """Head weights ~ Normal(0, (k/sqrt(fan_in))^2), k ~ Uniform[0.2, 1.2].

    One k is drawn per call (per layer). Returns (weights, zero bias) with
    weights shaped (fan_out, fan_in).
    """
    if fan_in < 1 or fan_out < 1:
        raise ShapeError("fan_in and fan_out must be >= 1")
    k = float(rng.uniform(0.2, 1.2))
    std = k / np.sqrt(fan_in)
    w = (rng.standard_normal((fan_out, fan_in)) * std).astype(dtype)
    return w, np.zeros(fan_out, dtype)
