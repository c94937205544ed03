"""Image preprocessing and stochastic augmentation.

Single images are (c, h, w) float arrays; RGB values live in [0, 1] until
standardization. Hue is cyclic and wraps modulo 1; saturation and value are
clamped to [0, 1] after any transform. All random parameters are drawn once
per image from the generator passed in, so a run is replayable from its
seeds.

Combined order is flip -> translate -> color -> contrast, with
standardization applied afterwards by the training pipeline.
"""

import numpy as np

from zbcae.errors import ShapeError

COLOR_SHIFT_RANGE = (-0.1, 0.1)
CONTRAST_SCALE_RANGE = (0.7, 1.4)
CONTRAST_POWER_RANGE = (0.25, 4.0)
CONTRAST_OFFSET_RANGE = (-0.1, 0.1)


def rgb_to_hsv(image):
    """Hexcone RGB -> HSV; h in [0,1) with h=0 for gray, s,v in [0,1]."""
    rgb = np.clip(np.asarray(image, np.float64), 0.0, 1.0)
    r, g, b = rgb[0], rgb[1], rgb[2]
    mx = rgb.max(axis=0)
    d = mx - rgb.min(axis=0)
    safe = np.where(d > 0, d, 1.0)
    h = np.where(
        mx == r, (g - b) / safe, np.where(mx == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0)
    )
    h = np.where(d > 0, (h / 6.0) % 1.0, 0.0)
    s = np.where(mx > 0, d / np.where(mx > 0, mx, 1.0), 0.0)
    return np.stack([h, s, mx]).astype(np.asarray(image).dtype)


def hsv_to_rgb(image):
    """Inverse hexcone conversion."""
    hsv = np.asarray(image, np.float64)
    h = (hsv[0] % 1.0) * 6.0
    s = np.clip(hsv[1], 0.0, 1.0)
    v = np.clip(hsv[2], 0.0, 1.0)
    i = np.floor(h).astype(np.int64) % 6
    f = h - np.floor(h)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b]).astype(np.asarray(image).dtype)


def sample_color_shift(rng):
    return float(rng.uniform(*COLOR_SHIFT_RANGE))


def color_augment(image, rng):
    """Add one uniform random offset to every pixel's hue, wrapping mod 1."""
    a = sample_color_shift(rng)
    hsv = rgb_to_hsv(image)
    hsv[0] = (hsv[0] + a) % 1.0
    return hsv_to_rgb(hsv)


def sample_contrast_params(rng):
    """(a, b, c, d, e, f): scales ~ U(0.7,1.4), powers ~ U(0.25,4),
    offsets ~ U(-0.1,0.1). Drawn in that per-channel order: a,b,c then d,e,f."""
    a = float(rng.uniform(*CONTRAST_SCALE_RANGE))
    b = float(rng.uniform(*CONTRAST_POWER_RANGE))
    c = float(rng.uniform(*CONTRAST_OFFSET_RANGE))
    d = float(rng.uniform(*CONTRAST_SCALE_RANGE))
    e = float(rng.uniform(*CONTRAST_POWER_RANGE))
    f = float(rng.uniform(*CONTRAST_OFFSET_RANGE))
    return a, b, c, d, e, f


def contrast_augment(image, rng, value_from_saturation=True):
    """Remap saturation and value: s' = a*s^b + c, v' = d*s^e + f.

    The value formula reads the *saturation* channel by default, exactly as
    printed in its source; pass value_from_saturation=False for the
    v' = d*v^e + f variant. Results are clamped to [0, 1].
    """
    a, b, c, d, e, f = sample_contrast_params(rng)
    hsv = rgb_to_hsv(image)
    s = hsv[1].astype(np.float64)
    v = hsv[2].astype(np.float64)
    base = s if value_from_saturation else v
    hsv[1] = np.clip(a * np.power(s, b) + c, 0.0, 1.0)
    hsv[2] = np.clip(d * np.power(base, e) + f, 0.0, 1.0)
    return hsv_to_rgb(hsv)


def translate(image, dx, dy):
    """Shift columns by dx and rows by dy, zero-filling vacated pixels."""
    image = np.asarray(image)
    h, w = image.shape[-2], image.shape[-1]
    if abs(dy) > h or abs(dx) > w:
        raise ShapeError(f"shift ({dy},{dx}) larger than image {h}x{w}")
    out = np.zeros_like(image)
    src_r = slice(max(0, -dy), min(h, h - dy))
    src_c = slice(max(0, -dx), min(w, w - dx))
    dst_r = slice(max(0, dy), min(h, h + dy))
    dst_c = slice(max(0, dx), min(w, w + dx))
    out[..., dst_r, dst_c] = image[..., src_r, src_c]
    return out


def random_translate(image, max_frac, rng):
    """Integer shifts drawn per axis, uniform on [-floor(frac*dim), +floor]."""
    h, w = image.shape[-2], image.shape[-1]
    my, mx = int(max_frac * h), int(max_frac * w)
    dy = int(rng.integers(-my, my + 1))
    dx = int(rng.integers(-mx, mx + 1))
    return translate(image, dx, dy)


def hflip(image):
    """Mirror columns: j -> w-1-j."""
    return np.asarray(image)[..., ::-1].copy()


def standardize(example):
    """Center to mean 0 and scale to unit variance, per example.

    A 4-d input is treated as a batch and standardized example by example.
    Degenerate (constant) examples come back as zeros. Statistics are
    computed in float64; the result keeps the input dtype.
    """
    x = np.asarray(example)
    if x.ndim == 4:
        x64 = x.astype(np.float64)
        m = x64.mean(axis=(1, 2, 3), keepdims=True)
        sd = np.sqrt(((x64 - m) ** 2).mean(axis=(1, 2, 3), keepdims=True))
        out = np.where(sd < 1e-8, 0.0, (x64 - m) / np.where(sd < 1e-8, 1.0, sd))
        return out.astype(x.dtype)
    x64 = x.astype(np.float64)
    m = x64.mean()
    sd = np.sqrt(((x64 - m) ** 2).mean())
    if sd < 1e-8:
        return np.zeros_like(x)
    return ((x64 - m) / sd).astype(x.dtype)


def augment_example(image, rng, flip=False, translate_frac=0.0, color=False, contrast=False,
                    contrast_value_from_saturation=True):
    """Apply the configured augmentations to one raw [0,1] RGB image.

    Order is fixed: flip -> translate -> color -> contrast. The flip fires
    with probability 0.5 when enabled. Standardization is not included; the
    training pipeline applies it after augmentation.
    """
    out = image
    if flip and rng.random() < 0.5:
        out = hflip(out)
    if translate_frac > 0.0:
        out = random_translate(out, translate_frac, rng)
    if color:
        out = color_augment(out, rng)
    if contrast:
        out = contrast_augment(out, rng, value_from_saturation=contrast_value_from_saturation)
    return out
