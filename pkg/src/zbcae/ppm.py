"""Binary PPM (P6) image files: codec-free, bit-exact output.

Arrays are (3, h, w) or (h, w) floats in [0, 1]; grayscale is replicated to
RGB on write.
"""

import numpy as np

from zbcae.errors import FormatError


def write_ppm(path, image):
    image = np.asarray(image)
    if image.ndim == 2:
        image = np.stack([image] * 3)
    if image.ndim != 3 or image.shape[0] != 3:
        raise FormatError(f"expected (3,h,w) or (h,w) image, got {image.shape}")
    h, w = image.shape[1], image.shape[2]
    pix = np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(pix.transpose(1, 2, 0).tobytes())


def read_ppm(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(b"P6"):
        raise FormatError(f"{path}: not a P6 PPM file")
    # header is three whitespace-separated tokens after the magic; comments
    # start with '#' and run to end of line
    tokens, pos = [], 2
    while len(tokens) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PPM header")
        tokens.append(blob[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 supported, got {maxval}")
    data = blob[pos : pos + 3 * w * h]
    if len(data) != 3 * w * h:
        raise FormatError(f"{path}: expected {3 * w * h} pixel bytes")
    arr = np.frombuffer(data, np.uint8).reshape(h, w, 3).transpose(2, 0, 1)
    return arr.astype(np.float32) / 255.0


def filter_grid(bank, pad=1):
    """Tile a filter bank into one image, min-max normalizing each filter.

    Banks with 3 input channels render in color; anything else renders the
    channel mean in grayscale.
    """
    bank = np.asarray(bank, np.float64)
    k, c, kh, kw = bank.shape
    if c == 3:
        tiles = bank
    else:
        tiles = np.repeat(bank.mean(axis=1, keepdims=True), 3, axis=1)
    cols = int(np.ceil(np.sqrt(k)))
    rows = int(np.ceil(k / cols))
    canvas = np.zeros((3, rows * (kh + pad) + pad, cols * (kw + pad) + pad))
    for i in range(k):
        tile = tiles[i]
        lo, hi = tile.min(), tile.max()
        tile = (tile - lo) / (hi - lo) if hi > lo else np.zeros_like(tile)
        r, s = divmod(i, cols)
        top, left = pad + r * (kh + pad), pad + s * (kw + pad)
        canvas[:, top : top + kh, left : left + kw] = tile
    return canvas.astype(np.float32)
