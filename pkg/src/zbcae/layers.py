"""Encoder, decoder and classifier layers with hand-derived backward passes.

An encoder is convolution -> activation -> optional pooling, with no bias
term anywhere (``__slots__`` keeps it structurally impossible to add one).
Its decoder twin unpools through the recorded switches and convolves with
the *same* filter bank used as its transpose; the pairing is by reference,
so updating the encoder weights updates the decoder.

``pool`` is ``None``, an int (square max-pool window) or ``"quadrant"``.
"""

from dataclasses import dataclass

import numpy as np

from zbcae import ops
from zbcae.errors import ShapeError

ACTIVATIONS = ("relu", "tanh", "linear")


def _activate(name, pre):
    if name == "relu":
        return ops.relu(pre)
    if name == "tanh":
        return np.tanh(pre)
    return pre


def _activation_grad(name, act, grad):
    if name == "relu":
        # act > 0 iff pre > 0, so the mask can come from the activation
        return np.where(act > 0, grad, grad.dtype.type(0))
    if name == "tanh":
        return (1.0 - act * act) * grad
    return grad


@dataclass
class EncoderCache:
    x: np.ndarray
    act: np.ndarray
    switches: np.ndarray | None


class EncoderModule:
    __slots__ = ("filters", "activation", "pool")

    def __init__(self, filters, activation="relu", pool=None):
        filters = np.asarray(filters)
        if filters.ndim != 4:
            raise ShapeError(f"filters must be (k,c,kh,kw), got {filters.shape}")
        if activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if not (pool is None or pool == "quadrant" or (isinstance(pool, int) and pool >= 1)):
            raise ValueError(f"pool must be None, an int >= 1 or 'quadrant', got {pool!r}")
        self.filters = filters
        self.activation = activation
        self.pool = pool

    def forward(self, x):
        """Returns (pooled activation, cache for backward)."""
        act = _activate(self.activation, ops.conv_valid(x, self.filters))
        if self.pool is None:
            return act, EncoderCache(x, act, None)
        if self.pool == "quadrant":
            out, sw = ops.quadrant_pool(act)
        else:
            out, sw = ops.maxpool(act, self.pool)
        return out, EncoderCache(x, act, sw)

    def _pool_backward(self, cache, grad_out):
        if self.pool is None:
            return grad_out
        if self.pool == "quadrant":
            h, w = cache.act.shape[2], cache.act.shape[3]
            return ops.quadrant_unpool(grad_out, cache.switches, h, w)
        g = ops.unpool(grad_out, cache.switches, self.pool)
        if g.shape == cache.act.shape:
            return g
        # pooling truncated trailing rows/cols; they received no gradient
        full = np.zeros_like(cache.act)
        full[:, :, : g.shape[2], : g.shape[3]] = g
        return full

    def backward(self, cache, grad_out, need_filter_grad=True, need_input_grad=True):
        """Backward through pool, activation and convolution.

        Returns (grad_filters or None, grad_input or None).
        """
        g_pre = _activation_grad(self.activation, cache.act, self._pool_backward(cache, grad_out))
        gf = ops.conv_grad_filters(cache.x, g_pre, self.filters.shape) if need_filter_grad else None
        gx = ops.conv_full_transpose(g_pre, self.filters) if need_input_grad else None
        return gf, gx


@dataclass
class DecoderCache:
    unpooled: np.ndarray


class DecoderModule:
    """Mirror of an encoder: unpool by its switches, deconvolve with its
    filters transposed, linear activation. Owns no weights of its own."""

    __slots__ = ("encoder",)

    def __init__(self, encoder):
        self.encoder = encoder

    def forward(self, y, enc_cache):
        enc = self.encoder
        if enc.pool is None:
            u = y
        elif enc.pool == "quadrant":
            if enc_cache.switches is None:
                raise ShapeError("decoder needs the switches recorded by its encoder")
            h, w = enc_cache.act.shape[2], enc_cache.act.shape[3]
            u = ops.quadrant_unpool(y, enc_cache.switches, h, w)
        else:
            if enc_cache.switches is None:
                raise ShapeError("decoder needs the switches recorded by its encoder")
            u = ops.unpool(y, enc_cache.switches, enc.pool)
            if u.shape != enc_cache.act.shape:
                full = np.zeros_like(enc_cache.act)
                full[:, :, : u.shape[2], : u.shape[3]] = u
                u = full
        return ops.conv_full_transpose(u, enc.filters), DecoderCache(u)

    def backward(self, cache, enc_cache, grad_out, need_filter_grad=True):
        """Returns (grad_filters or None, grad_input)."""
        enc = self.encoder
        gf = (
            ops.conv_grad_filters(grad_out, cache.unpooled, enc.filters.shape)
            if need_filter_grad
            else None
        )
        gu = ops.conv_valid(grad_out, enc.filters)
        if enc.pool is None:
            return gf, gu
        if enc.pool == "quadrant":
            return gf, ops.quadrant_unpool_grad(gu, enc_cache.switches)
        p = enc.pool
        n, c, h2, w2 = enc_cache.switches.shape
        return gf, ops.unpool_grad(
            np.ascontiguousarray(gu[:, :, : h2 * p, : w2 * p]), enc_cache.switches, p
        )


class CAEStack:
    """Ordered encoders plus the decoder chain derived from them."""

    def __init__(self, encoders):
        self.encoders = list(encoders)
        self.decoders = [DecoderModule(e) for e in self.encoders]
        self.trained_depth = 0

    def __len__(self):
        return len(self.encoders)

    def encode(self, x, depth=None):
        depth = len(self.encoders) if depth is None else depth
        caches = []
        for enc in self.encoders[:depth]:
            x, cache = enc.forward(x)
            caches.append(cache)
        return x, caches

    def reconstruct(self, x, depth=None):
        """r(x): encode through layers 1..depth, decode back with tied weights."""
        depth = len(self.encoders) if depth is None else depth
        if depth > len(self.encoders):
            raise ShapeError(f"depth {depth} exceeds stack size {len(self.encoders)}")
        y, enc_caches = self.encode(x, depth)
        dec_caches = [None] * depth
        for l in reversed(range(depth)):
            y, dec_caches[l] = self.decoders[l].forward(y, enc_caches[l])
        return y, (enc_caches, dec_caches)

    def cost(self, x, depth):
        """Reconstruction cost at `depth`, forward pass only."""
        r, _ = self.reconstruct(x, depth)
        return ops.mse(x, r)

    def cost_and_grads(self, x, depth):
        """Reconstruction cost at `depth` and the gradient for that layer only.

        Earlier layers stay frozen: gradient flows through them but is only
        materialized for layer `depth`'s filters (which appear twice, in the
        encoder and in its tied decoder).
        """
        r, (enc_caches, dec_caches) = self.reconstruct(x, depth)
        cost = ops.mse(x, r)
        g = ops.mse_grad(x, r)
        grad_filters = None
        for l in range(depth):  # decoder 1 was applied last, walk back up
            want = l == depth - 1
            gf, g = self.decoders[l].backward(dec_caches[l], enc_caches[l], g, need_filter_grad=want)
            if want:
                grad_filters = gf
        gf, _ = self.encoders[depth - 1].backward(
            enc_caches[depth - 1], g, need_filter_grad=True, need_input_grad=False
        )
        grad_filters = grad_filters + gf
        return cost, {f"conv{depth}.filters": grad_filters}


def apply_dropout(x, p, rng):
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p).

    Returns (output, mask); the mask already carries the 1/(1-p) scale so the
    backward pass is a plain multiply.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0,1), got {p}")
    if p == 0.0:
        return x, np.ones_like(x)
    keep = (rng.random(x.shape) >= p).astype(x.dtype)
    mask = keep / x.dtype.type(1.0 - p)
    return x * mask, mask


def softmax(logits):
    """Row-wise softmax, numerically stabilized."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy_and_grads(probs, labels):
    """Mean negative log-likelihood and its gradient at the logits.

    Gradient uses the softmax shortcut: (probs - onehot) / batch.
    """
    n, k = probs.shape
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= k:
        raise ShapeError(f"labels must lie in [0, {k})")
    picked = probs[np.arange(n), labels].astype(np.float64)
    loss = float(-np.log(np.maximum(picked, 1e-300)).mean())
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / probs.dtype.type(n)


@dataclass(eq=False)
class ClassifierHead:
    w_hidden: np.ndarray  # (hidden, features)
    b_hidden: np.ndarray  # (hidden,)
    w_out: np.ndarray  # (classes, hidden)
    b_out: np.ndarray  # (classes,)
    dropout_p: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout probability must be in [0,1), got {self.dropout_p}")


class Classifier:
    """Pretrained (or random) encoders with a fully-connected + softmax head."""

    def __init__(self, encoders, head):
        self.encoders = list(encoders)
        self.head = head

    def parameters(self):
        """Named trainable arrays, in a stable order."""
        params = {}
        for i, enc in enumerate(self.encoders, start=1):
            params[f"conv{i}.filters"] = enc.filters
        params["head.w_hidden"] = self.head.w_hidden
        params["head.b_hidden"] = self.head.b_hidden
        params["head.w_out"] = self.head.w_out
        params["head.b_out"] = self.head.b_out
        return params

    def set_parameters(self, params):
        for i, enc in enumerate(self.encoders, start=1):
            enc.filters = params[f"conv{i}.filters"]
        self.head.w_hidden = params["head.w_hidden"]
        self.head.b_hidden = params["head.b_hidden"]
        self.head.w_out = params["head.w_out"]
        self.head.b_out = params["head.b_out"]

    def _forward(self, x, train_mode, rng):
        enc_out, enc_caches = x, []
        for enc in self.encoders:
            enc_out, cache = enc.forward(enc_out)
            enc_caches.append(cache)
        n = enc_out.shape[0]
        flat = enc_out.reshape(n, -1)
        if flat.shape[1] != self.head.w_hidden.shape[1]:
            raise ShapeError(
                f"feature map flattens to {flat.shape[1]}, head expects "
                f"{self.head.w_hidden.shape[1]}"
            )
        z1 = flat @ self.head.w_hidden.T + self.head.b_hidden
        h = ops.relu(z1)
        if train_mode and self.head.dropout_p > 0.0:
            if rng is None:
                raise ValueError("training-mode forward with dropout needs an rng")
            hd, mask = apply_dropout(h, self.head.dropout_p, rng)
        else:
            hd, mask = h, None
        logits = hd @ self.head.w_out.T + self.head.b_out
        probs = softmax(logits)
        return probs, (enc_caches, enc_out.shape, flat, z1, h, hd, mask)

    def forward(self, x, train_mode=False, rng=None):
        """Class probabilities, one row per example."""
        probs, _ = self._forward(x, train_mode, rng)
        return probs

    def loss(self, x, labels):
        """Inference-mode cross-entropy, forward pass only."""
        probs, _ = self._forward(x, train_mode=False, rng=None)
        return cross_entropy_and_grads(probs, labels)[0]

    def loss_and_grads(self, x, labels, train_mode=True, rng=None):
        """Cross-entropy loss and gradients for every trainable tensor."""
        probs, (enc_caches, enc_shape, flat, z1, h, hd, mask) = self._forward(
            x, train_mode, rng
        )
        loss, dlogits = cross_entropy_and_grads(probs, labels)
        grads = {
            "head.w_out": dlogits.T @ hd,
            "head.b_out": dlogits.sum(axis=0),
        }
        dhd = dlogits @ self.head.w_out
        dh = dhd * mask if mask is not None else dhd
        dz1 = np.where(z1 > 0, dh, dh.dtype.type(0))
        grads["head.w_hidden"] = dz1.T @ flat
        grads["head.b_hidden"] = dz1.sum(axis=0)
        g = (dz1 @ self.head.w_hidden).reshape(enc_shape)
        for i in reversed(range(len(self.encoders))):
            gf, g = self.encoders[i].backward(
                enc_caches[i], g, need_filter_grad=True, need_input_grad=i > 0
            )
            grads[f"conv{i + 1}.filters"] = gf
        return loss, grads, probs
