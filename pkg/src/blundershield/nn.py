"""Minimal neural-net building blocks on numpy arrays.

Layers keep their forward cache and write gradients next to their
parameters; everything is dtype-generic so models can run float32 while
gradient checks run float64.  Weight init is uniform scaled by fan-in,
except zero_init layers (used for output heads so a fresh model predicts
the uniform distribution / 0.5).
"""

from __future__ import annotations

import numpy as np


class Dense:
    def __init__(self, n_in: int, n_out: int, rng=None, dtype=np.float32, zero_init: bool = False):
        if zero_init:
            self.w = np.zeros((n_in, n_out), dtype=dtype)
        else:
            limit = 1.0 / np.sqrt(n_in)
            self.w = rng.uniform(-limit, limit, (n_in, n_out)).astype(dtype)
        self.b = np.zeros(n_out, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x = None

    def forward(self, x):
        self._x = x
        return x @ self.w + self.b

    def backward(self, dy):
        self.dw = self._x.T @ dy
        self.db = dy.sum(axis=0)
        return dy @ self.w.T

    def params(self):
        return [("w", self.w), ("b", self.b)]

    def grads(self):
        return [self.dw, self.db]


class Conv3x3:
    """3x3 convolution, stride 1, no padding, NHWC layout.

    Weights are stored as (9 * c_in, c_out): rows are the 3x3 window in
    row-major order, channels fastest."""

    def __init__(self, c_in: int, c_out: int, rng=None, dtype=np.float32):
        fan_in = 9 * c_in
        limit = 1.0 / np.sqrt(fan_in)
        self.w = rng.uniform(-limit, limit, (fan_in, c_out)).astype(dtype)
        self.b = np.zeros(c_out, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self.c_in = c_in
        self.c_out = c_out
        self._cols = None
        self._x_shape = None

    @staticmethod
    def _im2col(x):
        n, h, w, c = x.shape
        oh, ow = h - 2, w - 2
        cols = np.empty((n, oh, ow, 9 * c), dtype=x.dtype)
        k = 0
        for i in range(3):
            for j in range(3):
                cols[:, :, :, k * c:(k + 1) * c] = x[:, i:i + oh, j:j + ow, :]
                k += 1
        return cols

    def forward(self, x):
        self._x_shape = x.shape
        n, h, w, _ = x.shape
        oh, ow = h - 2, w - 2
        cols = self._im2col(x)
        self._cols = cols.reshape(-1, cols.shape[-1])
        y = self._cols @ self.w + self.b
        return y.reshape(n, oh, ow, self.c_out)

    def backward(self, dy):
        n, h, w, c = self._x_shape
        oh, ow = h - 2, w - 2
        dy2 = dy.reshape(-1, self.c_out)
        self.dw = self._cols.T @ dy2
        self.db = dy2.sum(axis=0)
        dcols = (dy2 @ self.w.T).reshape(n, oh, ow, 9 * c)
        dx = np.zeros(self._x_shape, dtype=dy.dtype)
        k = 0
        for i in range(3):
            for j in range(3):
                dx[:, i:i + oh, j:j + ow, :] += dcols[:, :, :, k * c:(k + 1) * c]
                k += 1
        return dx

    def params(self):
        return [("w", self.w), ("b", self.b)]

    def grads(self):
        return [self.dw, self.db]


class ChannelAffine:
    """Per-channel scale and shift over the last axis; the normalization
    stand-in used ahead of ReLU in the risk trunk."""

    def __init__(self, channels: int, dtype=np.float32):
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)
        self.dgamma = np.zeros_like(self.gamma)
        self.dbeta = np.zeros_like(self.beta)
        self._x = None

    def forward(self, x):
        self._x = x
        return x * self.gamma + self.beta

    def backward(self, dy):
        axes = tuple(range(dy.ndim - 1))
        self.dgamma = (dy * self._x).sum(axis=axes)
        self.dbeta = dy.sum(axis=axes)
        return dy * self.gamma

    def params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def grads(self):
        return [self.dgamma, self.dbeta]


class Relu:
    def __init__(self):
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy):
        return dy * self._mask

    def params(self):
        return []

    def grads(self):
        return []


class Flatten:
    def __init__(self):
        self._shape = None

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)

    def params(self):
        return []

    def grads(self):
        return []


# ---------------------------------------------------------------------------
# Losses.  Each returns (mean loss, dlogits, probabilities).

def softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    n = logits.shape[0]
    shifted = logits - logits.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1))
    log_probs = shifted - log_z[:, None]
    loss = -log_probs[np.arange(n), labels].mean()
    probs = np.exp(log_probs)
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n, probs


def mse_on_probs(logits, labels, n_classes: int):
    """Squared error between the softmax output and the one-hot target;
    the historical loss kept as a config ablation."""
    n = logits.shape[0]
    probs = softmax(logits)
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), labels] = 1.0
    diff = probs - onehot
    loss = (diff ** 2).sum(axis=-1).mean()
    dprobs = 2.0 * diff / n
    inner = (dprobs * probs).sum(axis=-1, keepdims=True)
    dlogits = probs * (dprobs - inner)
    return loss, dlogits, probs


def sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid_bce(logits, targets):
    n = logits.shape[0]
    loss = (np.logaddexp(0.0, -logits) * targets + np.logaddexp(0.0, logits) * (1.0 - targets)).mean()
    probs = sigmoid(logits)
    return loss, (probs - targets) / n, probs


# ---------------------------------------------------------------------------
# Optimizers.

class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


class SgdMomentum:
    def __init__(self, lr: float, momentum: float = 0.9):
        self.lr = lr
        self.momentum = momentum
        self._velocity = {}

    def step(self, params, grads):
        for i, (p, g) in enumerate(zip(params, grads)):
            v = self._velocity.get(i)
            if v is None:
                v = np.zeros_like(p)
            v = self.momentum * v + g
            self._velocity[i] = v
            p -= self.lr * v


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m = {}
        self._v = {}
        self._t = 0

    def step(self, params, grads):
        self._t += 1
        b1t = 1.0 - self.beta1 ** self._t
        b2t = 1.0 - self.beta2 ** self._t
        for i, (p, g) in enumerate(zip(params, grads)):
            m = self._m.get(i, 0.0) * self.beta1 + (1.0 - self.beta1) * g
            v = self._v.get(i, 0.0) * self.beta2 + (1.0 - self.beta2) * g * g
            self._m[i] = m
            self._v[i] = v
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def global_grad_norm(grads) -> float:
    total = 0.0
    for g in grads:
        total += float((g.astype(np.float64) ** 2).sum())
    return float(np.sqrt(total))


def clip_gradients_(grads, max_norm: float) -> float:
    """Scale grads in place so the global norm is at most max_norm.
    Returns the pre-clip norm."""
    norm = global_grad_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm
