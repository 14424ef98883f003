"""Feed-forward building blocks with exact backprop.

Conventions:
  - sequence tensors are (batch, timesteps, channels), float64
  - masks are boolean (batch, timesteps); True marks a valid step
  - forward() caches what backward() needs; a layer instance must not be
    used concurrently from multiple threads
  - after forward(), `mask_out` holds the mask seen by the next layer
"""
from __future__ import annotations

import numpy as np

from ..errors import DegenerateBatch, InvalidRate, ShapeMismatch


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    """Base class. Leaves hold `params`/`grads`/`reg`; composites override
    `children()`."""

    def __init__(self):
        self.params = {}
        self.grads = {}
        self.reg = {}        # param name -> (l1, l2)
        self.mask_out = None

    def children(self):
        return []

    def param_count(self):
        n = sum(int(np.prod(p.shape)) for p in self.params.values())
        return n + sum(c.param_count() for _, c in self.children())

    def forward(self, x, mask=None, training=False):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError


class Dense(Layer):
    """y = x W + b on (batch, features) inputs."""

    def __init__(self, in_dim, units, rng, l1=0.0, l2=0.0):
        super().__init__()
        self.params["W"] = glorot_uniform(rng, (in_dim, units), in_dim, units)
        self.params["b"] = np.zeros(units)
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        if l1 or l2:
            self.reg["W"] = (l1, l2)

    def forward(self, x, mask=None, training=False):
        if x.ndim != 2 or x.shape[1] != self.params["W"].shape[0]:
            raise ShapeMismatch(
                f"dense expects (batch, {self.params['W'].shape[0]}), got {x.shape}")
        self._x = x
        self.mask_out = None
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy):
        self.grads["W"] += self._x.T @ dy
        self.grads["b"] += dy.sum(axis=0)
        return dy @ self.params["W"].T


class Conv1D(Layer):
    """Temporal convolution, stride 1, same padding; preserves length."""

    def __init__(self, in_channels, filters, kernel_size, rng,
                 use_bias=True, l1=0.0, l2=0.0):
        super().__init__()
        k = kernel_size
        self.kernel_size = k
        self.pad_left = (k - 1) // 2
        self.pad_right = k - 1 - self.pad_left
        self.use_bias = use_bias
        self.params["W"] = glorot_uniform(
            rng, (k, in_channels, filters), k * in_channels, k * filters)
        if use_bias:
            self.params["b"] = np.zeros(filters)
        self.grads = {k_: np.zeros_like(v) for k_, v in self.params.items()}
        if l1 or l2:
            self.reg["W"] = (l1, l2)

    def forward(self, x, mask=None, training=False):
        W = self.params["W"]
        if x.ndim != 3 or x.shape[2] != W.shape[1]:
            raise ShapeMismatch(
                f"conv1d expects (batch, T, {W.shape[1]}), got {x.shape}")
        B, T, _ = x.shape
        xp = np.pad(x, ((0, 0), (self.pad_left, self.pad_right), (0, 0)))
        y = np.zeros((B, T, W.shape[2]))
        for j in range(self.kernel_size):
            y += xp[:, j:j + T, :] @ W[j]
        if self.use_bias:
            y += self.params["b"]
        self._xp, self._T = xp, T
        self.mask_out = mask
        return y

    def backward(self, dy):
        W = self.params["W"]
        xp, T = self._xp, self._T
        dxp = np.zeros_like(xp)
        flat_dy = dy.reshape(-1, W.shape[2])
        for j in range(self.kernel_size):
            self.grads["W"][j] += xp[:, j:j + T, :].reshape(-1, W.shape[1]).T @ flat_dy
            dxp[:, j:j + T, :] += dy @ W[j].T
        if self.use_bias:
            self.grads["b"] += dy.sum(axis=(0, 1))
        return dxp[:, self.pad_left:self.pad_left + T, :]


class BatchNorm1D(Layer):
    """Per-channel batch normalization over (batch, time).

    Training mode normalizes with batch statistics and updates running
    stats; inference mode uses the running statistics.
    """

    def __init__(self, channels, momentum=0.99, eps=1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.params["gamma"] = np.ones(channels)
        self.params["beta"] = np.zeros(channels)
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def forward(self, x, mask=None, training=False):
        axes = tuple(range(x.ndim - 1))
        self.mask_out = mask
        if training:
            if x.shape[0] < 2:
                raise DegenerateBatch("batch norm needs batch >= 2 in training")
            mu = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mu
            self.running_var = self.momentum * self.running_var + (1 - self.momentum) * var
        else:
            mu, var = self.running_mean, self.running_var
        ivar = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * ivar
        self._cache = (xhat, ivar, axes, training)
        return self.params["gamma"] * xhat + self.params["beta"]

    def backward(self, dy):
        xhat, ivar, axes, training = self._cache
        self.grads["gamma"] += (dy * xhat).sum(axis=axes)
        self.grads["beta"] += dy.sum(axis=axes)
        dxhat = dy * self.params["gamma"]
        if not training:
            return dxhat * ivar
        n = np.prod([xhat.shape[a] for a in axes])
        # fused batch-norm backward through the batch statistics
        return (ivar / n) * (n * dxhat
                             - dxhat.sum(axis=axes)
                             - xhat * (dxhat * xhat).sum(axis=axes))


class ReLU(Layer):
    def forward(self, x, mask=None, training=False):
        self._keep = x > 0
        self.mask_out = mask
        return np.where(self._keep, x, 0.0)

    def backward(self, dy):
        return np.where(self._keep, dy, 0.0)


class Dropout(Layer):
    """Inverted dropout: scales kept activations by 1/(1-rate) in training,
    identity at inference."""

    def __init__(self, rate, rng=None):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise InvalidRate(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng if rng is not None else np.random.default_rng()

    def reseed(self, seed):
        self.rng = np.random.default_rng(seed)

    def forward(self, x, mask=None, training=False):
        self.mask_out = mask
        if not training or self.rate == 0.0:
            self._drop = None
            return x
        keep = self.rng.random(x.shape) >= self.rate
        self._drop = keep / (1.0 - self.rate)
        return x * self._drop

    def backward(self, dy):
        if self._drop is None:
            return dy
        return dy * self._drop


class MaxPool1D(Layer):
    """Temporal max pooling. `padding="valid"` (default) or `"same"`
    (output length equals ceil(T / stride))."""

    def __init__(self, pool_size=2, stride=None, padding="valid"):
        super().__init__()
        self.pool_size = pool_size
        self.stride = stride if stride is not None else pool_size
        self.padding = padding

    def forward(self, x, mask=None, training=False):
        B, T, C = x.shape
        w, s = self.pool_size, self.stride
        if self.padding == "same":
            t_out = -(-T // s)
            total = max((t_out - 1) * s + w - T, 0)
            pl, pr = total // 2, total - total // 2
        else:
            t_out = (T - w) // s + 1
            pl = pr = 0
        if t_out < 1:
            raise ShapeMismatch(f"pooling window {w} larger than length {T}")
        xp = np.pad(x, ((0, 0), (pl, pr), (0, 0)), constant_values=-np.inf)
        best = np.full((B, t_out, C), -np.inf)
        argj = np.zeros((B, t_out, C), dtype=np.int64)
        for j in range(w):
            cand = xp[:, j:j + s * t_out:s, :]
            better = cand > best
            best = np.where(better, cand, best)
            argj = np.where(better, j, argj)
        self._cache = (argj, xp.shape, pl, T, t_out)
        self.mask_out = None  # downstream of pooling all steps are treated valid
        return best

    def backward(self, dy):
        argj, xp_shape, pl, T, t_out = self._cache
        w, s = self.pool_size, self.stride
        dxp = np.zeros(xp_shape)
        for j in range(w):
            sel = argj == j
            dxp[:, j:j + s * t_out:s, :] += np.where(sel, dy, 0.0)
        return dxp[:, pl:pl + T, :]


class GlobalAveragePool(Layer):
    """Average over valid timesteps: (B, T, C) -> (B, C)."""

    def forward(self, x, mask=None, training=False):
        B, T, C = x.shape
        if mask is None:
            self._m = np.ones((B, T, 1))
        else:
            self._m = mask.astype(np.float64)[:, :, None]
        self._count = self._m.sum(axis=1)  # (B, 1)
        self._shape = x.shape
        self.mask_out = None
        return (x * self._m).sum(axis=1) / self._count

    def backward(self, dy):
        return (dy / self._count)[:, None, :] * self._m
