"""Recurrent layers with full backpropagation through time.

The GRU uses the reset-after gate formulation with separate input and
recurrent bias vectors, so a layer with U units on I input channels holds
3*U*(I + U + 2) trainable parameters. Update convention:

    z = sigmoid(x Wz + bz_in + h Uz + bz_rec)
    r = sigmoid(x Wr + br_in + h Ur + br_rec)
    hh = tanh(x Wh + bh_in + r * (h Uh + bh_rec))
    h' = z * h + (1 - z) * hh

Masked timesteps leave the hidden (and cell) state unchanged, so appending
padded steps never changes the final state or its gradients.
"""
from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from .layers import Layer, glorot_uniform


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _as_float_mask(mask, B, T):
    if mask is None:
        return np.ones((B, T, 1))
    if mask.shape != (B, T):
        raise ShapeMismatch(f"mask shape {mask.shape} != {(B, T)}")
    return mask.astype(np.float64)[:, :, None]


class GRU(Layer):
    def __init__(self, in_dim, units, rng, return_sequences=False,
                 kernel_l1=0.0, kernel_l2=0.0,
                 recurrent_l1=0.0, recurrent_l2=0.0):
        super().__init__()
        self.units = units
        self.return_sequences = return_sequences
        self.params["W"] = glorot_uniform(rng, (in_dim, 3 * units), in_dim, units)
        self.params["U"] = glorot_uniform(rng, (units, 3 * units), units, units)
        self.params["b_in"] = np.zeros(3 * units)
        self.params["b_rec"] = np.zeros(3 * units)
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        if kernel_l1 or kernel_l2:
            self.reg["W"] = (kernel_l1, kernel_l2)
        if recurrent_l1 or recurrent_l2:
            self.reg["U"] = (recurrent_l1, recurrent_l2)

    def forward(self, x, mask=None, training=False):
        W, U = self.params["W"], self.params["U"]
        if x.ndim != 3 or x.shape[2] != W.shape[0]:
            raise ShapeMismatch(f"gru expects (B, T, {W.shape[0]}), got {x.shape}")
        B, T, _ = x.shape
        n = self.units
        m = _as_float_mask(mask, B, T)
        Xp = x @ W + self.params["b_in"]           # (B, T, 3U)
        h = np.zeros((B, n))
        steps = []
        outputs = np.empty((B, T, n)) if self.return_sequences else None
        for t in range(T):
            hp = h @ U + self.params["b_rec"]
            z = _sigmoid(Xp[:, t, :n] + hp[:, :n])
            r = _sigmoid(Xp[:, t, n:2 * n] + hp[:, n:2 * n])
            hh = np.tanh(Xp[:, t, 2 * n:] + r * hp[:, 2 * n:])
            cand = z * h + (1.0 - z) * hh
            mt = m[:, t]
            h_new = mt * cand + (1.0 - mt) * h
            steps.append((h, z, r, hh, hp[:, 2 * n:], mt))
            if self.return_sequences:
                outputs[:, t] = h_new
            h = h_new
        self._cache = (x, Xp, steps)
        self.mask_out = mask if self.return_sequences else None
        return outputs if self.return_sequences else h

    def backward(self, dy):
        x, Xp, steps = self._cache
        W, U = self.params["W"], self.params["U"]
        B, T, _ = x.shape
        n = self.units
        dXp = np.zeros_like(Xp)
        dU = np.zeros_like(U)
        db_rec = np.zeros(3 * n)
        dh = np.zeros((B, n)) if self.return_sequences else dy.copy()
        for t in range(T - 1, -1, -1):
            if self.return_sequences:
                dh = dh + dy[:, t]
            h_prev, z, r, hh, hp_h, mt = steps[t]
            dcand = dh * mt
            dh_carry = dh * (1.0 - mt)
            dz = dcand * (h_prev - hh)
            dhh = dcand * (1.0 - z)
            dh_prev = dcand * z
            da_h = dhh * (1.0 - hh * hh)
            dr = da_h * hp_h
            dhp_h = da_h * r
            da_z = dz * z * (1.0 - z)
            da_r = dr * r * (1.0 - r)
            dXp[:, t, :n] = da_z
            dXp[:, t, n:2 * n] = da_r
            dXp[:, t, 2 * n:] = da_h
            dhp = np.concatenate([da_z, da_r, dhp_h], axis=1)
            dU += h_prev.T @ dhp
            db_rec += dhp.sum(axis=0)
            dh = dh_prev + dh_carry + dhp @ U.T
        self.grads["W"] += x.reshape(-1, x.shape[2]).T @ dXp.reshape(-1, 3 * n)
        self.grads["U"] += dU
        self.grads["b_in"] += dXp.sum(axis=(0, 1))
        self.grads["b_rec"] += db_rec
        return dXp @ W.T


class LSTM(Layer):
    """Standard 4-gate LSTM (input, forget, cell, output); forget-gate bias
    initialized to one. Parameter count: 4*(U*(I + U) + U)."""

    def __init__(self, in_dim, units, rng, return_sequences=False,
                 kernel_l1=0.0, kernel_l2=0.0,
                 recurrent_l1=0.0, recurrent_l2=0.0):
        super().__init__()
        self.units = units
        self.return_sequences = return_sequences
        self.params["W"] = glorot_uniform(rng, (in_dim, 4 * units), in_dim, units)
        self.params["U"] = glorot_uniform(rng, (units, 4 * units), units, units)
        b = np.zeros(4 * units)
        b[units:2 * units] = 1.0
        self.params["b"] = b
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        if kernel_l1 or kernel_l2:
            self.reg["W"] = (kernel_l1, kernel_l2)
        if recurrent_l1 or recurrent_l2:
            self.reg["U"] = (recurrent_l1, recurrent_l2)

    def forward(self, x, mask=None, training=False):
        W, U = self.params["W"], self.params["U"]
        if x.ndim != 3 or x.shape[2] != W.shape[0]:
            raise ShapeMismatch(f"lstm expects (B, T, {W.shape[0]}), got {x.shape}")
        B, T, _ = x.shape
        n = self.units
        m = _as_float_mask(mask, B, T)
        Xp = x @ W + self.params["b"]
        h = np.zeros((B, n))
        c = np.zeros((B, n))
        steps = []
        outputs = np.empty((B, T, n)) if self.return_sequences else None
        for t in range(T):
            a = Xp[:, t] + h @ U
            i = _sigmoid(a[:, :n])
            f = _sigmoid(a[:, n:2 * n])
            g = np.tanh(a[:, 2 * n:3 * n])
            o = _sigmoid(a[:, 3 * n:])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            mt = m[:, t]
            h_next = mt * (o * tc) + (1.0 - mt) * h
            c_next = mt * c_new + (1.0 - mt) * c
            steps.append((h, c, i, f, g, o, tc, mt))
            if self.return_sequences:
                outputs[:, t] = h_next
            h, c = h_next, c_next
        self._cache = (x, steps)
        self.mask_out = mask if self.return_sequences else None
        return outputs if self.return_sequences else h

    def backward(self, dy):
        x, steps = self._cache
        W, U = self.params["W"], self.params["U"]
        B, T, _ = x.shape
        n = self.units
        dXp = np.zeros((B, T, 4 * n))
        dU = np.zeros_like(U)
        dh = np.zeros((B, n)) if self.return_sequences else dy.copy()
        dc = np.zeros((B, n))
        for t in range(T - 1, -1, -1):
            if self.return_sequences:
                dh = dh + dy[:, t]
            h_prev, c_prev, i, f, g, o, tc, mt = steps[t]
            dh_eff = dh * mt
            dh_carry = dh * (1.0 - mt)
            do = dh_eff * tc
            dc_new = dc * mt + dh_eff * o * (1.0 - tc * tc)
            dc_carry = dc * (1.0 - mt)
            di = dc_new * g
            df = dc_new * c_prev
            dg = dc_new * i
            da = np.concatenate([
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ], axis=1)
            dXp[:, t] = da
            dU += h_prev.T @ da
            dh = dh_carry + da @ U.T
            dc = dc_new * f + dc_carry
        self.grads["W"] += x.reshape(-1, x.shape[2]).T @ dXp.reshape(-1, 4 * n)
        self.grads["U"] += dU
        self.grads["b"] += dXp.sum(axis=(0, 1))
        return dXp @ W.T


def reverse_valid(x, mask):
    """Reverse each sample's valid prefix along time, leaving padding in
    place. With mask=None the whole axis is reversed."""
    if mask is None:
        return x[:, ::-1]
    B, T = mask.shape
    lengths = mask.sum(axis=1).astype(np.int64)
    t_idx = np.arange(T)[None, :]
    rev = np.where(t_idx < lengths[:, None], lengths[:, None] - 1 - t_idx, t_idx)
    return x[np.arange(B)[:, None], rev]


class Bidirectional(Layer):
    """Runs two copies of a recurrent layer, one over the sequence as given
    and one over the reversed valid region; outputs are concatenated."""

    def __init__(self, forward_layer, backward_layer):
        super().__init__()
        if forward_layer.return_sequences != backward_layer.return_sequences:
            raise ShapeMismatch("wrapped layers disagree on return_sequences")
        self.fwd = forward_layer
        self.bwd = backward_layer
        self.return_sequences = forward_layer.return_sequences

    def children(self):
        return [("fwd", self.fwd), ("bwd", self.bwd)]

    def forward(self, x, mask=None, training=False):
        self._mask = mask
        y_f = self.fwd.forward(x, mask=mask, training=training)
        y_b = self.bwd.forward(reverse_valid(x, mask), mask=mask, training=training)
        if self.return_sequences:
            y_b = reverse_valid(y_b, mask)
        self.mask_out = mask if self.return_sequences else None
        return np.concatenate([y_f, y_b], axis=-1)

    def backward(self, dy):
        n = self.fwd.units
        dy_f, dy_b = dy[..., :n], dy[..., n:]
        dx = self.fwd.backward(dy_f)
        if self.return_sequences:
            dy_b = reverse_valid(dy_b, self._mask)
        dx_b = self.bwd.backward(dy_b)
        return dx + reverse_valid(dx_b, self._mask)
