"""Bidirectional LSTM layer with backpropagation through time.

Standard cell: sigmoid input/forget/output gates, tanh candidate and output
squash; gate pre-activations stacked as [i | f | g | o]. The layer output
concatenates the forward direction's hidden state at the last frame with the
backward direction's hidden state at the first frame.
"""

from __future__ import annotations

import numpy as np

from ..dataset import Rng
from ..errors import ShapeError
from .layers import Layer, glorot_uniform


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class _Direction:
    """One LSTM direction: parameters plus per-sequence caches."""

    def __init__(self, d_in: int, hidden: int, rng: Rng, dtype=np.float64):
        self.d_in = d_in
        self.hidden = hidden
        self.dtype = np.dtype(dtype)
        self.wx = glorot_uniform((d_in, 4 * hidden), d_in, 4 * hidden, rng, dtype)
        self.wh = glorot_uniform((hidden, 4 * hidden), hidden, 4 * hidden, rng, dtype)
        self.b = np.zeros(4 * hidden, dtype=dtype)
        self.b[hidden : 2 * hidden] = 1.0  # forget-gate bias
        self.gwx = np.zeros_like(self.wx)
        self.gwh = np.zeros_like(self.wh)
        self.gb = np.zeros_like(self.b)
        self._cache = None

    def forward(self, xs: np.ndarray, keep_cache: bool) -> np.ndarray:
        """Run over xs [B, T, D] in time order; returns last hidden [B, H]."""
        b_size, t_len, _ = xs.shape
        hid = self.hidden
        h = np.zeros((b_size, hid), dtype=self.dtype)
        c = np.zeros((b_size, hid), dtype=self.dtype)
        steps = [] if keep_cache else None
        for t in range(t_len):
            x_t = xs[:, t, :]
            z = x_t @ self.wx + h @ self.wh + self.b
            i = _sigmoid(z[:, :hid])
            f = _sigmoid(z[:, hid : 2 * hid])
            g = np.tanh(z[:, 2 * hid : 3 * hid])
            o = _sigmoid(z[:, 3 * hid :])
            c_new = f * c + i * g
            tanh_c = np.tanh(c_new)
            if keep_cache:
                steps.append((x_t, h, c, i, f, g, o, tanh_c))
            c = c_new
            h = o * tanh_c
        if keep_cache:
            self._cache = steps
        return h

    def backward(self, grad_h_last: np.ndarray) -> np.ndarray:
        """BPTT from a gradient on the final hidden state; returns d(xs)."""
        steps = self._cache
        b_size = grad_h_last.shape[0]
        t_len = len(steps)
        self.gwx[:] = 0.0
        self.gwh[:] = 0.0
        self.gb[:] = 0.0
        dxs = np.empty((b_size, t_len, self.d_in), dtype=self.dtype)
        dh = grad_h_last
        dc = np.zeros_like(dh)
        for t in range(t_len - 1, -1, -1):
            x_t, h_prev, c_prev, i, f, g, o, tanh_c = steps[t]
            do = dh * tanh_c
            dc = dc + dh * o * (1.0 - tanh_c * tanh_c)
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dz = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g * g),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            self.gwx += x_t.T @ dz
            self.gwh += h_prev.T @ dz
            self.gb += dz.sum(axis=0)
            dxs[:, t, :] = dz @ self.wx.T
            dh = dz @ self.wh.T
            dc = dc * f
        return dxs


class BiLstm(Layer):
    """[B, T, D] -> [B, 2H]: forward last hidden || backward first hidden."""

    def __init__(self, d_in: int, hidden: int, rng: Rng, dtype=np.float64):
        self.d_in = d_in
        self.hidden = hidden
        self.fwd = _Direction(d_in, hidden, rng.fork(0), dtype)
        self.bwd = _Direction(d_in, hidden, rng.fork(1), dtype)

    def params(self):
        return {
            "wx_f": self.fwd.wx, "wh_f": self.fwd.wh, "b_f": self.fwd.b,
            "wx_b": self.bwd.wx, "wh_b": self.bwd.wh, "b_b": self.bwd.b,
        }

    def grads(self):
        return {
            "wx_f": self.fwd.gwx, "wh_f": self.fwd.gwh, "b_f": self.fwd.gb,
            "wx_b": self.bwd.gwx, "wh_b": self.bwd.gwh, "b_b": self.bwd.gb,
        }

    def decay_keys(self):
        return {"wx_f", "wh_f", "wx_b", "wh_b"}

    def forward(self, x, train):
        if x.ndim != 3 or x.shape[2] != self.d_in:
            raise ShapeError(f"expected [B, T, {self.d_in}], got {x.shape}")
        if x.shape[1] == 0:
            raise ShapeError("empty sequence (T = 0)")
        h_f = self.fwd.forward(x, keep_cache=train)
        h_b = self.bwd.forward(x[:, ::-1, :], keep_cache=train)
        return np.concatenate([h_f, h_b], axis=1)

    def backward(self, grad_out):
        hid = self.hidden
        dx_f = self.fwd.backward(grad_out[:, :hid])
        dx_b = self.bwd.backward(grad_out[:, hid:])
        return dx_f + dx_b[:, ::-1, :]
