"""Feed-forward layers with explicit forward/backward passes.

Layers are dtype-generic: parameters are created in the dtype passed at
construction (float64 by default, which the gradient-check suite relies
on) and activations follow. Each layer caches what its backward pass needs
during training-mode forward; backward returns the gradient with respect
to the input and stores parameter gradients for the optimizer.
Inference-mode forward writes no shared state, so a trained model can
serve concurrent requests.

The convolution runs as one GEMM over an explicit channel-major im2col
buffer; that buffer and the other large intermediates are reused across
batches of the same shape, keeping the training hot path nearly
allocation-free.
"""

from __future__ import annotations

import math

import numpy as np

from ..dataset import Rng
from ..errors import BatchTooSmall, InvalidRate, ShapeError


class Layer:
    """Base class: parameterless identity-ish contract."""

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def grads(self) -> dict[str, np.ndarray]:
        return {}

    def decay_keys(self) -> set[str]:
        """Parameter names subject to decoupled weight decay."""
        return set()

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def he_uniform(shape, fan_in: int, rng: Rng, dtype=np.float64) -> np.ndarray:
    limit = math.sqrt(6.0 / fan_in)
    return rng.gen.uniform(-limit, limit, size=shape).astype(dtype)


def glorot_uniform(shape, fan_in: int, fan_out: int, rng: Rng, dtype=np.float64) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.gen.uniform(-limit, limit, size=shape).astype(dtype)


class Conv1d(Layer):
    """1-D convolution, stride 1, 'same' zero padding, odd kernel."""

    def __init__(self, c_in: int, c_out: int, kernel: int, rng: Rng, dtype=np.float64):
        if kernel % 2 == 0:
            raise ShapeError(f"kernel must be odd, got {kernel}")
        self.c_in = c_in
        self.c_out = c_out
        self.kernel = kernel
        self.dtype = np.dtype(dtype)
        self.w = he_uniform((c_out, c_in, kernel), c_in * kernel, rng, dtype)
        self.b = np.zeros(c_out, dtype=dtype)
        self._gw = np.zeros_like(self.w)
        self._gb = np.zeros_like(self.b)
        self._scratch_shape = None
        self._xpt = None  # [C_in, B, L + 2*pad], pad columns stay zero
        self._cols = None  # [C_in, K, B, L] im2col buffer
        self._gcols = None  # [C_in, K, B, L] gradient of cols
        self._gxpt = None  # [C_in, B, L + 2*pad] col2im accumulator

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return {"w": self._gw, "b": self._gb}

    def decay_keys(self):
        return {"w"}

    def _gather_cols(self, x, xpt, cols):
        """Channel-major im2col: cols[c, k, b, t] = x[b, c, t + k - pad]."""
        length = x.shape[2]
        pad = (self.kernel - 1) // 2
        xpt[:, :, pad : pad + length] = x.transpose(1, 0, 2)
        for k in range(self.kernel):
            cols[:, k] = xpt[:, :, k : k + length]

    def forward(self, x, train):
        if x.ndim != 3 or x.shape[1] != self.c_in:
            raise ShapeError(f"expected [B, {self.c_in}, L], got {x.shape}")
        b_size, _, length = x.shape
        pad = (self.kernel - 1) // 2
        if train:
            if self._scratch_shape != x.shape:
                self._scratch_shape = x.shape
                self._xpt = np.zeros((self.c_in, b_size, length + 2 * pad), dtype=self.dtype)
                self._cols = np.empty((self.c_in, self.kernel, b_size, length), dtype=self.dtype)
                self._gcols = np.empty_like(self._cols)
                self._gxpt = np.empty_like(self._xpt)
            xpt, cols = self._xpt, self._cols
        else:
            xpt = np.zeros((self.c_in, b_size, length + 2 * pad), dtype=self.dtype)
            cols = np.empty((self.c_in, self.kernel, b_size, length), dtype=self.dtype)
        self._gather_cols(np.asarray(x, dtype=self.dtype), xpt, cols)
        w2 = self.w.reshape(self.c_out, self.c_in * self.kernel)
        out2 = w2 @ cols.reshape(self.c_in * self.kernel, b_size * length)
        out = out2.reshape(self.c_out, b_size, length).transpose(1, 0, 2)
        return out + self.b[None, :, None]

    def backward(self, grad_out):
        b_size, _, length = grad_out.shape
        pad = (self.kernel - 1) // 2
        ck = self.c_in * self.kernel
        cols2 = self._cols.reshape(ck, b_size * length)
        go2 = np.ascontiguousarray(grad_out.transpose(1, 0, 2)).reshape(
            self.c_out, b_size * length
        )
        self._gb[:] = go2.sum(axis=1)
        np.matmul(go2, cols2.T, out=self._gw.reshape(self.c_out, ck))
        gcols2 = self._gcols.reshape(ck, b_size * length)
        np.matmul(self.w.reshape(self.c_out, ck).T, go2, out=gcols2)
        gcols = self._gcols
        gxpt = self._gxpt
        gxpt[:] = 0.0
        for k in range(self.kernel):
            gxpt[:, :, k : k + length] += gcols[:, k]
        return np.ascontiguousarray(gxpt[:, :, pad : pad + length].transpose(1, 0, 2))


class BatchNorm1d(Layer):
    """Per-channel normalization over (batch, length) with running stats.

    The forward pass applies the folded scale/shift form
    out = x * (gamma/std) + (beta - mean*gamma/std); backward recomputes
    what it needs from the saved input, so neither pass materializes the
    normalized tensor.
    """

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.9,
                 dtype=np.float64):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.dtype = np.dtype(dtype)
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self._ggamma = np.zeros(channels, dtype=dtype)
        self._gbeta = np.zeros(channels, dtype=dtype)
        self._x = None
        self._mean = None
        self._inv_std = None
        self._scale = None

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def grads(self):
        return {"gamma": self._ggamma, "beta": self._gbeta}

    def state(self) -> dict[str, np.ndarray]:
        """Non-trainable arrays that still belong in a saved model."""
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x, train):
        if x.ndim != 3 or x.shape[1] != self.channels:
            raise ShapeError(f"expected [B, {self.channels}, L], got {x.shape}")
        if train:
            n = x.shape[0] * x.shape[2]
            if n < 2:
                raise BatchTooSmall("batch statistics need at least 2 values per channel")
            mean = x.mean(axis=(0, 2))
            second = np.einsum("bcl,bcl->c", x, x) / n
            var = np.maximum(second - mean * mean, 0.0)
            m = self.momentum
            self.running_mean[:] = m * self.running_mean + (1 - m) * mean
            self.running_var[:] = m * self.running_var + (1 - m) * var
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        scale = self.gamma * inv_std
        shift = self.beta - mean * scale
        out = x * scale[None, :, None]
        out += shift[None, :, None]
        if train:
            self._x = x
            self._mean = mean
            self._inv_std = inv_std
            self._scale = scale
        return out

    def backward(self, grad_out):
        x = self._x
        mean = self._mean
        inv_std = self._inv_std
        scale = self._scale
        n = grad_out.shape[0] * grad_out.shape[2]
        dbeta = grad_out.sum(axis=(0, 2))
        go_dot_x = np.einsum("bcl,bcl->c", grad_out, x)
        dgamma = inv_std * (go_dot_x - mean * dbeta)
        self._gbeta[:] = dbeta
        self._ggamma[:] = dgamma
        # dx = scale * (go - dbeta/n - xhat * dgamma/n) expanded so the
        # normalized tensor never materializes:
        c2 = scale * dgamma * inv_std / n
        c3 = scale * dbeta / n - c2 * mean
        dx = grad_out * scale[None, :, None]
        dx -= x * c2[None, :, None]
        dx -= c3[None, :, None]
        return dx


class MaxPool1d(Layer):
    """Non-overlapping windowed maximum; gradient routes to the first argmax."""

    def __init__(self, size: int = 2, stride: int = 2):
        if size != stride:
            raise ShapeError("only non-overlapping pooling (size == stride) is supported")
        self.size = size
        self._second_wins = None
        self._argmax = None
        self._in_len = 0

    def forward(self, x, train):
        if x.ndim != 3:
            raise ShapeError(f"expected [B, C, L], got {x.shape}")
        length = x.shape[2]
        if length < self.size:
            raise ShapeError(f"length {length} shorter than pool size {self.size}")
        out_len = length // self.size
        windows = x[:, :, : out_len * self.size].reshape(
            x.shape[0], x.shape[1], out_len, self.size
        )
        if self.size == 2:
            first, second = windows[..., 0], windows[..., 1]
            second_wins = second > first  # ties go to the first element
            out = np.where(second_wins, second, first)
            if train:
                self._second_wins = second_wins
                self._argmax = None
                self._in_len = length
            return out
        argmax = windows.argmax(axis=3)
        if train:
            self._argmax = argmax
            self._second_wins = None
            self._in_len = length
        return np.take_along_axis(windows, argmax[..., None], axis=3)[..., 0]

    def backward(self, grad_out):
        b, c, out_len = grad_out.shape
        gx = np.zeros((b, c, self._in_len), dtype=grad_out.dtype)
        view = gx[:, :, : out_len * self.size].reshape(b, c, out_len, self.size)
        if self._second_wins is not None:
            second_wins = self._second_wins
            np.multiply(grad_out, ~second_wins, out=view[..., 0])
            np.multiply(grad_out, second_wins, out=view[..., 1])
        else:
            np.put_along_axis(view, self._argmax[..., None], grad_out[..., None], axis=3)
        return gx


class Dense(Layer):
    def __init__(self, d_in: int, d_out: int, rng: Rng, dtype=np.float64):
        self.d_in = d_in
        self.d_out = d_out
        self.w = he_uniform((d_in, d_out), d_in, rng, dtype)
        self.b = np.zeros(d_out, dtype=dtype)
        self._gw = np.zeros_like(self.w)
        self._gb = np.zeros_like(self.b)
        self._x = None

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return {"w": self._gw, "b": self._gb}

    def decay_keys(self):
        return {"w"}

    def forward(self, x, train):
        if x.ndim != 2 or x.shape[1] != self.d_in:
            raise ShapeError(f"expected [B, {self.d_in}], got {x.shape}")
        if train:
            self._x = x
        return x @ self.w + self.b

    def backward(self, grad_out):
        np.matmul(self._x.T, grad_out, out=self._gw)
        self._gb[:] = grad_out.sum(axis=0)
        return grad_out @ self.w.T


class ReLU(Layer):
    def __init__(self):
        self._mask = None

    def forward(self, x, train):
        if train:
            self._mask = x > 0
        return np.maximum(x, 0.0)

    def backward(self, grad_out):
        return grad_out * self._mask


class Dropout(Layer):
    """Inverted dropout: survivors scaled by 1/(1-rate); identity at inference."""

    def __init__(self, rate: float, rng: Rng):
        if not 0.0 <= rate < 1.0:
            raise InvalidRate(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng
        self._mask = None

    def forward(self, x, train):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.rate
        mask = (self.rng.gen.random(x.shape) >= self.rate).astype(x.dtype)
        mask /= keep
        self._mask = mask
        return x * mask

    def backward(self, grad_out):
        if self._mask is None:
            return grad_out
        return grad_out * self._mask


class Flatten(Layer):
    def __init__(self):
        self._shape = None

    def forward(self, x, train):
        if train:
            self._shape = x.shape
        return np.ascontiguousarray(x).reshape(x.shape[0], -1)

    def backward(self, grad_out):
        return grad_out.reshape(self._shape)


def softmax_xent(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Stabilized softmax + mean cross-entropy.

    Returns (loss, probs); the logits gradient is (probs - onehot) / B,
    available from xent_grad.
    """
    if logits.ndim != 2:
        raise ShapeError(f"expected [B, C] logits, got {logits.shape}")
    targets = np.asarray(targets, dtype=np.int64)
    if len(targets) != len(logits):
        raise ShapeError("targets and logits batch size mismatch")
    if len(targets) and (targets.min() < 0 or targets.max() >= logits.shape[1]):
        raise ShapeError("target index out of range")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    picked = shifted[np.arange(len(targets)), targets]
    loss = float(np.mean(np.log(exp.sum(axis=1)) - picked))
    return loss, probs


def xent_grad(probs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    grad = probs.copy()
    grad[np.arange(len(targets)), targets] -= 1.0
    return grad / len(targets)
