"""Central finite-difference gradient checking for layers.

The loss is a fixed random projection of the layer output, so every
parameter and input element receives signal. Relative error uses an
elementwise denominator floored at 1e-3; with O(1) activations the
finite-difference noise floor sits far below the 1e-4 acceptance bound.
"""

from __future__ import annotations

import numpy as np

EPS = 1e-5
FLOOR = 1e-3


def numeric_gradient(loss_fn, arr: np.ndarray, eps: float = EPS) -> np.ndarray:
    """Central differences of a scalar function, perturbing arr in place."""
    grad = np.zeros_like(arr)
    flat = arr.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = loss_fn()
        flat[i] = orig - eps
        f_minus = loss_fn()
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2 * eps)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = FLOOR) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float((np.abs(analytic - numeric) / denom).max())


def check_layer(layer, x: np.ndarray, seed: int, check_input: bool = True) -> dict[str, float]:
    """Max relative FD error for the input and every parameter of a layer."""
    out = layer.forward(x, True)
    projection = np.random.default_rng(seed).normal(size=out.shape)

    def loss() -> float:
        return float((layer.forward(x, True) * projection).sum())

    grad_x = layer.backward(projection)
    analytic = {name: g.copy() for name, g in layer.grads().items()}
    errors: dict[str, float] = {}
    if check_input:
        errors["input"] = max_relative_error(grad_x, numeric_gradient(loss, x))
    for name, param in layer.params().items():
        errors[name] = max_relative_error(analytic[name], numeric_gradient(loss, param))
    return errors


def separate_pool_ties(x: np.ndarray, size: int = 2, min_gap: float = 1e-3) -> np.ndarray:
    """Nudge pooling windows so no two members are within min_gap (keeps the
    finite-difference step from crossing an argmax boundary)."""
    x = x.copy()
    length = x.shape[-1] - x.shape[-1] % size
    windows = x[..., :length].reshape(*x.shape[:-1], -1, size)
    order = np.argsort(windows, axis=-1)
    ranks = np.argsort(order, axis=-1)
    windows += ranks * 2 * min_gap
    return x
