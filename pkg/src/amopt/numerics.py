"""Dense double-precision matrix helpers used throughout the package.

A ``Matrix`` is simply a 2-D ``float64`` numpy array in C (row-major) order.
Sequences of length T are handled as lists of matrices or as 3-D arrays
internally, never through broadcasting tricks in the public surface.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import OracleError, ShapeError

Matrix = np.ndarray


def as_matrix(x) -> Matrix:
    """Coerce ``x`` to a 2-D float64 array (scalars become 1x1, vectors 1xN)."""
    a = np.array(x, dtype=np.float64, order="C")
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    elif a.ndim != 2:
        raise ShapeError(f"expected at most 2 dimensions, got shape {a.shape}")
    return a


def matmul(a, b) -> Matrix:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # exp of -|x| never overflows; pick the algebraically matching form by sign
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0, e) / (1.0 + e)


def tanh_act(x):
    return np.tanh(np.asarray(x, dtype=np.float64))


def relu(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def softmax_rows(x):
    """Softmax along the last axis, with the row max subtracted first."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def finite_difference_gradient(
    f: Callable[[np.ndarray], float], x, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``.

    ``x`` is perturbed in place on a private copy, one entry at a time, so
    ``f`` sees arrays of the same shape as ``x``.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise OracleError(f"non-finite function value at entry {i}")
        g[i] = (fp - fm) / (2.0 * h)
    return grad
