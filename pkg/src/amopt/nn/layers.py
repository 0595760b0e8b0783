"""Layer parameter containers and their forward/backward passes.

Everything is batch-first: activations are ``(batch, width)`` and sequences
``(batch, T, width)``.  Cell forwards also accept single 1-D vectors.
Weight matrices follow the ``out x in`` convention, so a layer computes
``a @ W.T + b``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import ClassVar

import numpy as np

from ..errors import ShapeError
from ..numerics import relu, sigmoid, softmax_rows


class _Params:
    """Mixin giving dataclass layers uniform access to their arrays."""

    kind: ClassVar[str]
    names: ClassVar[tuple[str, ...]]

    def items(self):
        for n in self.names:
            yield n, getattr(self, n)

    def zeros_like(self):
        return self._replace({n: np.zeros_like(a) for n, a in self.items()})

    def copy(self):
        return self._replace({n: a.copy() for n, a in self.items()})

    def _replace(self, arrays):
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(arrays)
        return type(self)(**kw)

    @property
    def size(self) -> int:
        return sum(a.size for _, a in self.items())


@dataclass
class DenseLayer(_Params):
    kind: ClassVar[str] = "dense"
    names: ClassVar[tuple[str, ...]] = ("W", "b")
    W: np.ndarray
    b: np.ndarray
    activation: str = "identity"


@dataclass
class LstmLayer(_Params):
    kind: ClassVar[str] = "lstm"
    names: ClassVar[tuple[str, ...]] = ("W_f", "W_i", "W_C", "W_o", "b_f", "b_i", "b_C", "b_o")
    W_f: np.ndarray
    W_i: np.ndarray
    W_C: np.ndarray
    W_o: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_C: np.ndarray
    b_o: np.ndarray

    @property
    def hidden(self) -> int:
        return self.W_f.shape[0]


@dataclass
class GruLayer(_Params):
    kind: ClassVar[str] = "gru"
    names: ClassVar[tuple[str, ...]] = ("W_z", "W_r", "W_h")
    W_z: np.ndarray
    W_r: np.ndarray
    W_h: np.ndarray

    @property
    def hidden(self) -> int:
        return self.W_z.shape[0]


@dataclass
class SelfAttentionLayer(_Params):
    kind: ClassVar[str] = "attention"
    names: ClassVar[tuple[str, ...]] = ("W_q", "W_k", "W_v")
    W_q: np.ndarray
    W_k: np.ndarray
    W_v: np.ndarray

    @property
    def d_k(self) -> int:
        return self.W_k.shape[0]


LAYER_TYPES = {cls.kind: cls for cls in (DenseLayer, LstmLayer, GruLayer, SelfAttentionLayer)}


def _check_width(W, x, what):
    if x.shape[-1] != W.shape[1]:
        raise ShapeError(f"{what}: input width {x.shape[-1]} does not match weight {W.shape[0]}x{W.shape[1]}")


# -- dense -------------------------------------------------------------------

def dense_forward(layer: DenseLayer, a_prev):
    return _dense(layer, np.asarray(a_prev, dtype=np.float64))[0]


def _dense(layer, a_prev):
    _check_width(layer.W, a_prev, "dense")
    z = a_prev @ layer.W.T + layer.b
    out = relu(z) if layer.activation == "relu" else z
    return out, (a_prev, z)


def _dense_backward(layer, dout, cache, grad: DenseLayer):
    a_prev, z = cache
    dz = dout * (z > 0) if layer.activation == "relu" else dout
    grad.W += dz.T @ a_prev
    grad.b += dz.sum(axis=0)
    return dz @ layer.W


# -- LSTM --------------------------------------------------------------------

def lstm_cell_forward(layer: LstmLayer, x_t, h_prev, C_prev):
    """One LSTM step; returns ``(h_t, C_t, cache)``."""
    x_t = np.asarray(x_t, dtype=np.float64)
    xh = np.concatenate([np.asarray(h_prev, dtype=np.float64), x_t], axis=-1)
    _check_width(layer.W_f, xh, "lstm [h_prev, x_t]")
    f = sigmoid(xh @ layer.W_f.T + layer.b_f)
    i = sigmoid(xh @ layer.W_i.T + layer.b_i)
    g = np.tanh(xh @ layer.W_C.T + layer.b_C)
    o = sigmoid(xh @ layer.W_o.T + layer.b_o)
    C = f * C_prev + i * g
    tc = np.tanh(C)
    h = o * tc
    return h, C, (xh, C_prev, f, i, g, o, tc)


def lstm_cell_backward(layer: LstmLayer, dh, dC, cache, grad: LstmLayer):
    """Backprop one step; accumulates into ``grad`` and returns ``(dx, dh_prev, dC_prev)``."""
    xh, C_prev, f, i, g, o, tc = cache
    H = layer.hidden
    dC = dC + dh * o * (1.0 - tc * tc)
    dzf = dC * C_prev * f * (1.0 - f)
    dzi = dC * g * i * (1.0 - i)
    dzg = dC * i * (1.0 - g * g)
    dzo = dh * tc * o * (1.0 - o)
    dxh = 0.0
    for dz, wn, bn in ((dzf, "W_f", "b_f"), (dzi, "W_i", "b_i"), (dzg, "W_C", "b_C"), (dzo, "W_o", "b_o")):
        getattr(grad, wn)[...] += dz.T @ xh
        getattr(grad, bn)[...] += dz.sum(axis=0)
        dxh = dxh + dz @ getattr(layer, wn)
    return dxh[:, H:], dxh[:, :H], dC * f


# -- GRU ---------------------------------------------------------------------

def gru_cell_forward(layer: GruLayer, x_t, h_prev):
    """One GRU step (no biases); returns ``(h_t, cache)``."""
    x_t = np.asarray(x_t, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    xh = np.concatenate([h_prev, x_t], axis=-1)
    _check_width(layer.W_z, xh, "gru [h_prev, x_t]")
    z = sigmoid(xh @ layer.W_z.T)
    r = sigmoid(xh @ layer.W_r.T)
    xr = np.concatenate([r * h_prev, x_t], axis=-1)
    ht = np.tanh(xr @ layer.W_h.T)
    h = (1.0 - z) * h_prev + z * ht
    return h, (xh, xr, h_prev, z, r, ht)


def gru_cell_backward(layer: GruLayer, dh, cache, grad: GruLayer):
    """Backprop one step; accumulates into ``grad`` and returns ``(dx, dh_prev)``."""
    xh, xr, h_prev, z, r, ht = cache
    H = layer.hidden
    dzh = dh * z * (1.0 - ht * ht)
    grad.W_h += dzh.T @ xr
    dxr = dzh @ layer.W_h
    drh = dxr[:, :H]
    dzz = dh * (ht - h_prev) * z * (1.0 - z)
    dzr = drh * h_prev * r * (1.0 - r)
    grad.W_z += dzz.T @ xh
    grad.W_r += dzr.T @ xh
    dxh = dzz @ layer.W_z + dzr @ layer.W_r
    dh_prev = dh * (1.0 - z) + drh * r + dxh[:, :H]
    dx = dxr[:, H:] + dxh[:, H:]
    return dx, dh_prev


# -- self-attention ----------------------------------------------------------

def self_attention_forward(layer: SelfAttentionLayer, F):
    """Scaled dot-product self-attention over the T axis of ``F``.

    ``F`` is ``(T, d_h)`` or batched ``(batch, T, d_h)``.  Returns the output
    ``O`` and the attention weights (rows sum to one).
    """
    O, weights, _ = _attention(layer, np.asarray(F, dtype=np.float64))
    return O, weights


def _attention(layer, F):
    _check_width(layer.W_q, F, "attention")
    Q = F @ layer.W_q.T
    K = F @ layer.W_k.T
    V = F @ layer.W_v.T
    scale = 1.0 / math.sqrt(layer.d_k)
    S = (Q @ np.swapaxes(K, -1, -2)) * scale
    A = softmax_rows(S)
    O = A @ V
    return O, A, (F, Q, K, V, A, scale)


def _attention_backward(layer, dO, cache, grad: SelfAttentionLayer):
    F, Q, K, V, A, scale = cache
    dA = dO @ np.swapaxes(V, -1, -2)
    dV = np.swapaxes(A, -1, -2) @ dO
    dS = A * (dA - np.sum(dA * A, axis=-1, keepdims=True)) * scale
    dQ = dS @ K
    dK = np.swapaxes(dS, -1, -2) @ Q
    F2 = F.reshape(-1, F.shape[-1])
    grad.W_q += dQ.reshape(-1, dQ.shape[-1]).T @ F2
    grad.W_k += dK.reshape(-1, dK.shape[-1]).T @ F2
    grad.W_v += dV.reshape(-1, dV.shape[-1]).T @ F2
    return dQ @ layer.W_q + dK @ layer.W_k + dV @ layer.W_v
