"""Network architectures (MLP, LSTM, self-attention LSTM/GRU), forward pass,
MSE loss and exact backpropagation through time."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import DataError, NumericError, ParameterError, ShapeError
from .layers import (
    DenseLayer,
    GruLayer,
    LstmLayer,
    SelfAttentionLayer,
    _attention,
    _attention_backward,
    _dense,
    _dense_backward,
    gru_cell_backward,
    gru_cell_forward,
    lstm_cell_backward,
    lstm_cell_forward,
)

ARCHITECTURES = ("mlp", "lstm", "sa_lstm", "sa_gru")


@dataclass(frozen=True)
class NetworkConfig:
    architecture: str
    input_width: int
    timesteps: int = 1
    hidden_width: int = 64
    depth: int | None = None
    seed: int = 0
    d_k: int | None = None
    pooling: str = "last"
    init: str = "glorot"

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ParameterError(f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}")
        if self.depth is None:
            object.__setattr__(self, "depth", 2 if self.architecture == "mlp" else 6)
        if self.d_k is None:
            object.__setattr__(self, "d_k", self.hidden_width)
        if self.input_width < 1 or self.hidden_width < 1 or self.depth < 1 or self.d_k < 1:
            raise ParameterError("input_width, hidden_width, depth and d_k must all be >= 1")
        if self.architecture == "mlp" and self.timesteps != 1:
            raise ParameterError("mlp requires timesteps == 1")
        if self.timesteps < 1 or self.input_width % self.timesteps:
            raise ParameterError(
                f"input_width {self.input_width} is not divisible by timesteps {self.timesteps}")
        if self.pooling not in ("last", "mean"):
            raise ParameterError(f"pooling must be 'last' or 'mean', got {self.pooling!r}")
        if self.init not in ("glorot", "zeros"):
            raise ParameterError(f"init must be 'glorot' or 'zeros', got {self.init!r}")

    @property
    def step_width(self) -> int:
        return self.input_width // self.timesteps

    @property
    def recurrent(self) -> bool:
        return self.architecture != "mlp"

    @property
    def attention(self) -> bool:
        return self.architecture.startswith("sa_")

    @property
    def cell(self) -> str | None:
        return {"mlp": None, "lstm": "lstm", "sa_lstm": "lstm", "sa_gru": "gru"}[self.architecture]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ModelParameters:
    config: NetworkConfig
    layers: list = field(default_factory=list)
    output: DenseLayer | None = None

    @property
    def blocks(self) -> list:
        return [*self.layers, self.output]

    def items(self):
        """Yield ``((block_index, name), array)`` over every parameter array."""
        for k, block in enumerate(self.blocks):
            for name, arr in block.items():
                yield (k, name), arr

    def zeros_like(self) -> "ModelParameters":
        return ModelParameters(self.config, [b.zeros_like() for b in self.layers], self.output.zeros_like())

    def copy(self) -> "ModelParameters":
        return ModelParameters(self.config, [b.copy() for b in self.layers], self.output.copy())

    @property
    def size(self) -> int:
        return sum(b.size for b in self.blocks)


def init_model(config: NetworkConfig, seed: int | None = None) -> ModelParameters:
    """Glorot-uniform weights and zero biases, drawn from a seeded generator."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    zeros = config.init == "zeros"

    def w(out, inp):
        if zeros:
            return np.zeros((out, inp))
        lim = math.sqrt(6.0 / (inp + out))
        return rng.uniform(-lim, lim, size=(out, inp))

    H = config.hidden_width
    layers = []
    if not config.recurrent:
        width = config.input_width
        for _ in range(config.depth):
            layers.append(DenseLayer(w(H, width), np.zeros(H), "relu"))
            width = H
    else:
        width = config.step_width
        for _ in range(config.depth):
            if config.cell == "lstm":
                layers.append(LstmLayer(*(w(H, H + width) for _ in range(4)), *(np.zeros(H) for _ in range(4))))
            else:
                layers.append(GruLayer(*(w(H, H + width) for _ in range(3))))
            width = H
        if config.attention:
            layers.append(SelfAttentionLayer(*(w(config.d_k, H) for _ in range(3))))
            width = config.d_k
    return ModelParameters(config, layers, DenseLayer(w(1, width), np.zeros(1), "identity"))


def to_sequence(batch: np.ndarray, config: NetworkConfig) -> np.ndarray:
    """Reshape flat rows into ``(batch, T, step_width)`` ordered oldest to latest.

    Flat feature rows store the latest timestep first, so the time axis is
    reversed here.
    """
    B = batch.shape[0]
    return np.ascontiguousarray(batch.reshape(B, config.timesteps, config.step_width)[:, ::-1, :])


def _finite(a, k, block):
    if not np.all(np.isfinite(a)):
        raise NumericError(f"non-finite activations in layer {k} ({block.kind})")


def _check_batch(model, batch):
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 1:
        batch = batch.reshape(1, -1)
    if batch.ndim != 2 or batch.shape[1] != model.config.input_width:
        raise ShapeError(f"batch shape {batch.shape} does not match input width {model.config.input_width}")
    return batch


def _run_recurrent(layer, seq):
    B, T, _ = seq.shape
    H = layer.hidden
    h = np.zeros((B, H))
    C = np.zeros((B, H))
    outs = np.empty((B, T, H))
    caches = []
    for t in range(T):
        if isinstance(layer, LstmLayer):
            h, C, c = lstm_cell_forward(layer, seq[:, t], h, C)
        else:
            h, c = gru_cell_forward(layer, seq[:, t], h)
        outs[:, t] = h
        caches.append(c)
    return outs, caches


def _backprop_recurrent(layer, douts, caches, grad, in_width):
    B, T, H = douts.shape
    dseq = np.empty((B, T, in_width))
    dh = np.zeros((B, H))
    dC = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        dh = dh + douts[:, t]
        if isinstance(layer, LstmLayer):
            dx, dh, dC = lstm_cell_backward(layer, dh, dC, caches[t], grad)
        else:
            dx, dh = gru_cell_backward(layer, dh, caches[t], grad)
        dseq[:, t] = dx
    return dseq


def _forward(model: ModelParameters, batch: np.ndarray):
    cfg = model.config
    caches = []
    if not cfg.recurrent:
        a = batch
        for k, layer in enumerate(model.layers):
            a, c = _dense(layer, a)
            _finite(a, k, layer)
            caches.append(c)
        rep = a
    else:
        seq = to_sequence(batch, cfg)
        for k, layer in enumerate(model.layers):
            if isinstance(layer, SelfAttentionLayer):
                seq, _, c = _attention(layer, seq)
            else:
                seq, c = _run_recurrent(layer, seq)
            _finite(seq, k, layer)
            caches.append(c)
        rep = seq[:, -1] if cfg.pooling == "last" else seq.mean(axis=1)
        caches.append(seq.shape)
    out, c = _dense(model.output, rep)
    _finite(out, len(model.layers), model.output)
    caches.append(c)
    return out[:, 0], caches


def forward(model: ModelParameters, batch) -> np.ndarray:
    """Predictions, one per row of ``batch``."""
    return _forward(model, _check_batch(model, batch))[0]


def attention_weights(model: ModelParameters, batch) -> np.ndarray | None:
    """Attention weight matrices ``(batch, T, T)`` of the attention layer, if any."""
    if not model.config.attention:
        return None
    batch = _check_batch(model, batch)
    seq = to_sequence(batch, model.config)
    for layer in model.layers:
        if isinstance(layer, SelfAttentionLayer):
            return _attention(layer, seq)[1]
        seq, _ = _run_recurrent(layer, seq)
    return None


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.shape != target.shape:
        raise ShapeError(f"prediction length {pred.size} != target length {target.size}")
    if pred.size == 0:
        raise DataError("mse_loss of an empty batch")
    diff = pred - target
    return float(np.mean(diff * diff)), (2.0 / diff.size) * diff


def loss_and_gradients(model: ModelParameters, batch, targets) -> tuple[float, ModelParameters]:
    batch = _check_batch(model, batch)
    cfg = model.config
    pred, caches = _forward(model, batch)
    loss, dpred = mse_loss(pred, targets)
    grads = model.zeros_like()

    drep = _dense_backward(model.output, dpred[:, None], caches[-1], grads.output)
    if not cfg.recurrent:
        da = drep
        for k in range(len(model.layers) - 1, -1, -1):
            da = _dense_backward(model.layers[k], da, caches[k], grads.layers[k])
        return loss, grads

    B, T, W = caches[-2]
    dseq = np.zeros((B, T, W))
    if cfg.pooling == "last":
        dseq[:, -1] = drep
    else:
        dseq += drep[:, None, :] / T
    for k in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[k]
        if isinstance(layer, SelfAttentionLayer):
            dseq = _attention_backward(layer, dseq, caches[k], grads.layers[k])
        else:
            in_width = cfg.step_width if k == 0 else model.layers[k - 1].hidden
            dseq = _backprop_recurrent(layer, dseq, caches[k], grads.layers[k], in_width)
    return loss, grads


def backward(model: ModelParameters, batch, targets) -> ModelParameters:
    """Exact gradients of the mean squared error with respect to every parameter."""
    return loss_and_gradients(model, batch, targets)[1]
