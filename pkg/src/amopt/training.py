"""Adam optimisation, minibatch training and validation-based early stopping."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, NumericError, ShapeError
from .nn.model import ModelParameters, NetworkConfig, forward, init_model, loss_and_gradients, mse_loss
from .nn.serialize import save_model

log = logging.getLogger(__name__)

EPOCH_BUDGET_NUMERATOR = 200_000_000


def _arrays(x) -> list[np.ndarray]:
    if isinstance(x, ModelParameters):
        return [a for _, a in x.items()]
    return [np.asarray(a) for a in x]


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    eta: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def create(cls, params, eta=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8) -> "AdamState":
        arrs = _arrays(params)
        return cls([np.zeros_like(a, dtype=np.float64) for a in arrs],
                   [np.zeros_like(a, dtype=np.float64) for a in arrs], 0, eta, beta1, beta2, epsilon)


def adam_step(state: AdamState, params, grads):
    """One bias-corrected Adam update, applied to ``params`` in place.

    ``params`` and ``grads`` are ModelParameters (or matching lists of
    arrays).  Returns ``(params, state)`` for convenience.
    """
    ps, gs = _arrays(params), _arrays(grads)
    if len(ps) != len(gs) or len(ps) != len(state.m):
        raise ShapeError("parameter, gradient and moment lists differ in length")
    for p, g in zip(ps, gs):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient passed to adam_step")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(ps, gs, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.eta * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params, state


def epoch_budget(train_count: int) -> int:
    """Epoch count for sequence runs: 200,000,000 // rows, at least one."""
    if train_count < 1:
        raise DataError("epoch budget needs at least one training row")
    return max(1, EPOCH_BUDGET_NUMERATOR // int(train_count))


@dataclass
class TrainConfig:
    learning_rate: float | None = None
    batch_size: int = 1024
    max_epochs: int | None = None
    patience: int = 2000
    min_delta: float = 1e-7
    seed: int = 0
    checkpoint_path: str | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.learning_rate is not None and not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")

    def resolved_lr(self, net: NetworkConfig) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        return 1e-4 if net.architecture == "mlp" else 1e-3

    def resolved_epochs(self, net: NetworkConfig, train_count: int) -> int:
        if self.max_epochs is not None:
            return self.max_epochs
        # the budget rule is for the sequence runs; 6-feature runs use a flat 2000
        if net.input_width in (18, 21):
            return epoch_budget(train_count)
        return 2000


class EarlyStopping:
    """Tracks the best validation loss and counts epochs without improvement."""

    def __init__(self, patience: int, min_delta: float = 1e-7):
        self.patience = patience
        self.min_delta = min_delta
        self.best = math.inf
        self.best_epoch = 0
        self.stale = 0

    def update(self, epoch: int, loss: float) -> bool:
        """Record ``loss`` for ``epoch``; True when it is a new best."""
        if loss < self.best - self.min_delta:
            self.best, self.best_epoch, self.stale = loss, epoch, 0
            return True
        self.stale += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.stale >= self.patience


@dataclass
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: float
    is_best: bool


@dataclass
class History:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = math.inf
    stopped_early: bool = False

    def __len__(self):
        return len(self.records)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_mse", "val_mse", "is_best"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.train_mse), repr(r.val_mse), int(r.is_best)])


def _split_xy(data):
    X, y = data
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ShapeError(f"features {X.shape} and targets {y.shape} do not align")
    if y.size == 0:
        raise DataError("empty split")
    return X, y


def train(config: TrainConfig, net_config: NetworkConfig, train_data, val_data,
          model: ModelParameters | None = None, progress=None):
    """Train with Adam and keep the parameters with the best validation MSE.

    ``train_data`` and ``val_data`` are ``(X, y)`` pairs.  Returns the best
    snapshot (never the last-epoch parameters) and the per-epoch history.
    ``progress``, if given, is called with each EpochRecord.
    """
    X, y = _split_xy(train_data)
    Xv, yv = _split_xy(val_data)
    if X.shape[1] != net_config.input_width or Xv.shape[1] != net_config.input_width:
        raise ShapeError(f"feature width does not match network input width {net_config.input_width}")
    model = init_model(net_config) if model is None else model.copy()
    state = AdamState.create(model, eta=config.resolved_lr(net_config))
    rng = np.random.default_rng(config.seed)
    stopper = EarlyStopping(config.patience, config.min_delta)
    history = History()
    best = model.copy()
    n = y.size
    bs = config.batch_size
    max_epochs = config.resolved_epochs(net_config, n)

    for epoch in range(1, max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, bs)):
            idx = order[start:start + bs]
            loss, grads = loss_and_gradients(model, X[idx], y[idx])
            if not math.isfinite(loss):
                raise NumericError(f"non-finite training loss at epoch {epoch}, batch {b}")
            adam_step(state, model, grads)
            total += loss * idx.size
        val = mse_loss(forward(model, Xv), yv)[0]
        if not math.isfinite(val):
            raise NumericError(f"non-finite validation loss at epoch {epoch}")
        improved = stopper.update(epoch, val)
        if improved:
            best = model.copy()
        rec = EpochRecord(epoch, total / n, val, improved)
        history.records.append(rec)
        if progress is not None:
            progress(rec)
        if stopper.should_stop:
            history.stopped_early = True
            break

    history.best_epoch, history.best_val = stopper.best_epoch, stopper.best
    log.info("trained %s: best val %.6g at epoch %d of %d", net_config.architecture,
             stopper.best, stopper.best_epoch, len(history))
    if config.checkpoint_path:
        save_model(best, config.checkpoint_path)
    return best, history
