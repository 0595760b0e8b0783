"""Shapley-value attribution: exact coalition enumeration, permutation
sampling, and a marginal-masking value function for trained models."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ParameterError, ShapeError

EXACT_LIMIT = 15
# composite rows evaluated per model call
_CHUNK_ROWS = 200_000


def _popcount(masks: np.ndarray, n: int) -> np.ndarray:
    counts = np.zeros(masks.shape, dtype=np.int64)
    for b in range(n):
        counts += (masks >> b) & 1
    return counts


@dataclass
class CoalitionGame:
    """A cooperative game on ``n_features`` players.

    Coalitions are passed around as integer bitmasks (bit i set = player i
    present).  Supply either ``value`` (called with a frozenset of player
    indices) or the faster vectorised ``batch_value`` (called with an int
    array of bitmasks).
    """

    n_features: int
    value: Callable[[frozenset], float] | None = None
    batch_value: Callable[[np.ndarray], np.ndarray] | None = None

    def values(self, masks) -> np.ndarray:
        masks = np.asarray(masks, dtype=np.int64)
        if self.batch_value is not None:
            return np.asarray(self.batch_value(masks), dtype=np.float64)
        n = self.n_features
        return np.array([self.value(frozenset(i for i in range(n) if (m >> i) & 1)) for m in masks.tolist()],
                        dtype=np.float64)


def exact_shapley(game: CoalitionGame, exact_limit: int = EXACT_LIMIT) -> np.ndarray:
    """Shapley values by full subset enumeration with every v(S) evaluated once."""
    n = game.n_features
    if n > exact_limit:
        raise ParameterError(f"n_features={n} exceeds exact_limit={exact_limit}; use sampled mode instead")
    masks = np.arange(1 << n, dtype=np.int64)
    v = game.values(masks)
    sizes = _popcount(masks, n)
    weight = np.array([math.factorial(s) * math.factorial(n - s - 1) / math.factorial(n) for s in range(n)])
    phi = np.empty(n)
    for i in range(n):
        without = masks[((masks >> i) & 1) == 0]
        phi[i] = np.sum(weight[sizes[without]] * (v[without | (1 << i)] - v[without]))
    return phi


def sampled_shapley(game: CoalitionGame, n_permutations: int = 2000, seed: int = 0):
    """Monte Carlo Shapley estimate from random player orderings.

    Returns ``(phi_hat, stderr)``.  Each coalition reached by some sampled
    prefix is evaluated once.
    """
    if n_permutations < 1:
        raise ParameterError("n_permutations must be >= 1")
    n = game.n_features
    rng = np.random.default_rng(seed)
    perms = rng.permuted(np.tile(np.arange(n), (n_permutations, 1)), axis=1)
    prefix = np.zeros((n_permutations, n + 1), dtype=np.int64)
    prefix[:, 1:] = np.cumsum(np.left_shift(1, perms), axis=1)
    uniq, inverse = np.unique(prefix, return_inverse=True)
    v = game.values(uniq)[inverse.reshape(prefix.shape)]
    marg = np.empty((n_permutations, n))
    np.put_along_axis(marg, perms, np.diff(v, axis=1), axis=1)
    phi = marg.mean(axis=0)
    if n_permutations > 1:
        stderr = marg.std(axis=0, ddof=1) / math.sqrt(n_permutations)
    else:
        stderr = np.full(n, np.inf)
    return phi, stderr


class ModelValueFunction:
    """v(S): mean prediction over background rows with features in S taken from ``x``."""

    def __init__(self, predict: Callable[[np.ndarray], np.ndarray], x, background):
        self.predict = predict
        self.x = np.asarray(x, dtype=np.float64).ravel()
        self.background = np.asarray(background, dtype=np.float64)
        if self.background.ndim != 2 or self.background.shape[0] == 0:
            raise ShapeError("background must be a non-empty 2-D array")
        if self.background.shape[1] != self.x.size:
            raise ShapeError(f"instance width {self.x.size} != background width {self.background.shape[1]}")

    @property
    def n_features(self) -> int:
        return self.x.size

    def __call__(self, masks: np.ndarray) -> np.ndarray:
        masks = np.asarray(masks, dtype=np.int64)
        n, nb = self.n_features, self.background.shape[0]
        bits = ((masks[:, None] >> np.arange(n)) & 1).astype(bool)
        out = np.empty(masks.size)
        step = max(1, _CHUNK_ROWS // nb)
        for s in range(0, masks.size, step):
            sel = bits[s:s + step]
            comp = np.where(sel[:, None, :], self.x, self.background[None, :, :])
            out[s:s + step] = self.predict(comp.reshape(-1, n)).reshape(sel.shape[0], nb).mean(axis=1)
        return out

    def game(self) -> CoalitionGame:
        return CoalitionGame(self.n_features, batch_value=self)


@dataclass
class ShapleyReport:
    phi: np.ndarray            # (instances, features), target units
    stderr: np.ndarray | None  # same shape, sampled mode only
    base_values: np.ndarray    # v(empty) per instance, target units
    predictions: np.ndarray    # model output per instance, target units
    feature_names: list[str]
    mode: str

    @property
    def mean_abs_phi(self) -> np.ndarray:
        return np.abs(self.phi).mean(axis=0)

    @property
    def ranking(self) -> np.ndarray:
        """Feature indices by descending mean |phi|; ties go to the lower index."""
        m = self.mean_abs_phi
        return np.lexsort((np.arange(m.size), -m))

    def to_dict(self, bucket: str | None = None, per_instance: bool = False) -> dict:
        m = self.mean_abs_phi
        rank = np.empty(m.size, dtype=int)
        rank[self.ranking] = np.arange(1, m.size + 1)
        out = {
            "bucket": bucket,
            "mode": self.mode,
            "n_instances": int(self.phi.shape[0]),
            "base_value_mean": float(self.base_values.mean()),
            "features": [{"name": name, "mean_abs_phi": float(m[i]), "rank": int(rank[i])}
                         for i, name in enumerate(self.feature_names)],
        }
        if per_instance:
            out["per_instance"] = self.phi.tolist()
        return out

    def write_json(self, path, bucket=None, per_instance=False) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(bucket, per_instance), fh, indent=2)
            fh.write("\n")

    def write_ranking_csv(self, path) -> None:
        m = self.mean_abs_phi
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "feature", "mean_abs_phi"])
            for r, i in enumerate(self.ranking, start=1):
                w.writerow([r, self.feature_names[i], repr(float(m[i]))])


def explain_instances(predict, instances, background, mode: str = "auto", seed: int = 0,
                      n_permutations: int = 2000, exact_limit: int = EXACT_LIMIT,
                      target_scale: float = 1.0, target_offset: float = 0.0,
                      feature_names=None) -> ShapleyReport:
    """Attribute ``predict``'s output on each instance to its features.

    ``predict`` maps a 2-D array of rows to a 1-D array of outputs.  Outputs
    are mapped to reporting units as ``out * target_scale + target_offset``
    (phi values only pick up the scale).  ``mode`` is ``exact``,
    ``sampled`` or ``auto`` (exact up to ``exact_limit`` features).
    """
    instances = np.asarray(instances, dtype=np.float64)
    if instances.ndim == 1:
        instances = instances.reshape(1, -1)
    background = np.asarray(background, dtype=np.float64)
    if background.ndim != 2 or background.shape[0] == 0:
        raise ShapeError("background set is empty")
    n = instances.shape[1]
    if background.shape[1] != n:
        raise ShapeError(f"instance width {n} != background width {background.shape[1]}")
    if mode == "auto":
        mode = "exact" if n <= exact_limit else "sampled"
    if mode not in ("exact", "sampled"):
        raise ParameterError(f"mode must be 'exact', 'sampled' or 'auto', got {mode!r}")
    if mode == "exact" and n > exact_limit:
        raise ParameterError(f"n_features={n} exceeds exact_limit={exact_limit}; use sampled mode instead")

    phis, errs, bases, preds = [], [], [], []
    full = (1 << n) - 1
    for k, x in enumerate(instances):
        vf = ModelValueFunction(predict, x, background)
        game = vf.game()
        if mode == "exact":
            phis.append(exact_shapley(game, exact_limit))
        else:
            phi, se = sampled_shapley(game, n_permutations, seed=np.random.SeedSequence([seed, k]))
            phis.append(phi)
            errs.append(se)
        ends = vf(np.array([0, full]))
        bases.append(ends[0])
        preds.append(ends[1])
    names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(n)]
    return ShapleyReport(
        np.array(phis) * target_scale,
        np.array(errs) * abs(target_scale) if errs else None,
        np.array(bases) * target_scale + target_offset,
        np.array(preds) * target_scale + target_offset,
        names, mode)
