"""Cox-Ross-Rubinstein binomial lattice pricer for American and European options.

The roll-back itself runs in a compiled kernel (``amopt._lattice``) when it
is importable and falls back to a numpy implementation otherwise.  Set
``AMOPT_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import _lattice_py
from .errors import ParameterError

try:
    if os.environ.get("AMOPT_PURE_PYTHON"):
        raise ImportError("pure python backend forced")
    from . import _lattice as _kernel
    BACKEND = "cython"
except ImportError:
    _kernel = _lattice_py
    BACKEND = "python"

TRADING_DAYS = 252
DT = 1.0 / TRADING_DAYS

Kind = Literal["call", "put"]
Style = Literal["american", "european"]


def kernels() -> dict:
    """Available roll-back backends, keyed by name (used by tests and benchmarks)."""
    out = {"python": _lattice_py}
    if _kernel is not _lattice_py:
        out["cython"] = _kernel
    else:
        try:
            from . import _lattice
            out["cython"] = _lattice
        except ImportError:
            pass
    return out


def up_down_factors(sigma: float, dt: float) -> tuple[float, float]:
    if not sigma > 0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    if not dt > 0:
        raise ParameterError(f"dt must be > 0, got {dt}")
    u = math.exp(sigma * math.sqrt(dt))
    return u, 1.0 / u


def risk_neutral_prob(u: float, d: float, rate: float, dt: float) -> float:
    growth = math.exp(rate * dt)
    if not d > 0:
        raise ParameterError(f"no-arbitrage condition d > 0 violated (d={d})")
    if not u > growth:
        raise ParameterError(f"no-arbitrage condition u > e^(r*dt) violated (u={u:.10g}, e^(r*dt)={growth:.10g})")
    if not growth > d:
        raise ParameterError(f"no-arbitrage condition e^(r*dt) > d violated (e^(r*dt)={growth:.10g}, d={d:.10g})")
    return (growth - d) / (u - d)


@dataclass(frozen=True)
class TreeParams:
    spot: float
    strike: float
    rate: float
    sigma: float
    steps: int
    dt: float = DT
    kind: Kind = "call"
    style: Style = "american"

    def __post_init__(self):
        if not self.spot > 0:
            raise ParameterError(f"spot must be > 0, got {self.spot}")
        # strike 0 is allowed: the call is then worth the underlying itself
        if not self.strike >= 0:
            raise ParameterError(f"strike must be >= 0, got {self.strike}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ParameterError(f"steps must be an integer >= 1, got {self.steps}")
        if self.kind not in ("call", "put"):
            raise ParameterError(f"kind must be 'call' or 'put', got {self.kind!r}")
        if self.style not in ("american", "european"):
            raise ParameterError(f"style must be 'american' or 'european', got {self.style!r}")
        u, d = up_down_factors(self.sigma, self.dt)
        risk_neutral_prob(u, d, self.rate, self.dt)

    @classmethod
    def from_days(cls, spot, strike, rate, sigma, days, *, kind="call", style="american", steps=None):
        """Parameters for an option ``days`` to maturity with dt fixed at 1/252.

        ``steps`` defaults to ``days``; overriding it rescales dt so that
        steps * dt still equals days / 252.
        """
        days = int(days)
        if days < 1:
            raise ParameterError(f"days to maturity must be >= 1, got {days}")
        n = days if steps is None else int(steps)
        return cls(spot, strike, rate, sigma, n, days / TRADING_DAYS / n, kind, style)

    @property
    def factors(self) -> tuple[float, float]:
        return up_down_factors(self.sigma, self.dt)

    @property
    def prob(self) -> float:
        u, d = self.factors
        return risk_neutral_prob(u, d, self.rate, self.dt)

    @property
    def maturity(self) -> float:
        return self.steps * self.dt


@dataclass
class PriceTree:
    """Lattice values; ``levels[t][i]`` is the node after t steps with i down moves."""

    levels: list[np.ndarray]

    def __len__(self):
        return len(self.levels)

    @property
    def root(self) -> float:
        return float(self.levels[0][0])


def underlying_tree(params: TreeParams) -> PriceTree:
    u, d = params.factors
    return PriceTree([
        params.spot * u ** (t - np.arange(t + 1)) * d ** np.arange(t + 1)
        for t in range(params.steps + 1)
    ])


def _payoff(s, params):
    if params.kind == "call":
        return np.maximum(s - params.strike, 0.0)
    return np.maximum(params.strike - s, 0.0)


def _full_option_tree(params: TreeParams) -> PriceTree:
    u, _ = params.factors
    p = params.prob
    disc = math.exp(-params.rate * params.dt)
    under = underlying_tree(params)
    levels = [None] * (params.steps + 1)
    levels[-1] = _payoff(under.levels[-1], params)
    for t in range(params.steps - 1, -1, -1):
        nxt = levels[t + 1]
        cont = disc * (p * nxt[:-1] + (1.0 - p) * nxt[1:])
        if params.style == "american":
            cont = np.maximum(cont, _payoff(under.levels[t], params))
        levels[t] = cont
    return PriceTree(levels)


def price(params: TreeParams, keep_tree: bool = False) -> tuple[float, PriceTree | None]:
    """Price ``params`` by backward induction.

    Returns ``(root value, option tree)``; the tree is only materialised when
    ``keep_tree`` is set, otherwise the O(n) roll-back kernel is used and
    ``None`` is returned in its place.
    """
    if keep_tree:
        tree = _full_option_tree(params)
        return tree.root, tree
    u, _ = params.factors
    value = _kernel.rollback(
        float(params.spot), float(params.strike), u, params.prob,
        math.exp(-params.rate * params.dt), int(params.steps),
        params.kind == "call", params.style == "american",
    )
    return float(value), None


def price_many(spot, strike, rate, sigma, days, *, kind: Kind = "call",
               style: Style = "american", backend: str | None = None) -> np.ndarray:
    """Price a batch of options with n = days steps and dt = 1/252.

    All inputs broadcast to a common 1-D shape.  Raises ``ParameterError``
    naming the first offending row if any row violates the lattice
    preconditions.
    """
    spot, strike, rate, sigma, days = (np.atleast_1d(np.asarray(a, dtype=np.float64))
                                       for a in (spot, strike, rate, sigma, days))
    spot, strike, rate, sigma, days = np.broadcast_arrays(spot, strike, rate, sigma, days)
    steps = days.astype(np.int64)
    bad = np.flatnonzero(~((spot > 0) & (strike >= 0) & (sigma > 0) & (steps >= 1) & (steps == days)))
    if bad.size:
        j = bad[0]
        raise ParameterError(
            f"row {j}: invalid inputs spot={spot[j]}, strike={strike[j]}, sigma={sigma[j]}, days={days[j]}")
    u = np.exp(sigma * math.sqrt(DT))
    d = 1.0 / u
    growth = np.exp(rate * DT)
    bad = np.flatnonzero(~((u > growth) & (growth > d)))
    if bad.size:
        j = bad[0]
        raise ParameterError(f"row {j}: no-arbitrage condition u > e^(r*dt) > d violated")
    p = (growth - d) / (u - d)
    kern = _kernel if backend is None else kernels()[backend]
    return np.asarray(kern.rollback_many(
        np.ascontiguousarray(spot), np.ascontiguousarray(strike), np.ascontiguousarray(u),
        np.ascontiguousarray(p), np.ascontiguousarray(1.0 / growth), np.ascontiguousarray(steps),
        kind == "call", style == "american"), dtype=np.float64)
