"""Hermetic synthetic option market: GBM spot path, tree-priced call quotes
with a bid/ask spread, and flat-plus-noise rate and volatility tables."""
from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .binomial import DT, price_many
from .data import MATURITY_CLASSES, RATE_HEADER, VOL_HEADER, QUOTE_HEADER, RawQuote, classify_maturity
from .errors import ParameterError


def _default_strikes():
    return tuple(round(0.01 * k, 2) for k in range(-30, 31))


@dataclass
class SyntheticConfig:
    seed: int = 0
    trading_days: int = 250
    start_date: str = "2021-01-04"
    s0: float = 100.0
    drift: float = 0.05
    sigma: float = 0.2
    strike_grid: tuple = field(default_factory=_default_strikes)
    strike_step: float = 1.0
    expiry_grid: tuple = (3, 7, 14, 21, 28, 35, 45, 60, 75, 90, 120, 150, 180, 240, 300, 365)
    half_spread: float = 0.05
    # base levels per maturity bucket: rates as decimals, vols in percentage points
    rate_by_bucket: dict = field(default_factory=lambda: {
        "d1_9": 0.010, "d10_30": 0.012, "d31_90": 0.015, "d91_180": 0.018, "d180plus": 0.020})
    vol_by_bucket: dict = field(default_factory=lambda: {
        "d1_9": 18.0, "d10_30": 19.0, "d31_90": 20.0, "d91_180": 21.0, "d180plus": 22.0})
    # observation noise on the published tables (quotes are priced off the base levels)
    rate_noise: float = 0.0
    vol_noise: float = 0.0

    def __post_init__(self):
        self.strike_grid = tuple(self.strike_grid)
        self.expiry_grid = tuple(int(d) for d in self.expiry_grid)
        if not self.sigma > 0:
            raise ParameterError(f"sigma must be > 0, got {self.sigma}")
        if not self.s0 > 0:
            raise ParameterError(f"s0 must be > 0, got {self.s0}")
        if self.half_spread < 0:
            raise ParameterError(f"half_spread must be >= 0, got {self.half_spread}")
        if self.trading_days < 1:
            raise ParameterError(f"trading_days must be >= 1, got {self.trading_days}")
        if not self.strike_grid or not self.expiry_grid:
            raise ParameterError("strike_grid and expiry_grid must be non-empty")
        if not self.strike_step > 0:
            raise ParameterError(f"strike_step must be > 0, got {self.strike_step}")
        if min(self.expiry_grid) < 1:
            raise ParameterError("expiry_grid entries must be >= 1 day")
        for name in ("rate_by_bucket", "vol_by_bucket"):
            missing = set(MATURITY_CLASSES) - set(getattr(self, name))
            if missing:
                raise ParameterError(f"{name} is missing buckets {sorted(missing)}")
        if min(self.vol_by_bucket.values()) <= 0:
            raise ParameterError("vol_by_bucket levels must be > 0")
        if self.rate_noise < 0 or self.vol_noise < 0:
            raise ParameterError("rate_noise and vol_noise must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strike_grid"] = list(self.strike_grid)
        d["expiry_grid"] = list(self.expiry_grid)
        return d


@dataclass
class SyntheticMarket:
    dates: list[dt.date]
    spots: np.ndarray
    quotes: list[RawQuote]
    tree_prices: np.ndarray
    rates: dict
    vols: dict  # percentage points, as published


def _rng(config, stream):
    return np.random.default_rng([config.seed, stream])


def trading_dates(config: SyntheticConfig) -> list[dt.date]:
    start = np.datetime64(config.start_date, "D")
    days = np.busday_offset(start, np.arange(config.trading_days), roll="forward")
    return [d.astype(dt.date) for d in days]


def generate_underlying(config: SyntheticConfig) -> np.ndarray:
    """Daily closes of a GBM path starting at ``s0`` with dt = 1/252."""
    z = _rng(config, 0).standard_normal(config.trading_days - 1)
    steps = (config.drift - 0.5 * config.sigma ** 2) * DT + config.sigma * math.sqrt(DT) * z
    return config.s0 * np.exp(np.concatenate([[0.0], np.cumsum(steps)]))


def _nearest_friday(day: dt.date) -> dt.date:
    return day + dt.timedelta(days=(4 - day.weekday() + 3) % 7 - 3)


def listed_contracts(config: SyntheticConfig, day: dt.date, spot: float):
    """Strikes snapped to ``strike_step`` around the spot, and Friday expiries
    nearest to each target horizon in ``expiry_grid``."""
    step = config.strike_step
    strikes = sorted({round(step * round(spot * (1.0 + o) / step), 10) for o in config.strike_grid} - {0.0})
    expiries = sorted({_nearest_friday(day + dt.timedelta(days=h)) for h in config.expiry_grid})
    return [k for k in strikes if k > 0], [e for e in expiries if e > day]


def generate_quotes(config: SyntheticConfig, spots=None) -> SyntheticMarket:
    dates = trading_dates(config)
    spots = generate_underlying(config) if spots is None else np.asarray(spots, dtype=np.float64)
    if spots.size == 0:
        raise ParameterError("spot series is empty")
    dates = dates[:spots.size]

    vol_z = _rng(config, 1).standard_normal((len(dates), len(MATURITY_CLASSES)))
    rate_z = _rng(config, 2).standard_normal((len(dates), len(MATURITY_CLASSES)))
    rates, vols = {}, {}
    for i, day in enumerate(dates):
        for j, b in enumerate(MATURITY_CLASSES):
            rates[(day, b)] = config.rate_by_bucket[b] + config.rate_noise * rate_z[i, j]
            vols[(day, b)] = max(config.vol_by_bucket[b] + config.vol_noise * vol_z[i, j], 0.01)

    rows = []
    for day, spot in zip(dates, spots):
        strikes, expiries = listed_contracts(config, day, float(spot))
        for e in expiries:
            days = (e - day).days
            b = classify_maturity(days)
            # price off the noiseless base levels; scale vols exactly as the loader does
            vol = config.vol_by_bucket[b] * 0.01
            for k in strikes:
                rows.append((day, e, k, float(spot), days, config.rate_by_bucket[b], vol))

    if rows:
        cols = list(zip(*rows))
        mids = price_many(cols[3], cols[2], cols[5], cols[6], cols[4], kind="call", style="american")
    else:
        mids = np.zeros(0)
    hs = config.half_spread
    quotes = [RawQuote(r[0], r[1], r[2], max(float(m) - hs, 0.0), float(m) + hs, r[3]) for r, m in zip(rows, mids)]
    return SyntheticMarket(dates, spots, quotes, mids, rates, vols)


def write_market(market: SyntheticMarket, out_dir) -> dict:
    """Write ``quotes.csv``, ``rates.csv`` and ``vols.csv`` in the ingest formats."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"quotes": out / "quotes.csv", "rates": out / "rates.csv", "vols": out / "vols.csv"}
    with open(paths["quotes"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(QUOTE_HEADER)
        for q in market.quotes:
            w.writerow([q.quote_date.isoformat(), q.expiration_date.isoformat(),
                        *(repr(float(v)) for v in (q.strike, q.bid, q.ask, q.spot))])
    for name, header, table in (("rates", RATE_HEADER, market.rates), ("vols", VOL_HEADER, market.vols)):
        with open(paths[name], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for (day, b), value in sorted(table.items(), key=lambda kv: (kv[0][0], MATURITY_CLASSES.index(kv[0][1]))):
                w.writerow([day.isoformat(), b, repr(float(value))])
    return paths
