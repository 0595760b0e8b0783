"""Option-quote ingestion, enrichment, moneyness/maturity bucketing, sequence
construction, min-max normalisation and the 70/10/20 split."""
from __future__ import annotations

import csv
import datetime as dt
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import DataError, EnrichmentError

log = logging.getLogger(__name__)

MONEYNESS_CLASSES = ("OTM", "ATM", "ITM")
MATURITY_CLASSES = ("d1_9", "d10_30", "d31_90", "d91_180", "d180plus")
# implied-volatility index matched to each maturity class
VOL_INDEX = {"d1_9": "VXST", "d10_30": "VIX", "d31_90": "VIX3M", "d91_180": "VXMT", "d180plus": "VIX1Y"}

QUOTE_HEADER = ["quote_date", "expiration_date", "strike", "bid", "ask", "spot"]
RATE_HEADER = ["date", "bucket", "rate"]
VOL_HEADER = ["date", "bucket", "level"]

STEP_FIELDS = ("call_price", "spot_price", "strike", "moneyness", "days_to_maturity", "volatility", "interest_rate")
FEATURE_NAMES = tuple(f"{name}{k}" for k in (1, 2, 3) for name in STEP_FIELDS)
FEATURE_SETS = {
    21: tuple(range(21)),
    18: tuple(i for i in range(21) if i % 7 != 0),
    6: tuple(range(1, 7)),
}


def classify_moneyness(moneyness: float) -> str:
    if moneyness <= 0.97:
        return "OTM"
    if moneyness <= 1.03:
        return "ATM"
    return "ITM"


def classify_maturity(days: int) -> str:
    if days <= 9:
        return "d1_9"
    if days <= 30:
        return "d10_30"
    if days <= 90:
        return "d31_90"
    if days <= 180:
        return "d91_180"
    return "d180plus"


class BucketKey(NamedTuple):
    moneyness_class: str
    maturity_class: str

    @property
    def name(self) -> str:
        return f"{self.moneyness_class}_{self.maturity_class}"

    @classmethod
    def parse(cls, name: str) -> "BucketKey":
        m, _, t = name.partition("_")
        if m not in MONEYNESS_CLASSES or t not in MATURITY_CLASSES:
            raise DataError(f"unknown bucket {name!r}")
        return cls(m, t)


ALL_BUCKETS = tuple(BucketKey(m, t) for m in MONEYNESS_CLASSES for t in MATURITY_CLASSES)


@dataclass(frozen=True)
class RawQuote:
    quote_date: dt.date
    expiration_date: dt.date
    strike: float
    bid: float
    ask: float
    spot: float


@dataclass(frozen=True)
class Reject:
    line: int
    reason: str


@dataclass(frozen=True)
class EnrichedRecord:
    quote_date: dt.date
    expiration_date: dt.date
    spot: float
    strike: float
    moneyness: float
    days_to_maturity: int
    volatility: float
    interest_rate: float
    mid_price: float

    @property
    def contract(self) -> tuple[float, dt.date]:
        return (self.strike, self.expiration_date)


def bucket_assign(record: EnrichedRecord) -> BucketKey:
    return BucketKey(classify_moneyness(record.moneyness), classify_maturity(record.days_to_maturity))


# -- ingestion ---------------------------------------------------------------

def _read_rows(path, header):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        got = next(reader, None)
        if got is None or [h.strip() for h in got] != header:
            raise DataError(f"{path}: expected header {','.join(header)}, got {','.join(got or [])}")
        rows = [(n, row) for n, row in enumerate(reader, start=2) if row and any(c.strip() for c in row)]
    if not rows:
        raise DataError(f"{path}: no data rows")
    return rows


def _validate_quote(q: RawQuote) -> str | None:
    if q.ask < q.bid:
        return "crossed quote"
    if q.bid < 0:
        return "negative bid"
    if not q.spot > 0:
        return "non-positive spot"
    if not q.strike > 0:
        return "non-positive strike"
    if q.expiration_date <= q.quote_date:
        return "expiration not after quote date"
    return None


def ingest_csv(path) -> tuple[list[RawQuote], list[Reject]]:
    """Parse a quotes CSV; bad rows are collected as rejects rather than raised.

    Raises DataError for a missing file, a wrong header, an empty data
    section, or when every row is rejected.
    """
    quotes, rejects = [], []
    for line, row in _read_rows(path, QUOTE_HEADER):
        try:
            if len(row) != len(QUOTE_HEADER):
                raise ValueError(f"expected {len(QUOTE_HEADER)} fields, got {len(row)}")
            q = RawQuote(dt.date.fromisoformat(row[0].strip()), dt.date.fromisoformat(row[1].strip()),
                         *(float(c) for c in row[2:]))
        except ValueError as exc:
            rejects.append(Reject(line, f"unparseable row: {exc}"))
            continue
        reason = _validate_quote(q)
        if reason:
            rejects.append(Reject(line, reason))
        else:
            quotes.append(q)
    if not quotes:
        raise DataError(f"{path}: all {len(rejects)} rows rejected (first: {rejects[0].reason})")
    return quotes, rejects


def _load_table(path, header, scale):
    table = {}
    for line, row in _read_rows(path, header):
        try:
            d = dt.date.fromisoformat(row[0].strip())
            bucket = row[1].strip()
            value = float(row[2]) * scale
        except (ValueError, IndexError) as exc:
            raise DataError(f"{path}:{line}: {exc}") from None
        if bucket not in MATURITY_CLASSES:
            raise DataError(f"{path}:{line}: unknown maturity bucket {bucket!r}")
        table[(d, bucket)] = value
    return table


def load_rate_table(path) -> dict:
    """``(date, maturity bucket) -> rate`` as a continuously compounded decimal."""
    return _load_table(path, RATE_HEADER, 1.0)


def load_vol_table(path) -> dict:
    """``(date, maturity bucket) -> volatility``; index levels are percentage points."""
    return _load_table(path, VOL_HEADER, 0.01)


def enrich(quotes, rate_table: dict, vol_table: dict) -> list[EnrichedRecord]:
    out, gaps = [], set()
    for q in quotes:
        days = (q.expiration_date - q.quote_date).days
        key = (q.quote_date, classify_maturity(days))
        rate, vol = rate_table.get(key), vol_table.get(key)
        if rate is None or vol is None:
            gaps.add((key[0].isoformat(), key[1]))
            continue
        out.append(EnrichedRecord(q.quote_date, q.expiration_date, q.spot, q.strike, q.spot / q.strike,
                                  days, vol, rate, (q.bid + q.ask) / 2.0))
    if gaps:
        raise EnrichmentError(gaps)
    return out


def partition(records) -> dict[BucketKey, list]:
    buckets = {k: [] for k in ALL_BUCKETS}
    for r in records:
        buckets[bucket_assign(r)].append(r)
    return buckets


# -- sequences ---------------------------------------------------------------

@dataclass
class SequenceSample:
    features: np.ndarray
    target: float
    contract_id: tuple[float, dt.date]
    anchor_date: dt.date
    dates: tuple[dt.date, dt.date, dt.date]  # oldest to latest
    bucket: BucketKey


@dataclass
class SequenceReport:
    samples: int = 0
    contracts: int = 0
    short_contracts: int = 0
    duplicates: int = 0


def _step(r: EnrichedRecord, with_price: bool) -> list[float]:
    return [r.mid_price if with_price else 0.0, r.spot, r.strike, r.moneyness,
            float(r.days_to_maturity), r.volatility, r.interest_rate]


def build_sequences(records, strike_only: bool = False) -> tuple[list[SequenceSample], SequenceReport]:
    """Three-date windows over each contract's quote history.

    Each date with at least two earlier quotes of the same contract yields a
    sample built from the two closest earlier dates.  Contracts are keyed by
    (strike, expiration); ``strike_only`` keys on strike alone and, on each
    earlier date, uses the quote whose expiration is nearest the anchor's.
    """
    report = SequenceReport()
    groups = defaultdict(dict)
    for r in records:
        key = r.strike if strike_only else r.contract
        per_date = groups[key].setdefault(r.quote_date, [])
        if not strike_only and per_date:
            report.duplicates += 1
            continue
        per_date.append(r)

    samples = []
    for key in sorted(groups, key=lambda k: (k,) if strike_only else k):
        by_date = groups[key]
        dates = sorted(by_date)
        report.contracts += 1
        if len(dates) < 3:
            report.short_contracts += 1
            continue
        for j in range(2, len(dates)):
            for anchor in sorted(by_date[dates[j]], key=lambda r: r.expiration_date):
                prev = [min(by_date[dates[j - s]],
                            key=lambda r: (abs((r.expiration_date - anchor.expiration_date).days),
                                           r.expiration_date))
                        for s in (1, 2)]
                feats = _step(anchor, False) + _step(prev[0], True) + _step(prev[1], True)
                samples.append(SequenceSample(
                    np.array(feats), anchor.mid_price, anchor.contract, anchor.quote_date,
                    (dates[j - 2], dates[j - 1], dates[j]), bucket_assign(anchor)))
    report.samples = len(samples)
    return samples, report


def select_features(X: np.ndarray, mode: int) -> np.ndarray:
    """Columns of the 21-feature layout used by a 21-, 18- or 6-feature model."""
    try:
        idx = FEATURE_SETS[mode]
    except KeyError:
        raise DataError(f"feature mode must be one of {sorted(FEATURE_SETS)}, got {mode}") from None
    return np.asarray(X)[:, idx]


# -- normalisation and split -------------------------------------------------

@dataclass
class NormalizationStats:
    x_min: np.ndarray
    x_max: np.ndarray
    y_min: float
    y_max: float

    def subset(self, idx) -> "NormalizationStats":
        idx = list(idx)
        return NormalizationStats(self.x_min[idx], self.x_max[idx], self.y_min, self.y_max)

    @property
    def y_range(self) -> float:
        return self.y_max - self.y_min

    def to_dict(self) -> dict:
        return {"x_min": self.x_min.tolist(), "x_max": self.x_max.tolist(),
                "y_min": self.y_min, "y_max": self.y_max}

    @classmethod
    def from_dict(cls, d) -> "NormalizationStats":
        return cls(np.array(d["x_min"], dtype=np.float64), np.array(d["x_max"], dtype=np.float64),
                   float(d["y_min"]), float(d["y_max"]))


def fit_normalize(X, y) -> NormalizationStats:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] == 0 or y.size == 0:
        raise DataError("cannot fit normalisation on an empty split")
    return NormalizationStats(X.min(axis=0), X.max(axis=0), float(y.min()), float(y.max()))


def _scale(x, lo, hi):
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (x - lo) / safe, 0.0)


def apply_normalize(stats: NormalizationStats, X) -> np.ndarray:
    return _scale(np.asarray(X, dtype=np.float64), stats.x_min, stats.x_max)


def normalize_target(stats: NormalizationStats, y) -> np.ndarray:
    return _scale(np.asarray(y, dtype=np.float64), stats.y_min, stats.y_max)


def denormalize_target(stats: NormalizationStats, values) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if stats.y_max > stats.y_min:
        return values * (stats.y_max - stats.y_min) + stats.y_min
    return np.full_like(values, stats.y_min)


def denormalize_features(stats: NormalizationStats, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    span = stats.x_max - stats.x_min
    return np.where(span > 0, X * span + stats.x_min, stats.x_min)


def split_indices(n: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded shuffle, then a contiguous 70/10/20 cut (floors; remainder to test)."""
    if n < 10:
        raise DataError(f"need at least 10 samples to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    # integer arithmetic: int(0.7 * n) can land one below the true floor
    n_train = (7 * n) // 10
    n_val = n // 10
    return order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]


def split(samples, seed: int):
    tr, va, te = split_indices(len(samples), seed)
    return [samples[i] for i in tr], [samples[i] for i in va], [samples[i] for i in te]


# -- prepared datasets -------------------------------------------------------

DATASET_HEADER = [*FEATURE_NAMES, "target", "contract_id", "anchor_date"]


def contract_label(contract) -> str:
    strike, expiry = contract
    return f"{strike!r}@{expiry.isoformat()}"


@dataclass
class BucketData:
    bucket: BucketKey
    X: np.ndarray
    y: np.ndarray
    contract_ids: list[str] = field(default_factory=list)
    anchor_dates: list[str] = field(default_factory=list)
    stats: NormalizationStats | None = None
    split_seed: int | None = None

    def __len__(self):
        return self.y.size

    def splits(self):
        """``(train, val, test)`` index arrays, or None when too small to split."""
        if self.split_seed is None or len(self) < 10:
            return None
        return split_indices(len(self), self.split_seed)

    def normalized(self, mode: int = 21):
        """Normalised ``(X, y)`` restricted to a feature mode."""
        idx = FEATURE_SETS[mode]
        stats = self.stats.subset(idx)
        return apply_normalize(stats, self.X[:, idx]), normalize_target(stats, self.y)


def bucket_paths(directory, bucket: BucketKey) -> tuple[Path, Path]:
    d = Path(directory)
    return d / f"{bucket.name}.csv", d / f"{bucket.name}.stats.json"


def write_bucket(directory, bucket: BucketKey, samples, seed: int) -> BucketData:
    """Write one bucket's samples (raw features) and its stats sidecar."""
    samples = sorted(samples, key=lambda s: (s.anchor_date, s.contract_id[1], s.contract_id[0]))
    X = np.array([s.features for s in samples]).reshape(len(samples), 21)
    y = np.array([s.target for s in samples], dtype=np.float64)
    data = BucketData(bucket, X, y, [contract_label(s.contract_id) for s in samples],
                      [s.anchor_date.isoformat() for s in samples])
    sidecar = {"bucket": bucket.name, "n_samples": len(samples), "split_seed": None,
               "counts": None, "stats": None, "feature_names": list(FEATURE_NAMES)}
    if len(samples) >= 10:
        tr, va, te = split_indices(len(samples), seed)
        data.stats = fit_normalize(X[tr], y[tr])
        data.split_seed = seed
        sidecar.update(split_seed=seed, counts={"train": int(tr.size), "val": int(va.size), "test": int(te.size)},
                       stats=data.stats.to_dict())
    csv_path, json_path = bucket_paths(directory, bucket)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DATASET_HEADER)
        for row, target, cid, anchor in zip(X, y, data.contract_ids, data.anchor_dates):
            w.writerow([*(repr(float(v)) for v in row), repr(float(target)), cid, anchor])
    json_path.write_text(json.dumps(sidecar, indent=2) + "\n")
    return data


def read_bucket(directory, bucket: BucketKey) -> BucketData:
    csv_path, json_path = bucket_paths(directory, bucket)
    if not csv_path.is_file() or not json_path.is_file():
        raise DataError(f"prepared data for bucket {bucket.name} not found in {directory}")
    sidecar = json.loads(json_path.read_text())
    X, y, cids, anchors = [], [], [], []
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != DATASET_HEADER:
            raise DataError(f"{csv_path}: unexpected header")
        for row in reader:
            X.append([float(v) for v in row[:21]])
            y.append(float(row[21]))
            cids.append(row[22])
            anchors.append(row[23])
    stats = NormalizationStats.from_dict(sidecar["stats"]) if sidecar.get("stats") else None
    return BucketData(bucket, np.array(X, dtype=np.float64).reshape(len(y), 21), np.array(y, dtype=np.float64),
                      cids, anchors, stats, sidecar.get("split_seed"))


def prepare(quotes_path, rates_path, vols_path, out_dir, seed: int = 0, strike_only: bool = False) -> dict:
    """Full ingest -> enrich -> sequence -> bucket -> split -> normalise run.

    Writes one CSV + stats sidecar per bucket (all 15, possibly empty) and a
    rejects report; returns per-bucket sample counts.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    quotes, rejects = ingest_csv(quotes_path)
    records = enrich(quotes, load_rate_table(rates_path), load_vol_table(vols_path))
    samples, report = build_sequences(records, strike_only=strike_only)
    by_bucket = {k: [] for k in ALL_BUCKETS}
    for s in samples:
        by_bucket[s.bucket].append(s)
    counts = {}
    for key in ALL_BUCKETS:
        write_bucket(out, key, by_bucket[key], seed)
        counts[key.name] = len(by_bucket[key])
    with open(out / "rejects.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["line", "reason"])
        for r in rejects:
            w.writerow([r.line, r.reason])
    log.info("prepared %d samples from %d quotes (%d rejected, %d short contracts)",
             report.samples, len(quotes), len(rejects), report.short_contracts)
    return counts
