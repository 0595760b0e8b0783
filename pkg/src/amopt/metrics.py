"""RMSE, MAPE and R-squared, and per-bucket comparison tables with best and
second-best flags."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .data import ALL_BUCKETS, BucketKey, MATURITY_CLASSES
from .errors import MetricError

MAPE_ZERO_GUARD = 1e-12
# True when a smaller value is better
LOWER_IS_BETTER = {"rmse": True, "mape": True, "r_squared": False}
MATURITY_LABELS = {"d1_9": "1-9", "d10_30": "10-30", "d31_90": "31-90", "d91_180": "91-180", "d180plus": ">180"}
MONEYNESS_LABELS = {"OTM": "<=0.97", "ATM": "0.97~1.03", "ITM": ">1.03"}


def _pair(y, yhat, min_len=1):
    y = np.asarray(y, dtype=np.float64).ravel()
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    if y.shape != yhat.shape:
        raise MetricError(f"length mismatch: {y.size} actual vs {yhat.size} predicted")
    if y.size < min_len:
        raise MetricError(f"need at least {min_len} values, got {y.size}")
    return y, yhat


def rmse(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return math.sqrt(float(np.mean((y - yhat) ** 2)))


def mape(y, yhat, return_excluded: bool = False):
    """Mean absolute percentage error in percent.

    Rows with |y| < 1e-12 are left out; with ``return_excluded`` the number
    of such rows is returned alongside the value.
    """
    y, yhat = _pair(y, yhat)
    keep = np.abs(y) >= MAPE_ZERO_GUARD
    excluded = int(y.size - keep.sum())
    if not keep.any():
        raise MetricError("MAPE undefined: every actual value is zero")
    value = float(np.mean(np.abs((y[keep] - yhat[keep]) / y[keep]))) * 100.0
    return (value, excluded) if return_excluded else value


def r_squared(y, yhat) -> float:
    y, yhat = _pair(y, yhat, min_len=2)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise MetricError("R-squared undefined for constant actual values")
    return 1.0 - float(np.sum((y - yhat) ** 2)) / ss_tot


@dataclass
class MetricsReport:
    rmse: float
    mape: float
    r_squared: float
    n: int
    bucket: BucketKey
    model_tag: str
    mape_excluded: int = 0

    def get(self, metric: str) -> float:
        return getattr(self, metric)


def evaluate(y, yhat, bucket: BucketKey, model_tag: str) -> MetricsReport:
    y, yhat = _pair(y, yhat)
    try:
        mp, excl = mape(y, yhat, return_excluded=True)
    except MetricError:
        mp, excl = math.nan, y.size
    try:
        r2 = r_squared(y, yhat)
    except MetricError:
        r2 = math.nan
    return MetricsReport(rmse(y, yhat), mp, r2, int(y.size), bucket, model_tag, excl)


@dataclass
class ReportTable:
    metric: str
    models: list[str]
    rows: list[BucketKey]
    values: dict   # (bucket, model) -> float
    flags: dict    # (bucket, model) -> "", "*" or "**"

    def cell(self, bucket, model, digits=4) -> str:
        v = self.values.get((bucket, model))
        if v is None or not math.isfinite(v):
            return "n/a"
        return f"{v:.{digits}f}{self.flags.get((bucket, model), '')}"

    def write_csv(self, path, digits=6) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["moneyness", "maturity", *self.models])
            for b in self.rows:
                w.writerow([b.moneyness_class, b.maturity_class, *(self.cell(b, m, digits) for m in self.models)])

    def to_text(self, digits=4) -> str:
        header = ["Moneyness", "Maturity", *self.models]
        body = []
        for b in self.rows:
            first = MONEYNESS_LABELS[b.moneyness_class] if b.maturity_class == MATURITY_CLASSES[0] else ""
            body.append([first, MATURITY_LABELS[b.maturity_class], *(self.cell(b, m, digits) for m in self.models)])
        widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
        lines = ["  ".join(c.ljust(wd) for c, wd in zip(header, widths)).rstrip()]
        lines.append("  ".join("-" * wd for wd in widths))
        lines += ["  ".join(c.ljust(wd) for c, wd in zip(r, widths)).rstrip() for r in body]
        return "\n".join(lines) + "\n"


def _flag_row(values: dict, lower_better: bool) -> dict:
    finite = {m: v for m, v in values.items() if v is not None and math.isfinite(v)}
    distinct = sorted(set(finite.values()), reverse=not lower_better)
    flags = {m: "" for m in values}
    for m, v in finite.items():
        if v == distinct[0]:
            flags[m] = "*"
        elif len(distinct) > 1 and v == distinct[1]:
            flags[m] = "**"
    return flags


def report_table(reports, metric: str, models=None, buckets=ALL_BUCKETS) -> ReportTable:
    """Tabulate one metric by (moneyness, maturity) row and model column.

    In each row the best value is flagged ``*`` and the second best ``**``
    (minimum for RMSE/MAPE, maximum for R-squared).  Tied models share a flag.
    """
    if metric not in LOWER_IS_BETTER:
        raise MetricError(f"unknown metric {metric!r}")
    reports = list(reports)
    if models is None:
        models = list(dict.fromkeys(r.model_tag for r in reports))
    values = {(r.bucket, r.model_tag): r.get(metric) for r in reports}
    flags = {}
    for b in buckets:
        row = {m: values.get((b, m)) for m in models}
        for m, f in _flag_row(row, LOWER_IS_BETTER[metric]).items():
            flags[(b, m)] = f
    return ReportTable(metric, list(models), list(buckets), values, flags)
