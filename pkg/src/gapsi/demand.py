"""Demand data: CSV loading, synthetic generators, calendar features and forecasts."""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

FEATURE_DIM = 15
_DAY_COLUMN = re.compile(r"d_\d+$")


class DemandFormatError(ValueError):
    """Malformed demand file; the message names the offending line."""


@dataclass
class DemandSeries:
    """Nonnegative ``T x K`` demand matrix.

    ``first_day`` is the calendar index of period 1 (it shifts the weekday
    one-hot of the calendar features).
    """

    values: np.ndarray
    products: tuple[str, ...] = ()
    first_day: int = 1
    missing: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise ValueError("demand must be a non-empty T x K matrix")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("demand must be finite and nonnegative")
        if not self.products:
            self.products = tuple(f"product_{k + 1}" for k in range(self.K))
        if len(self.products) != self.K:
            raise ValueError("one product name per column required")

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def K(self) -> int:
        return self.values.shape[1]


@dataclass
class ForecastSeries:
    values: np.ndarray
    sigma: float
    seed: int | None


def _parse_quantity(text: str, line: int) -> float | None:
    text = text.strip()
    if text == "":
        return None
    try:
        q = float(text)
    except ValueError:
        raise DemandFormatError(f"line {line}: not a number: {text!r}") from None
    if not np.isfinite(q):
        raise DemandFormatError(f"line {line}: non-finite quantity {text!r}")
    return q


def _read_rows(path: Path) -> list[tuple[int, list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [(reader_line, row) for reader_line, row in _numbered(csv.reader(fh)) if any(c.strip() for c in row)]
    if not rows:
        raise DemandFormatError(f"{path}: empty file")
    return rows


def _numbered(reader):
    for row in reader:
        yield reader.line_num, row


def _load_wide(rows) -> DemandSeries:
    (_, header), body = rows[0], rows[1:]
    day_cols = [i for i, name in enumerate(header) if _DAY_COLUMN.match(name.strip())]
    if not day_cols:
        day_cols = list(range(1, len(header)))
    if not day_cols or not body:
        raise DemandFormatError("wide layout needs a header and at least one product row")
    names, columns, missing, negative = [], [], 0, []
    for line, row in body:
        if len(row) != len(header):
            raise DemandFormatError(f"line {line}: expected {len(header)} fields, found {len(row)}")
        values = []
        for i in day_cols:
            q = _parse_quantity(row[i], line)
            if q is None:
                missing += 1
                q = 0.0
            values.append(q)
        if min(values) < 0:
            negative.append(line)
        names.append(row[0].strip() if 0 not in day_cols else f"product_{len(names) + 1}")
        columns.append(values)
    if negative:
        raise DemandFormatError(f"negative demand on line(s) {', '.join(map(str, negative))}")
    return DemandSeries(np.array(columns).T, tuple(names), missing=missing)


def _load_long(rows) -> DemandSeries:
    (line0, header), body = rows[0], rows[1:]
    if [h.strip().lower() for h in header] != ["period", "product", "quantity"]:
        raise DemandFormatError(f"line {line0}: long layout requires header period,product,quantity")
    entries, negative = {}, []
    products: dict[str, int] = {}
    max_period = 0
    missing = 0
    for line, row in body:
        if len(row) != 3:
            raise DemandFormatError(f"line {line}: expected 3 fields, found {len(row)}")
        try:
            period = int(row[0])
        except ValueError:
            raise DemandFormatError(f"line {line}: period must be an integer") from None
        if period < 1:
            raise DemandFormatError(f"line {line}: periods start at 1")
        q = _parse_quantity(row[2], line)
        if q is None:
            missing += 1
            q = 0.0
        if q < 0:
            negative.append(line)
        name = row[1].strip()
        products.setdefault(name, len(products))
        if (period, name) in entries:
            raise DemandFormatError(f"line {line}: duplicate entry for period {period}, product {name}")
        entries[(period, name)] = q
        max_period = max(max_period, period)
    if negative:
        raise DemandFormatError(f"negative demand on line(s) {', '.join(map(str, negative))}")
    if not entries:
        raise DemandFormatError("no demand rows")
    values = np.zeros((max_period, len(products)))
    for (period, name), q in entries.items():
        values[period - 1, products[name]] = q
    missing += values.size - len(entries)
    return DemandSeries(values, tuple(products), missing=missing)


def load_demand_csv(path, layout: str = "wide") -> DemandSeries:
    """Read demand from CSV.

    ``wide``: one row per product; day columns are those named ``d_<n>``
    or, failing that, every column after the first (which names the
    product).  ``long``: header ``period,product,quantity``.  Missing cells
    count as zero and are tallied in ``missing``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    rows = _read_rows(path)
    if layout == "wide":
        series = _load_wide(rows)
    elif layout == "long":
        series = _load_long(rows)
    else:
        raise ValueError(f"unknown layout {layout!r}")
    if series.missing:
        logger.warning("%s: %d missing demand cells read as zero", path, series.missing)
    return series


def write_demand_csv(series: DemandSeries, path, layout: str = "wide") -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if layout == "wide":
            writer.writerow(["product"] + [f"d_{t + 1}" for t in range(series.T)])
            for k, name in enumerate(series.products):
                writer.writerow([name] + [repr(float(q)) for q in series.values[:, k]])
        elif layout == "long":
            writer.writerow(["period", "product", "quantity"])
            for t in range(series.T):
                for k, name in enumerate(series.products):
                    writer.writerow([t + 1, name, repr(float(series.values[t, k]))])
        else:
            raise ValueError(f"unknown layout {layout!r}")


def poisson_demand(T: int, K: int, mean, seed: int | None = None) -> DemandSeries:
    mean = np.broadcast_to(np.asarray(mean, dtype=float), (K,))
    if np.any(mean < 0):
        raise ValueError("Poisson mean must be nonnegative")
    rng = np.random.default_rng(seed)
    return DemandSeries(rng.poisson(mean, size=(T, K)).astype(float))


def cyclic_demand(T: int, pattern, noise: float = 0.0, seed: int | None = None, trend: float = 0.0) -> DemandSeries:
    """Repeat a ``P x K`` pattern over ``T`` periods, optionally scaled by ``1 + trend * t``
    and perturbed by clipped Gaussian noise."""
    pattern = np.asarray(pattern, dtype=float)
    if pattern.ndim == 1:
        pattern = pattern[:, None]
    rng = np.random.default_rng(seed)
    idx = np.arange(T) % pattern.shape[0]
    values = pattern[idx] * (1.0 + trend * np.arange(T))[:, None]
    if noise > 0:
        values = values + rng.normal(0.0, noise, values.shape)
    return DemandSeries(np.maximum(values, 0.0))


def calendar_features(t: int, history, scale: float, first_day: int = 1) -> np.ndarray:
    """Feature vector for period ``t`` of one product.

    ``(D, D * onehot(weekday), d_{t-7}, ..., d_{t-1})`` where the weekday
    index is ``(t + first_day - 1) mod 7`` and ``history[s-1]`` is the
    demand of period ``s``.  Lags before period 1 are zero.
    """
    if scale <= 0:
        raise ValueError("feature scale must be positive")
    history = np.asarray(history, dtype=float)
    w = np.zeros(FEATURE_DIM)
    w[0] = scale
    w[1 + (t + first_day - 1) % 7] = scale
    for lag in range(1, 8):
        s = t - lag
        if 1 <= s <= history.size:
            w[15 - lag] = history[s - 1]
    return w


def weekly_forecast(demands, sigma: float = 0.0, seed: int | None = None) -> ForecastSeries:
    """Last week's demand plus clipped Gaussian noise: ``max(0, d_{t-7} + eps)``."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    d = np.asarray(demands.values if isinstance(demands, DemandSeries) else demands, dtype=float)
    if d.ndim == 1:
        d = d[:, None]
    lagged = np.zeros_like(d)
    lagged[7:] = d[:-7]
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, d.shape) if sigma > 0 else 0.0
    return ForecastSeries(np.maximum(lagged + noise, 0.0), float(sigma), seed)


def normalized_std(demand) -> float:
    """Standard deviation of demand relative to its mean."""
    d = np.asarray(demand, dtype=float).ravel()
    total = d.sum()
    if d.size == 0 or total <= 0:
        raise ValueError("normalized standard deviation needs positive total demand")
    return float(np.sqrt(np.mean((d / (total / d.size) - 1.0) ** 2)))
