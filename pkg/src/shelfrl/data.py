"""Order logs: synthetic generation, CSV ingestion, metadata, splitting, capacity."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .dynamics import CapacityConfig, ProductCatalog

log = logging.getLogger(__name__)

PERIODS_PER_DAY = 4
DEFAULT_START = datetime(2017, 1, 2, tzinfo=timezone.utc)  # a Monday

ORDER_COLUMNS = ("product_id", "timestamp")
SOURCE_COLUMNS = ("customer_id", "product_id", "day_of_week", "days_since_prior")
METADATA_COLUMNS = (
    "product_id",
    "label",
    "unit_volume",
    "unit_weight",
    "shelf_capacity_units",
    "spoilage_rate",
    "threshold",
)


class DataFormatError(ValueError):
    pass


@dataclass
class OrderLog:
    """Per-period order counts (periods x products) on a fixed calendar."""

    product_ids: list
    counts: np.ndarray
    start: datetime = DEFAULT_START
    periods_per_day: int = PERIODS_PER_DAY

    def __post_init__(self):
        self.product_ids = [str(p) for p in self.product_ids]
        counts = np.asarray(self.counts, dtype=np.int64)
        p = len(self.product_ids)
        self.counts = counts.reshape(-1, p) if p else counts.reshape(counts.shape[0] if counts.ndim else 0, 0)
        if np.any(self.counts < 0):
            raise ValueError("order counts must be non-negative")
        if len(set(self.product_ids)) != len(self.product_ids):
            raise ValueError("duplicate product id in order log")

    @property
    def n_periods(self) -> int:
        return self.counts.shape[0]

    @property
    def total_orders(self) -> int:
        return int(self.counts.sum())

    @property
    def period_length(self) -> timedelta:
        return timedelta(days=1) / self.periods_per_day

    def period_start(self, t: int) -> datetime:
        return self.start + t * self.period_length

    def period_of(self, ts: datetime) -> int:
        return math.floor((ts - self.start) / self.period_length)

    def normalized(self, shelf_capacity_units) -> np.ndarray:
        """Orders as fractions of each product's shelf capacity."""
        cap = np.asarray(shelf_capacity_units, dtype=np.float64)
        return self.counts / cap[None, :]

    def slice(self, start: int, stop: int) -> "OrderLog":
        return OrderLog(
            self.product_ids,
            self.counts[start:stop].copy(),
            self.period_start(start),
            self.periods_per_day,
        )

    def records(self):
        """One ``(product_id, timestamp)`` pair per unit ordered."""
        for t in range(self.n_periods):
            ts = self.period_start(t)
            for i in np.flatnonzero(self.counts[t]):
                for _ in range(self.counts[t, i]):
                    yield self.product_ids[i], ts


@dataclass(frozen=True)
class SplitConfig:
    train_periods: int = 900
    test_periods: int = 496


@dataclass
class GeneratorConfig:
    products: int = 20
    days: int = 125
    periods_per_day: int = PERIODS_PER_DAY
    base_rate: list = None
    day_of_week: tuple = (0.9, 0.95, 0.95, 1.0, 1.1, 1.2, 0.9)
    time_of_day: tuple = (0.5, 1.2, 1.5, 0.8)
    outlier_prob: float = 0.01
    outlier_scale: tuple = (3.0, 6.0)
    seed: int = 0
    start: datetime = field(default=DEFAULT_START)

    def rates(self) -> np.ndarray:
        if self.base_rate is None:
            rng = np.random.default_rng([self.seed, 1])
            return rng.uniform(4.0, 12.0, size=self.products)
        r = np.broadcast_to(np.asarray(self.base_rate, dtype=np.float64), (self.products,))
        return r.copy()


def _validate_generator(cfg: GeneratorConfig):
    if cfg.products < 1 or cfg.days < 1 or cfg.periods_per_day < 1:
        raise ValueError("products, days and periods_per_day must be positive")
    if len(cfg.day_of_week) != 7 or len(cfg.time_of_day) != cfg.periods_per_day:
        raise ValueError("need 7 day-of-week and periods_per_day time-of-day multipliers")
    if np.any(cfg.rates() < 0) or min(cfg.day_of_week) < 0 or min(cfg.time_of_day) < 0:
        raise ValueError("rates and multipliers must be non-negative")
    if not 0 <= cfg.outlier_prob <= 1:
        raise ValueError("outlier probability must lie in [0, 1]")


def generate_orders(cfg: GeneratorConfig) -> OrderLog:
    """Poisson counts with weekly and intraday seasonality and rare bursts."""
    _validate_generator(cfg)
    rng = np.random.default_rng([cfg.seed, 2])
    n = cfg.days * cfg.periods_per_day
    t = np.arange(n)
    weekday = (cfg.start.weekday() + t // cfg.periods_per_day) % 7
    mult = np.asarray(cfg.day_of_week)[weekday] * np.asarray(cfg.time_of_day)[t % cfg.periods_per_day]
    lam = mult[:, None] * cfg.rates()[None, :]
    burst = rng.random(lam.shape) < cfg.outlier_prob
    lo, hi = cfg.outlier_scale
    lam = np.where(burst, lam * rng.uniform(lo, hi, size=lam.shape), lam)
    counts = rng.poisson(lam)
    ids = [f"P{i:03d}" for i in range(cfg.products)]
    return OrderLog(ids, counts, cfg.start, cfg.periods_per_day)


def generate_metadata(product_ids, base_rates, seed: int = 0, fill_periods=(8.0, 16.0), threshold: float = 0.1):
    """Synthetic metadata rows sized so one shelf covers a few days of demand."""
    rng = np.random.default_rng([seed, 3])
    p = len(product_ids)
    rows = []
    spoil = np.exp(rng.uniform(np.log(0.005), np.log(0.1), size=p))
    shelf = np.maximum(1, np.round(np.asarray(base_rates) * rng.uniform(*fill_periods, size=p)))
    vol = rng.uniform(0.5, 2.0, size=p)
    wgt = rng.uniform(0.2, 3.0, size=p)
    for i, pid in enumerate(product_ids):
        rows.append(
            {
                "product_id": pid,
                "label": f"item-{i}",
                "unit_volume": float(vol[i]),
                "unit_weight": float(wgt[i]),
                "shelf_capacity_units": float(shelf[i]),
                "spoilage_rate": float(spoil[i]),
                "threshold": threshold,
            }
        )
    return rows


def parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def write_orders_csv(log_: OrderLog, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ORDER_COLUMNS)
        for pid, ts in log_.records():
            w.writerow([pid, format_timestamp(ts)])


def ingest_csv(
    path,
    seed: int = 0,
    start: datetime = None,
    days: int = None,
    periods_per_day: int = PERIODS_PER_DAY,
    product_ids=None,
) -> OrderLog:
    """Read either timestamped orders or the customer-level source schema.

    The source schema carries no calendar dates. Each customer's first
    order gets a date drawn uniformly from the horizon days with the given
    weekday (0 = Monday); later orders follow by ``days_since_prior``. Rows
    of one customer sharing weekday and gap form one order. The period
    within the day is drawn uniformly.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or all(not r for r in rows):
        log.warning("order file %s is empty", path)
        return _aggregate([], start, days, periods_per_day, product_ids)
    header = tuple(c.strip() for c in rows[0])
    body = rows[1:]
    if header == ORDER_COLUMNS:
        events = _read_timestamped(body)
    elif header == SOURCE_COLUMNS:
        events = _read_source(body, seed, start or DEFAULT_START, days or 349, periods_per_day)
    else:
        raise DataFormatError(f"{path}: unrecognized header {list(header)}")
    return _aggregate(events, start, days, periods_per_day, product_ids)


def _read_timestamped(body):
    events, errors = [], []
    for lineno, row in enumerate(body, start=2):
        if not row:
            continue
        try:
            if len(row) != 2 or not row[0].strip():
                raise ValueError("expected product_id,timestamp")
            events.append((row[0].strip(), parse_timestamp(row[1])))
        except ValueError as exc:
            errors.append(f"line {lineno}: {exc}")
    if errors:
        raise DataFormatError("malformed order rows:\n" + "\n".join(errors))
    return events


def _read_source(body, seed, start, days, periods_per_day):
    rng = np.random.default_rng(seed)
    errors = []
    parsed = []
    for lineno, row in enumerate(body, start=2):
        if not row:
            continue
        try:
            if len(row) != 4:
                raise ValueError("expected 4 columns")
            cust, pid, dow, gap = (c.strip() for c in row)
            dow = int(dow)
            if not 0 <= dow <= 6:
                raise ValueError(f"day_of_week {dow} outside 0..6")
            gap = None if gap in ("", "nan", "NaN") else float(gap)
            if gap is not None and gap < 0:
                raise ValueError("negative days_since_prior")
            parsed.append((cust, pid, dow, gap))
        except ValueError as exc:
            errors.append(f"line {lineno}: {exc}")
    if errors:
        raise DataFormatError("malformed source rows:\n" + "\n".join(errors))

    period = timedelta(days=1) / periods_per_day
    events = []
    state = {}  # customer -> (date of current order, its key, its period slot)
    for cust, pid, dow, gap in parsed:
        key = (dow, gap)
        if cust not in state:
            candidates = [d for d in range(days) if (start + timedelta(days=d)).weekday() == dow]
            day = start + timedelta(days=int(rng.choice(candidates)))
            state[cust] = (day, key, int(rng.integers(periods_per_day)))
        else:
            day, prev_key, slot = state[cust]
            if key != prev_key:
                day = day + timedelta(days=gap or 0.0)
                day = day.replace(hour=0, minute=0, second=0, microsecond=0)
                slot = int(rng.integers(periods_per_day))
                state[cust] = (day, key, slot)
        day, _, slot = state[cust]
        events.append((pid, day + slot * period))
    return events


def _aggregate(events, start, days, periods_per_day, product_ids):
    if start is None:
        first = min(ts for _, ts in events) if events else DEFAULT_START
        start = first.replace(hour=0, minute=0, second=0, microsecond=0)
    ids = list(product_ids) if product_ids is not None else sorted({pid for pid, _ in events})
    index = {pid: i for i, pid in enumerate(ids)}
    period = timedelta(days=1) / periods_per_day
    slots = [math.floor((ts - start) / period) for _, ts in events]
    if days is None:
        n = (max(slots) // periods_per_day + 1) * periods_per_day if slots else 0
    else:
        n = days * periods_per_day
    counts = np.zeros((n, len(ids)), dtype=np.int64)
    dropped = 0
    for (pid, _), t in zip(events, slots):
        if pid not in index or not 0 <= t < n:
            dropped += 1
            continue
        counts[t, index[pid]] += 1
    if dropped:
        log.warning("dropped %d orders outside the horizon or product set", dropped)
    return OrderLog(ids, counts, start, periods_per_day)


def write_metadata_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METADATA_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in METADATA_COLUMNS})


def read_metadata_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(METADATA_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise DataFormatError(f"{path}: missing metadata columns {sorted(missing)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append(
                    {
                        "product_id": row["product_id"].strip(),
                        "label": row["label"],
                        **{
                            k: float(row[k])
                            for k in METADATA_COLUMNS
                            if k not in ("product_id", "label")
                        },
                    }
                )
            except (TypeError, ValueError) as exc:
                raise DataFormatError(f"{path}: line {lineno}: {exc}") from None
    return rows


def assign_metadata(product_ids, rows):
    """Build the catalog in ``product_ids`` order.

    Returns ``(catalog, shelf_capacity_units)``. Volume and weight become
    per-shelf multipliers so they apply directly to normalized quantities.
    """
    by_id = {}
    for row in rows:
        pid = str(row["product_id"])
        if pid in by_id:
            raise ValueError(f"duplicate product id {pid!r} in metadata")
        by_id[pid] = row
    missing = [pid for pid in product_ids if pid not in by_id]
    if missing:
        raise ValueError(f"no metadata for products {missing[:5]}{'...' if len(missing) > 5 else ''}")
    sel = [by_id[pid] for pid in product_ids]
    shelf = np.array([r["shelf_capacity_units"] for r in sel], dtype=np.float64)
    unit_v = np.array([r["unit_volume"] for r in sel], dtype=np.float64)
    unit_c = np.array([r["unit_weight"] for r in sel], dtype=np.float64)
    if np.any(shelf <= 0) or np.any(unit_v <= 0) or np.any(unit_c <= 0):
        raise ValueError("volume, weight and shelf capacity must be positive")
    catalog = ProductCatalog(
        spoilage_rate=[r["spoilage_rate"] for r in sel],
        unit_volume=unit_v * shelf,
        unit_weight=unit_c * shelf,
        threshold=[r["threshold"] for r in sel],
        product_ids=tuple(product_ids),
    )
    return catalog, shelf


def split(log_: OrderLog, cfg: SplitConfig):
    """Contiguous prefix for training, suffix for testing."""
    if cfg.train_periods <= 0:
        raise ValueError("training split is empty")
    if cfg.test_periods < 0 or cfg.train_periods + cfg.test_periods != log_.n_periods:
        raise ValueError(
            f"split {cfg.train_periods}+{cfg.test_periods} does not cover {log_.n_periods} periods"
        )
    return log_.slice(0, cfg.train_periods), log_.slice(cfg.train_periods, log_.n_periods)


def calibrate_capacity(orders, catalog: ProductCatalog, tightness: float = 0.9, alpha: float = 0.5, gamma: float = 0.99) -> CapacityConfig:
    """Capacity at ``tightness`` times the mean per-period order volume and weight."""
    W = np.atleast_2d(np.asarray(orders, dtype=np.float64))
    if W.shape[0] == 0:
        raise ValueError("cannot calibrate capacity on an empty log")
    vol = float(np.mean(W @ catalog.unit_volume))
    wgt = float(np.mean(W @ catalog.unit_weight))
    if vol <= 0 or wgt <= 0:
        raise ValueError("cannot calibrate capacity on a log without orders")
    return CapacityConfig(tightness * vol, tightness * wgt, alpha, gamma)
