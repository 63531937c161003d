"""Session clipping, market-order reconstruction, outlier removal and volume
normalisation."""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .ingest import DAY_NS, NS_PER_SECOND, EventType, MergedStream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SessionWindow:
    """Half-open trading window ``[start, end)`` in seconds after midnight."""

    start: float = 10.5 * 3600
    end: float = 15 * 3600

    def __post_init__(self):
        if not 0 <= self.start < self.end <= 86_400:
            raise ValueError(f"invalid session window [{self.start}, {self.end})")

    @classmethod
    def from_hhmm(cls, start: str, end: str) -> SessionWindow:
        return cls(_hhmm_seconds(start), _hhmm_seconds(end))

    @property
    def start_ns(self) -> int:
        return round(self.start * NS_PER_SECOND)

    @property
    def end_ns(self) -> int:
        return round(self.end * NS_PER_SECOND)


def _hhmm_seconds(text: str) -> float:
    parts = text.strip().split(":")
    if not 2 <= len(parts) <= 3:
        raise ValueError(f"expected HH:MM, got {text!r}")
    h, m = int(parts[0]), int(parts[1])
    s = float(parts[2]) if len(parts) == 3 else 0.0
    if not (0 <= h <= 24 and 0 <= m < 60 and 0 <= s < 60):
        raise ValueError(f"expected HH:MM, got {text!r}")
    return h * 3600 + m * 60 + s


def clip_session(stream: MergedStream, window: SessionWindow = SessionWindow()) -> MergedStream:
    t = stream.events.time
    if len(t) < 2 or (t[1:] >= t[:-1]).all():
        # time-ordered streams clip to a contiguous slice of views
        lo, hi = np.searchsorted(t, [window.start_ns, window.end_ns], side="left")
        return stream.take(slice(int(lo), int(hi)))
    keep = (t >= window.start_ns) & (t < window.end_ns)
    return stream.take(keep)


@dataclass(frozen=True)
class MarketOrder:
    time: int
    sign: int
    total_size: int
    n_fills: int
    contains_hidden: bool
    price_changing: bool
    mid_before: float
    mid_after_next: float
    spread_before: int
    opposite_best_volume_before: int
    notional: int = 0
    last_of_day: bool = False


_MO_FIELDS = (
    "time",
    "sign",
    "total_size",
    "n_fills",
    "contains_hidden",
    "price_changing",
    "mid_before",
    "mid_after_next",
    "spread_before",
    "opposite_best_volume_before",
    "notional",
    "last_of_day",
)


class MarketOrders(Sequence):
    """Columnar sequence of reconstructed market orders for one trading day.

    ``mid_before``/``mid_after_next`` are in 1e-4 dollars; ``notional`` is the
    sum of fill price times size. ``first_row``/``last_row`` index the source
    stream when the table came from ``reconstruct_market_orders``.
    """

    def __init__(
        self,
        time,
        sign,
        total_size,
        mid_before,
        mid_after_next,
        n_fills=None,
        contains_hidden=None,
        spread_before=None,
        opposite_best_volume_before=None,
        notional=None,
        last_of_day=None,
        first_row=None,
        last_row=None,
        date: str = "",
    ):
        n = len(time)
        self.time = np.asarray(time, dtype=np.int64)
        self.sign = np.asarray(sign, dtype=np.int8)
        self.total_size = np.asarray(total_size, dtype=np.int64)
        self.mid_before = np.asarray(mid_before, dtype=np.float64)
        self.mid_after_next = np.asarray(mid_after_next, dtype=np.float64)
        self.n_fills = np.ones(n, np.int64) if n_fills is None else np.asarray(n_fills, dtype=np.int64)
        self.contains_hidden = (
            np.zeros(n, bool) if contains_hidden is None else np.asarray(contains_hidden, dtype=bool)
        )
        self.spread_before = np.zeros(n, np.int64) if spread_before is None else np.asarray(spread_before, np.int64)
        self.opposite_best_volume_before = (
            np.zeros(n, np.int64)
            if opposite_best_volume_before is None
            else np.asarray(opposite_best_volume_before, np.int64)
        )
        self.notional = np.zeros(n, np.int64) if notional is None else np.asarray(notional, np.int64)
        if last_of_day is None:
            last_of_day = np.zeros(n, bool)
            if n:
                last_of_day[-1] = True
        self.last_of_day = np.asarray(last_of_day, dtype=bool)
        self.first_row = None if first_row is None else np.asarray(first_row, np.int64)
        self.last_row = None if last_row is None else np.asarray(last_row, np.int64)
        self.date = date
        for name in _MO_FIELDS:
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has length {len(getattr(self, name))}, expected {n}")
        if n and not np.isin(self.sign, (-1, 1)).all():
            raise ValueError("market order sign must be +1 or -1")

    @property
    def price_changing(self) -> np.ndarray:
        return self.total_size >= self.opposite_best_volume_before

    def mid_path(self) -> np.ndarray:
        """Mid before each order followed by the mid after the last: length n+1."""
        if len(self) == 0:
            return np.empty(0)
        return np.append(self.mid_before, self.mid_after_next[-1])

    def __len__(self) -> int:
        return len(self.time)

    def __getitem__(self, i):
        if isinstance(i, (slice, np.ndarray)):
            return self.take(i)
        return MarketOrder(
            int(self.time[i]),
            int(self.sign[i]),
            int(self.total_size[i]),
            int(self.n_fills[i]),
            bool(self.contains_hidden[i]),
            bool(self.price_changing[i]),
            float(self.mid_before[i]),
            float(self.mid_after_next[i]),
            int(self.spread_before[i]),
            int(self.opposite_best_volume_before[i]),
            int(self.notional[i]),
            bool(self.last_of_day[i]),
        )

    def take(self, index) -> MarketOrders:
        cols = {name: getattr(self, name)[index] for name in _MO_FIELDS if name != "price_changing"}
        rows = {
            k: (None if getattr(self, k) is None else getattr(self, k)[index]) for k in ("first_row", "last_row")
        }
        return MarketOrders(**cols, **rows, date=self.date)

    @classmethod
    def from_orders(cls, orders, date: str = "") -> MarketOrders:
        orders = list(orders)
        cols = {name: [getattr(o, name) for o in orders] for name in _MO_FIELDS if name != "price_changing"}
        return cls(**cols, date=date)

    @classmethod
    def empty(cls, date: str = "") -> MarketOrders:
        return cls([], [], [], [], [], date=date)


def reconstruct_market_orders(stream: MergedStream) -> MarketOrders:
    """Group same-timestamp executions into market orders.

    Adjacent rows of type 4/5 that share timestamp and direction form one
    order whose sign is opposite to the executed limit orders' direction.
    Cross trades (type 6) are ignored. An order whose first fill is the very
    first row of the stream has no pre-trade book and is dropped.
    """
    ev, book = stream.events, stream.book
    etype = ev.event_type
    is_exec = (etype == EventType.EXEC_VISIBLE) | (etype == EventType.EXEC_HIDDEN)
    idx = np.flatnonzero(is_exec)
    if idx.size == 0:
        return MarketOrders.empty(stream.metadata.date)

    direction = ev.direction[idx].astype(np.int64)
    bad = np.flatnonzero(np.abs(direction) != 1)
    if bad.size:
        raise ValueError(f"execution at row {int(idx[bad[0]])} has direction {int(direction[bad[0]])}")
    t = ev.time[idx]

    new_group = np.ones(idx.size, dtype=bool)
    new_group[1:] = ~((np.diff(idx) == 1) & (np.diff(t) == 0) & (np.diff(direction) == 0))
    starts = np.flatnonzero(new_group)
    ends = np.append(starts[1:] - 1, idx.size - 1)
    first_row = idx[starts]
    last_row = idx[ends]

    size = ev.size[idx]
    total_size = np.add.reduceat(size, starts)
    notional = np.add.reduceat(size * ev.price[idx], starts)
    hidden = np.logical_or.reduceat(etype[idx] == EventType.EXEC_HIDDEN, starts)
    n_fills = np.diff(np.append(starts, idx.size))
    sign = -direction[starts]

    ask, bid = book.ask, book.bid
    next_first = np.append(first_row[1:], -1)
    after_row = np.where(next_first >= 0, next_first - 1, last_row)
    last_of_day = next_first < 0

    keep = first_row > 0
    if not keep.all():
        logger.warning("dropping market order at row 0: no pre-trade book state")
    pre = np.maximum(first_row - 1, 0)
    opposite = np.where(sign > 0, book.ask_volume[pre, 0], book.bid_volume[pre, 0])
    mid_pre = (ask[pre] + bid[pre]) / 2.0
    mid_after = (ask[after_row] + bid[after_row]) / 2.0

    return MarketOrders(
        time=t[starts][keep],
        sign=sign[keep],
        total_size=total_size[keep],
        mid_before=mid_pre[keep],
        mid_after_next=mid_after[keep],
        n_fills=n_fills[keep],
        contains_hidden=hidden[keep],
        spread_before=(ask[pre] - bid[pre])[keep],
        opposite_best_volume_before=opposite[keep],
        notional=notional[keep],
        last_of_day=last_of_day[keep],
        first_row=first_row[keep],
        last_row=last_row[keep],
        date=stream.metadata.date,
    )


def outlier_mask(samples, k: float = 3.0) -> np.ndarray:
    """True where ``|x - mean| <= k * std`` (population std)."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("samples must be one-dimensional")
    if x.size < 2:
        raise ValueError("need at least 2 samples to estimate a standard deviation")
    mean = math.fsum(x) / x.size
    std = math.sqrt(math.fsum((x - mean) ** 2) / x.size)
    return np.abs(x - mean) <= k * std


def remove_outliers(samples, k: float = 3.0) -> tuple[np.ndarray, int]:
    x = np.asarray(samples, dtype=np.float64)
    keep = outlier_mask(x, k)
    return x[keep], int(x.size - keep.sum())


def joint_outlier_mask(*columns, k: float = 3.0) -> np.ndarray:
    """Keep rows that are within ``k`` std on every column."""
    keep = np.ones(len(columns[0]), dtype=bool)
    for col in columns:
        keep &= outlier_mask(col, k)
    return keep


def mean_opposite_best_volume(orders: MarketOrders) -> float:
    if len(orders) == 0:
        raise ValueError("no market orders")
    return float(np.mean(orders.opposite_best_volume_before))


def normalize_volumes(orders: MarketOrders, mean_best_volume: float | None = None) -> np.ndarray:
    """MO size divided by the day's mean opposite-side best volume."""
    if mean_best_volume is None:
        mean_best_volume = mean_opposite_best_volume(orders)
    if not mean_best_volume > 0:
        raise ValueError(f"mean best volume must be positive, got {mean_best_volume}")
    return orders.total_size / mean_best_volume


def normalize_volumes_by_day(days: Mapping[str, MarketOrders]) -> dict[str, np.ndarray]:
    out = {}
    for day, orders in days.items():
        if len(orders) == 0:
            logger.warning("day %s has no market orders; skipped", day)
            continue
        out[day] = normalize_volumes(orders)
    return out


__all__ = [
    "DAY_NS",
    "MarketOrder",
    "MarketOrders",
    "SessionWindow",
    "clip_session",
    "joint_outlier_mask",
    "mean_opposite_best_volume",
    "normalize_volumes",
    "normalize_volumes_by_day",
    "outlier_mask",
    "reconstruct_market_orders",
    "remove_outliers",
]
