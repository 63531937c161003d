"""Time, tick, volume and dollar bars over a trade sequence."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass

import numpy as np

from .ingest import EventType, MergedStream
from .preprocess import MarketOrders


class BarKind(str, enum.Enum):
    TIME = "time"
    TICK = "tick"
    VOLUME = "volume"
    DOLLAR = "dollar"


@dataclass(frozen=True)
class Trades:
    """Trade columns. ``notional`` is price * size in 1e-4 dollars * shares;
    ``mid`` is the mid-price (1e-4 dollars) when the trade arrived."""

    time: np.ndarray
    size: np.ndarray
    notional: np.ndarray
    mid: np.ndarray

    def __post_init__(self):
        n = len(self.time)
        if not all(len(a) == n for a in (self.size, self.notional, self.mid)):
            raise ValueError("trade columns must have equal length")
        if n and (np.asarray(self.size) <= 0).any():
            raise ValueError("trade sizes must be positive")

    def __len__(self) -> int:
        return len(self.time)

    @property
    def price(self) -> np.ndarray:
        return self.notional / self.size

    @classmethod
    def from_arrays(cls, time, size, price, mid=None) -> Trades:
        size = np.asarray(size, dtype=np.int64)
        price = np.asarray(price, dtype=np.int64)
        mid = price.astype(float) if mid is None else np.asarray(mid, dtype=float)
        return cls(np.asarray(time, dtype=np.int64), size, size * price, mid)

    @classmethod
    def from_orders(cls, orders: MarketOrders) -> Trades:
        return cls(orders.time, orders.total_size, orders.notional, orders.mid_before)

    @classmethod
    def from_stream(cls, stream: MergedStream) -> Trades:
        """Every execution row (type 4/5) as one trade."""
        ev = stream.events
        idx = np.flatnonzero((ev.event_type == EventType.EXEC_VISIBLE) | (ev.event_type == EventType.EXEC_HIDDEN))
        mid = stream.book.mid()[np.maximum(idx - 1, 0)]
        return cls(ev.time[idx], ev.size[idx], ev.size[idx] * ev.price[idx], mid)


@dataclass(frozen=True)
class Bar:
    start_time: int
    end_time: int
    open: float
    high: float
    low: float
    close: float
    traded_volume: int
    traded_dollar: int
    n_events: int
    vwap: float
    partial: bool = False
    first_index: int = 0


def _threshold_bar_ids(weights: np.ndarray, threshold) -> tuple[np.ndarray, bool]:
    """Close a bar at the first trade whose cumulative weight reaches the
    threshold; the counter then restarts from zero."""
    ids = np.empty(len(weights), dtype=np.int64)
    bar = 0
    acc = 0
    for i, w in enumerate(weights.tolist()):
        ids[i] = bar
        acc += w
        if acc >= threshold:
            bar += 1
            acc = 0
    return ids, acc > 0


def sample_bars(trades: Trades, kind, threshold) -> list[Bar]:
    """Aggregate trades into bars.

    ``threshold`` is a duration in ns for time bars, a trade count for tick
    bars, shares for volume bars and 1e-4 dollars * shares for dollar bars.
    Trades are never split; a trailing bar that did not reach the threshold
    is returned with ``partial=True``. Empty time buckets produce no bar.
    """
    kind = BarKind(kind)
    if not threshold > 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    n = len(trades)
    if n == 0:
        return []
    partial_tail = False
    if kind is BarKind.TIME:
        bucket = np.asarray(trades.time) // int(threshold)
        ids = np.concatenate([[0], np.cumsum(np.diff(bucket) != 0)])
    elif kind is BarKind.TICK:
        if int(threshold) != threshold:
            raise ValueError("tick threshold must be an integer")
        ids = np.arange(n) // int(threshold)
        partial_tail = n % int(threshold) != 0
    elif kind is BarKind.VOLUME:
        ids, partial_tail = _threshold_bar_ids(np.asarray(trades.size), threshold)
    else:
        ids, partial_tail = _threshold_bar_ids(np.asarray(trades.notional), threshold)

    starts = np.flatnonzero(np.concatenate([[True], np.diff(ids) != 0]))
    ends = np.append(starts[1:], n)
    mid = np.asarray(trades.mid, dtype=float)
    volume = np.add.reduceat(np.asarray(trades.size, dtype=np.int64), starts)
    dollar = np.add.reduceat(np.asarray(trades.notional, dtype=np.int64), starts)
    high = np.maximum.reduceat(mid, starts)
    low = np.minimum.reduceat(mid, starts)
    bars = []
    for j, (s, e) in enumerate(zip(starts.tolist(), ends.tolist())):
        bars.append(
            Bar(
                start_time=int(trades.time[s]),
                end_time=int(trades.time[e - 1]),
                open=float(mid[s]),
                high=float(high[j]),
                low=float(low[j]),
                close=float(mid[e - 1]),
                traded_volume=int(volume[j]),
                traded_dollar=int(dollar[j]),
                n_events=e - s,
                vwap=int(dollar[j]) / int(volume[j]),
                partial=bool(partial_tail and j == len(starts) - 1),
                first_index=s,
            )
        )
    return bars


def bars_to_rows(bars: list[Bar]) -> list[dict]:
    return [asdict(b) for b in bars]
