"""Synthetic ground-truth data: a zero-intelligence order book simulator and a
linear-impact ("Kyle world") market-order generator.

All randomness comes from ``numpy.random.Generator(PCG64(seed))``; a given
seed and numpy version reproduce identical output on every platform.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import (
    DUMMY_ASK_PRICE,
    DUMMY_BID_PRICE,
    NS_PER_SECOND,
    BookTable,
    EventTable,
    MergedStream,
    StreamMetadata,
    emit_lobster_files,
)
from .preprocess import MarketOrders

logger = logging.getLogger(__name__)

BUY, SELL = 1, -1


class SimulationHalted(RuntimeError):
    """One side of the simulated book ran out of liquidity."""

    def __init__(self, side: int, time_ns: int):
        self.side = side
        self.time_ns = time_ns
        name = "bid" if side == BUY else "ask"
        super().__init__(f"{name} side of the book emptied at t={time_ns / NS_PER_SECOND:.9f} s")


@dataclass(frozen=True)
class ZiConfig:
    """Zero-intelligence parameters. Rates are events per second.

    Defaults are illustrative, not calibrated: a $100 stock with a one-cent
    tick, 100-share lots and a one-minute session starting 10:30.
    """

    lo_rate: float = 1.0
    mo_rate: float = 0.2
    cancel_rate: float = 0.5
    tick: int = 100
    lot: int = 100
    initial_mid: int = 1_000_000
    depth: int = 1
    band: int = 20
    initial_levels: int = 10
    max_lo_lots: int = 5
    session_start: float = 37_800.0
    session_end: float = 37_860.0
    seed: int = 0
    ticker: str = "ZISIM"
    date: str = "2015-01-02"

    def __post_init__(self):
        rates = (self.lo_rate, self.mo_rate, self.cancel_rate)
        if min(rates) < 0 or sum(rates) <= 0:
            raise ValueError("rates must be non-negative with at least one positive")
        if self.tick <= 0 or self.lot <= 0:
            raise ValueError("tick and lot must be positive")
        if self.initial_mid % self.tick:
            raise ValueError("initial_mid must lie on the tick grid")
        if self.depth < 1 or self.band < 1 or self.initial_levels < 1 or self.max_lo_lots < 1:
            raise ValueError("depth, band, initial_levels and max_lo_lots must be >= 1")
        if not 0 <= self.session_start < self.session_end <= 86_400:
            raise ValueError("invalid session window")


class _Book:
    """Price-time priority book: price -> FIFO of [order_id, size].

    Level totals and per-order sizes are kept alongside the queues so a
    snapshot never has to walk them.
    """

    def __init__(self):
        self.levels = {BUY: {}, SELL: {}}
        self.volume = {BUY: {}, SELL: {}}
        self.orders: dict[int, tuple[int, int]] = {}
        self.sizes: dict[int, int] = {}

    def best(self, side: int) -> int | None:
        prices = self.levels[side]
        if not prices:
            return None
        return max(prices) if side == BUY else min(prices)

    def add(self, oid: int, side: int, price: int, size: int) -> None:
        self.levels[side].setdefault(price, deque()).append([oid, size])
        vol = self.volume[side]
        vol[price] = vol.get(price, 0) + size
        self.orders[oid] = (side, price)
        self.sizes[oid] = size

    def reduce(self, oid: int, amount: int) -> None:
        side, price = self.orders[oid]
        queue = self.levels[side][price]
        for entry in queue:
            if entry[0] == oid:
                entry[1] -= amount
                if entry[1] == 0:
                    queue.remove(entry)
                    del self.orders[oid], self.sizes[oid]
                else:
                    self.sizes[oid] = entry[1]
                break
        self.volume[side][price] -= amount
        if not queue:
            del self.levels[side][price], self.volume[side][price]

    def size_of(self, oid: int) -> int:
        return self.sizes[oid]

    def snapshot(self, depth: int) -> list[int]:
        ask_vol, bid_vol = self.volume[SELL], self.volume[BUY]
        asks = sorted(ask_vol)[:depth]
        bids = sorted(bid_vol, reverse=True)[:depth]
        row = []
        for k in range(depth):
            row += [asks[k], ask_vol[asks[k]]] if k < len(asks) else [DUMMY_ASK_PRICE, 0]
            row += [bids[k], bid_vol[bids[k]]] if k < len(bids) else [DUMMY_BID_PRICE, 0]
        return row


def generate_zero_intelligence(config: ZiConfig = ZiConfig()) -> MergedStream:
    """Simulate Poisson limit-order, market-order and cancellation flow.

    Limit orders land uniformly on ``1..band`` ticks behind the opposite best
    quote (so they never cross), market orders take one lot from the front
    of the best opposite queue, and cancellations hit a uniformly chosen
    resting order, partially (type 2) or fully (type 3). The pre-session book
    is seeded but not emitted.
    """
    cfg = config
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    book = _Book()
    next_id = 1
    half = cfg.initial_mid // cfg.tick
    for k in range(cfg.initial_levels):
        for side, price in ((SELL, (half + 1 + k) * cfg.tick), (BUY, (half - 1 - k) * cfg.tick)):
            lots = int(rng.integers(1, cfg.max_lo_lots + 1))
            book.add(next_id, side, price, lots * cfg.lot)
            next_id += 1

    total = cfg.lo_rate + cfg.mo_rate + cfg.cancel_rate
    cum = np.cumsum([cfg.lo_rate, cfg.mo_rate, cfg.cancel_rate]) / total
    # a zero rate must never be drawn, whatever the rounding of the cumulative sums
    lo_cut = math.inf if cfg.mo_rate == cfg.cancel_rate == 0 else float(cum[0])
    mo_cut = math.inf if cfg.cancel_rate == 0 else float(cum[1])
    start_ns = round(cfg.session_start * NS_PER_SECOND)
    end_ns = round(cfg.session_end * NS_PER_SECOND)
    elapsed = 0.0
    events: list[tuple] = []
    snaps: list[list[int]] = []

    while True:
        elapsed += rng.exponential(1.0 / total)
        t = start_ns + round(elapsed * NS_PER_SECOND)
        if t >= end_ns:
            break
        u = rng.random()
        kind = 0 if u < lo_cut else 1 if u < mo_cut else 2
        if kind == 0:
            side = BUY if rng.integers(2) == 0 else SELL
            offset = int(rng.integers(1, cfg.band + 1)) * cfg.tick
            price = book.best(SELL) - offset if side == BUY else book.best(BUY) + offset
            size = int(rng.integers(1, cfg.max_lo_lots + 1)) * cfg.lot
            book.add(next_id, side, price, size)
            events.append((t, 1, next_id, size, price, side))
            next_id += 1
        elif kind == 1:
            resting_side = SELL if rng.integers(2) == 0 else BUY  # a buy MO hits the asks
            price = book.best(resting_side)
            oid, avail = book.levels[resting_side][price][0]
            size = min(cfg.lot, avail)
            book.reduce(oid, size)
            events.append((t, 4, oid, size, price, resting_side))
        else:
            live = list(book.orders)
            oid = live[int(rng.integers(len(live)))]
            side, price = book.orders[oid]
            size = book.size_of(oid)
            if size > cfg.lot and rng.random() < 0.5:
                amount = int(rng.integers(1, size // cfg.lot)) * cfg.lot
                book.reduce(oid, amount)
                events.append((t, 2, oid, amount, price, side))
            else:
                book.reduce(oid, size)
                events.append((t, 3, oid, size, price, side))
        for side in (BUY, SELL):
            if not book.levels[side]:
                raise SimulationHalted(side, t)
        snaps.append(book.snapshot(cfg.depth))

    return _to_stream(events, snaps, cfg.depth, StreamMetadata(cfg.ticker, cfg.date, cfg.depth, 9))


def _to_stream(events, snaps, depth, metadata) -> MergedStream:
    if events:
        cols = list(zip(*events))
        mat = np.asarray(snaps, dtype=np.int64).reshape(-1, depth, 4)
    else:
        cols = [()] * 6
        mat = np.empty((0, depth, 4), dtype=np.int64)
    ev = EventTable(*cols)
    ev.time_digits = metadata.time_digits
    book = BookTable(mat[:, :, 0], mat[:, :, 1], mat[:, :, 2], mat[:, :, 3])
    return MergedStream(ev, book, metadata)


def lobster_file_names(ticker: str, date: str) -> tuple[str, str]:
    return f"{ticker}_{date}_message.csv", f"{ticker}_{date}_orderbook.csv"


def write_lobster_files(stream: MergedStream, out_dir) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    msg_name, book_name = lobster_file_names(stream.metadata.ticker or "SYN", stream.metadata.date or "1970-01-01")
    msg, book = emit_lobster_files(stream)
    msg_path, book_path = out_dir / msg_name, out_dir / book_name
    msg_path.write_bytes(msg)
    book_path.write_bytes(book)
    return msg_path, book_path


# --------------------------------------------------------------------------
# Kyle world


@dataclass(frozen=True)
class KyleWorldConfig:
    """Linear impact ground truth: each order moves the mid by
    ``true_lambda * sign * size`` cents plus N(0, noise_std^2) cents."""

    true_lambda: float = 0.5
    size_min: int = 1
    size_max: int = 100
    noise_std: float = 1.0
    n_mo: int = 50_000
    seed: int = 0
    initial_mid: float = 1_000_000.0
    spread: int = 100
    start: float = 37_801.0
    interval: float = 0.25
    ticker: str = "KYLE"
    date: str = "2015-01-02"

    def __post_init__(self):
        if self.true_lambda < 0 or self.noise_std < 0:
            raise ValueError("true_lambda and noise_std must be non-negative")
        if not 1 <= self.size_min <= self.size_max:
            raise ValueError("need 1 <= size_min <= size_max")
        if self.n_mo < 0 or self.spread <= 0 or self.spread % 2:
            raise ValueError("n_mo must be >= 0 and spread a positive even number of price units")


def generate_kyle_world(config: KyleWorldConfig = KyleWorldConfig()) -> MarketOrders:
    cfg = config
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    n = cfg.n_mo
    sign = rng.integers(0, 2, size=n) * 2 - 1
    size = rng.integers(cfg.size_min, cfg.size_max + 1, size=n)
    noise = rng.normal(0.0, cfg.noise_std, size=n) if cfg.noise_std > 0 else np.zeros(n)
    step_cents = cfg.true_lambda * sign * size + noise
    path = cfg.initial_mid + np.concatenate([[0.0], np.cumsum(step_cents * 100.0)])
    time = round(cfg.start * NS_PER_SECOND) + np.arange(n, dtype=np.int64) * round(cfg.interval * NS_PER_SECOND)
    mid_before = path[:-1]
    touch = np.rint(mid_before + sign * cfg.spread / 2).astype(np.int64)
    return MarketOrders(
        time=time,
        sign=sign,
        total_size=size,
        mid_before=mid_before,
        mid_after_next=path[1:],
        spread_before=np.full(n, cfg.spread),
        opposite_best_volume_before=np.full(n, 10 * cfg.size_max),
        notional=touch * size,
        date=cfg.date,
    )


def kyle_world_to_stream(orders: MarketOrders, spread: int = 100, ticker: str = "KYLE", depth_volume=None) -> MergedStream:
    """Embed market orders in a LOBSTER-shaped stream.

    Mids are rounded to whole price units. Each order becomes an execution
    against the opposite best quote followed, 1 us later, by a limit order
    that re-centres both quotes on the next mid. The embedding reproduces the
    mids and sizes of ``orders`` after reconstruction; it is not a
    mechanically consistent book.
    """
    if spread <= 0 or spread % 2:
        raise ValueError("spread must be a positive even number of price units")
    n = len(orders)
    half = spread // 2
    vol = int(depth_volume or max(10 * int(orders.total_size.max(initial=1)), 100))
    mids = np.rint(orders.mid_path()).astype(np.int64) if n else np.empty(0, np.int64)
    events, snaps = [], []
    if n:
        t0 = int(orders.time[0]) - 1000
        events.append((t0, 1, 1, vol, int(mids[0] - half), BUY))
        snaps.append([mids[0] + half, vol, mids[0] - half, vol])
    oid = 2
    for i in range(n):
        t = int(orders.time[i])
        s = int(orders.sign[i])
        q = int(orders.total_size[i])
        m, m_next = int(mids[i]), int(mids[i + 1])
        if s == BUY:
            events.append((t, 4, oid - 1, q, m + half, SELL))
            snaps.append([m + half, vol - q, m - half, vol])
        else:
            events.append((t, 4, oid - 1, q, m - half, BUY))
            snaps.append([m + half, vol, m - half, vol - q])
        events.append((t + 1000, 1, oid, vol, m_next - half, BUY))
        snaps.append([m_next + half, vol, m_next - half, vol])
        oid += 1
    return _to_stream(events, snaps, 1, StreamMetadata(ticker, orders.date, 1, 9))
