"""Shared data builders for the test suite."""

from __future__ import annotations

import numpy as np
import polars as pl

from lobimpact.ingest import StreamMetadata, merge_streams, parse_message_file, parse_orderbook_file
from lobimpact.preprocess import MarketOrders

# Ten-row sample day around a price-changing sell order. Level-1 book after
# each message; the last book row follows from the final sell submission.
SAMPLE_MESSAGES = b"""\
43955.2422,4,140339446,5,2158800,1
43955.2426,4,140339446,10,2158800,1
43955.2426,4,140339446,75,2158800,1
43955.2426,3,140339455,100,2159600,-1
43955.2426,1,140339468,100,2159500,-1
43955.2442,3,140339468,100,2159500,-1
43955.2468,1,140339505,100,2158900,-1
43955.2484,5,0,300,2158800,-1
43955.2512,3,140339505,100,2158800,-1
43955.2513,1,140339541,100,2159600,-1
"""

SAMPLE_BOOK = b"""\
2159600,100,2158800,85
2159600,100,2158800,75
2159600,100,2158300,20
2160800,100,2158300,20
2159500,100,2158300,20
2160800,100,2158300,20
2158900,100,2158300,20
2158900,100,2158300,20
2160800,100,2158300,20
2159600,100,2158300,20
"""

# Three fills of one buy order at the same timestamp. The ask side is as
# observed; the bid quote is a fixed stand-in since only the ask is shown.
MULTIFILL_MESSAGES = b"""\
37837.0474,1,70920403,100,2058500,-1
37837.0474,4,70920403,22,2058500,-1
37837.0474,4,70920403,45,2058500,-1
37837.0474,4,70920403,33,2058800,-1
37837.0479,3,70920380,100,2058800,1
37837.0479,1,70920420,100,2058800,1
"""

MULTIFILL_BOOK = b"""\
2058500,100,2058000,200
2058500,78,2058000,200
2058500,33,2058000,200
2058800,69,2058000,200
2058800,69,2058000,200
2058800,69,2058000,200
"""


def sample_stream():
    return merge_streams(
        parse_message_file(SAMPLE_MESSAGES),
        parse_orderbook_file(SAMPLE_BOOK),
        StreamMetadata("TSLA", "2015-01-02", 1, 4),
    )


def multifill_stream():
    return merge_streams(
        parse_message_file(MULTIFILL_MESSAGES),
        parse_orderbook_file(MULTIFILL_BOOK),
        StreamMetadata("TSLA", "2015-01-02", 1, 4),
    )


def make_orders(signs, sizes, mids, spreads=None, date="") -> MarketOrders:
    """Orders with ``mids[i]`` before order i and ``mids[-1]`` after the last."""
    signs = np.asarray(signs)
    n = len(signs)
    mids = np.asarray(mids, dtype=float)
    assert len(mids) == n + 1
    return MarketOrders(
        time=np.arange(n, dtype=np.int64) * 1_000_000,
        sign=signs,
        total_size=np.asarray(sizes),
        mid_before=mids[:-1],
        mid_after_next=mids[1:],
        spread_before=np.full(n, 100) if spreads is None else spreads,
        opposite_best_volume_before=np.full(n, 100),
        date=date,
    )


def random_orders(rng: np.random.Generator, n: int) -> MarketOrders:
    signs = rng.choice([-1, 1], size=n)
    sizes = rng.integers(1, 1000, size=n)
    steps = rng.integers(-3, 4, size=n) * 50
    mids = 2_000_000 + np.concatenate([[0], np.cumsum(steps)])
    spreads = rng.integers(1, 6, size=n) * 100
    return make_orders(signs, sizes, mids, spreads)


def synthetic_day_files(n_events: int, seed: int = 0) -> tuple[bytes, bytes]:
    """A LOBSTER file pair of ``n_events`` rows built with array operations.

    Messages are not replayed against the book; every row individually
    satisfies the format invariants, which is all the parsing and
    reconstruction path needs.
    """
    rng = np.random.default_rng(seed)
    gaps = rng.integers(0, 16_000_000, size=n_events)
    # roughly the event mix of a liquid stock: mostly submissions and deletions
    etype = rng.choice(np.array([1, 2, 3, 4, 5]), size=n_events, p=[0.46, 0.02, 0.42, 0.08, 0.02])
    same = (etype >= 4) & (np.roll(etype, 1) >= 4) & (rng.random(n_events) < 0.5)
    gaps[same] = 0
    gaps[0] = 0
    time_ns = 34_200 * 10**9 + np.cumsum(gaps)
    assert time_ns[-1] < 57_600 * 10**9
    direction = rng.choice(np.array([-1, 1]), size=n_events)
    direction[same] = np.roll(direction, 1)[same]
    oid = rng.integers(1, 10**9, size=n_events)
    oid[etype == 5] = 0
    size = rng.integers(1, 500, size=n_events)
    bid = 2_000_000 + np.cumsum(rng.integers(-1, 2, size=n_events)) * 100
    ask = bid + rng.integers(1, 4, size=n_events) * 100
    price = np.where(direction > 0, bid, ask)
    av = rng.integers(1, 1000, size=n_events)
    bv = rng.integers(1, 1000, size=n_events)

    time_text = (
        pl.Series(time_ns // 10**9).cast(pl.Utf8) + "." + pl.Series(time_ns % 10**9).cast(pl.Utf8).str.zfill(9)
    )
    messages = pl.DataFrame(
        {"t": time_text, "e": etype, "o": oid, "s": size, "p": price, "d": direction}
    ).write_csv(include_header=False)
    book = pl.DataFrame({"a": ask, "av": av, "b": bid, "bv": bv}).write_csv(include_header=False)
    return messages.encode(), book.encode()
