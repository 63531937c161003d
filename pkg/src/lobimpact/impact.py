"""Quote-derived prices and market-impact response functions.

Mid-prices are carried in 1e-4 dollars; every response statistic returned
here is in dollar cents (squared cents for ``diffusion``).
"""

from __future__ import annotations

import enum
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .ingest import BookSnapshot, BookTable
from .preprocess import MarketOrders

UNITS_PER_CENT = 100.0


class ResponseMode(str, enum.Enum):
    SIGNED = "signed"
    CLIPPED = "clipped"


def mid_price(book: BookSnapshot | BookTable):
    """Arithmetic mean of the best quotes.

    Exact in float64: the result is always a multiple of half a price unit.
    """
    if isinstance(book, BookTable):
        return book.mid()
    return (book.ask + book.bid) / 2


def micro_price(book: BookSnapshot | BookTable):
    """Best quotes weighted by the opposite side's volume."""
    if isinstance(book, BookTable):
        a, b = book.ask.astype(float), book.bid.astype(float)
        va, vb = book.ask_volume[:, 0].astype(float), book.bid_volume[:, 0].astype(float)
    else:
        a, b, va, vb = book.ask, book.bid, book.ask_volume, book.bid_volume
    return (a * vb + b * va) / (va + vb)


def spread(book: BookSnapshot | BookTable):
    if isinstance(book, BookTable):
        return book.spread()
    return book.ask - book.bid


# --------------------------------------------------------------------------
# lag-1 response


@dataclass(frozen=True)
class ResponseStats:
    """Daily lag-1 response summary, in cents.

    ``sigma_r`` is ``sqrt(V(1) - R(1)^2)`` where ``V(1)`` is the mean squared
    mid change regardless of mode.
    """

    avg_spread: float
    r1: float
    sigma_r: float
    n_mo: float
    mode: ResponseMode
    v1: float = math.nan

    @property
    def empty(self) -> bool:
        return self.n_mo == 0


def _as_mode(mode) -> ResponseMode:
    if mode is None:
        raise TypeError("response mode is required: 'signed' or 'clipped'")
    return ResponseMode(mode)


class Lag1Accumulator:
    """Single-pass accumulator for the lag-1 response.

    Orders may be pushed one at a time or in column chunks; the result only
    depends on the concatenated order sequence.
    """

    def __init__(self, mode):
        self.mode = _as_mode(mode)
        self.n = 0
        self._spread = 0.0
        self._response = 0.0
        self._sq = 0.0

    def update(self, sign: int, mid_before: float, mid_after_next: float, spread_before: float) -> None:
        dm = (mid_after_next - mid_before) / UNITS_PER_CENT
        r = sign * dm
        if self.mode is ResponseMode.CLIPPED:
            r = max(0.0, r)
        self.n += 1
        self._spread += spread_before / UNITS_PER_CENT
        self._response += r
        self._sq += dm * dm

    def update_many(self, orders: MarketOrders) -> None:
        dm = (orders.mid_after_next - orders.mid_before) / UNITS_PER_CENT
        r = orders.sign * dm
        if self.mode is ResponseMode.CLIPPED:
            r = np.maximum(r, 0.0)
        self.n += len(orders)
        self._spread += float(np.sum(orders.spread_before / UNITS_PER_CENT))
        self._response += float(np.sum(r))
        self._sq += float(np.sum(dm * dm))

    def result(self) -> ResponseStats:
        if self.n == 0:
            return ResponseStats(math.nan, math.nan, math.nan, 0, self.mode)
        r1 = self._response / self.n
        v1 = self._sq / self.n
        # v1 >= r1**2 holds mathematically in both modes; clamp rounding only
        sigma = math.sqrt(max(v1 - r1 * r1, 0.0))
        return ResponseStats(self._spread / self.n, r1, sigma, self.n, self.mode, v1)


def lag1_response(orders: MarketOrders, mode) -> ResponseStats:
    """Average spread, lag-1 response and its dispersion for one day's orders.

    ``mode='signed'`` averages ``sign * (m_next - m)``; ``mode='clipped'``
    floors each term at zero. An empty day yields ``n_mo == 0`` and NaNs.
    """
    acc = Lag1Accumulator(mode)
    acc.update_many(orders)
    return acc.result()


def per_order_response(orders: MarketOrders, mode) -> np.ndarray:
    mode = _as_mode(mode)
    r = orders.sign * (orders.mid_after_next - orders.mid_before) / UNITS_PER_CENT
    return np.maximum(r, 0.0) if mode is ResponseMode.CLIPPED else r


def average_daily(stats: Iterable[ResponseStats]) -> ResponseStats:
    """Mean of daily statistics over non-empty days."""
    days = [s for s in stats if not s.empty]
    if not days:
        raise ValueError("no non-empty days")
    modes = {s.mode for s in days}
    if len(modes) != 1:
        raise ValueError("cannot average statistics computed in different modes")
    return ResponseStats(
        avg_spread=float(np.mean([s.avg_spread for s in days])),
        r1=float(np.mean([s.r1 for s in days])),
        sigma_r=float(np.mean([s.sigma_r for s in days])),
        n_mo=float(np.mean([s.n_mo for s in days])),
        mode=modes.pop(),
        v1=float(np.mean([s.v1 for s in days])),
    )


def diffusion(orders: MarketOrders, lag: int) -> float:
    """Mean squared mid-price change over ``lag`` orders, in cents squared."""
    if lag < 0:
        raise ValueError("lag must be non-negative")
    if len(orders) < lag + 1:
        raise ValueError(f"need at least {lag + 1} market orders for lag {lag}, got {len(orders)}")
    if lag == 0:
        return 0.0
    path = orders.mid_path() / UNITS_PER_CENT
    d = path[lag:] - path[:-lag]
    return float(np.mean(d * d))


# --------------------------------------------------------------------------
# conditioned curves


@dataclass(frozen=True)
class ConditionedCurve:
    """Per-bin mean response. Only bins holding at least one sample appear."""

    lower: np.ndarray
    upper: np.ndarray
    x_mean: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray
    counts: np.ndarray
    binning: str = ""

    @property
    def centers(self) -> np.ndarray:
        return (self.lower + self.upper) / 2

    @property
    def y_sem(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.y_std / np.sqrt(self.counts)

    def __len__(self) -> int:
        return len(self.counts)

    def second_differences(self) -> np.ndarray:
        return np.diff(self.y_mean, n=2)

    def rows(self) -> list[dict]:
        return [
            {
                "bin_lower": float(lo),
                "bin_upper": float(hi),
                "bin_center": float((lo + hi) / 2),
                "x_mean": float(xm),
                "y_mean": float(ym),
                "y_std": float(ys),
                "count": int(c),
            }
            for lo, hi, xm, ym, ys, c in zip(
                self.lower, self.upper, self.x_mean, self.y_mean, self.y_std, self.counts
            )
        ]


def _curve_from_bins(bin_index, lower_of, upper_of, x, y, binning) -> ConditionedCurve:
    if x.size == 0:
        e = np.empty(0)
        return ConditionedCurve(e, e, e, e, e, np.empty(0, np.int64), binning)
    keys, inverse, counts = np.unique(bin_index, return_inverse=True, return_counts=True)
    sx = np.bincount(inverse, weights=x)
    sy = np.bincount(inverse, weights=y)
    ym = sy / counts
    var = np.bincount(inverse, weights=(y - ym[inverse]) ** 2) / counts
    return ConditionedCurve(
        lower=lower_of(keys),
        upper=upper_of(keys),
        x_mean=sx / counts,
        y_mean=ym,
        y_std=np.sqrt(var),
        counts=counts.astype(np.int64),
        binning=binning,
    )


def volume_conditioned_response(
    normalized_volume,
    response,
    split: float = 0.1,
    fine_width: float = 0.01,
    coarse_width: float = 0.1,
) -> ConditionedCurve:
    """Bin responses by normalised MO volume.

    Volumes below ``split`` fall in bins of ``fine_width``; the rest in bins
    of ``coarse_width`` starting at ``split``. Bins are half-open.
    """
    v = np.asarray(normalized_volume, dtype=float)
    r = np.asarray(response, dtype=float)
    if v.shape != r.shape:
        raise ValueError("normalized_volume and response must have equal length")
    if (v < 0).any():
        raise ValueError("normalized volumes must be non-negative")
    n_fine = int(round(split / fine_width))
    # small epsilon keeps values that sit on an edge (0.29/0.01 = 28.999...) in the right bin
    eps = 1e-9
    fine = np.floor(v / fine_width + eps).astype(np.int64)
    coarse = n_fine + np.floor((v - split) / coarse_width + eps).astype(np.int64)
    idx = np.where(v < split, np.minimum(fine, n_fine - 1), np.maximum(coarse, n_fine))

    def lower_of(k):
        return np.where(k < n_fine, k * fine_width, split + (k - n_fine) * coarse_width)

    def upper_of(k):
        return np.where(k < n_fine, (k + 1) * fine_width, split + (k - n_fine + 1) * coarse_width)

    return _curve_from_bins(idx, lower_of, upper_of, v, r, f"fine={fine_width}<{split}<=coarse={coarse_width}")


@dataclass(frozen=True)
class ImbalanceSamples:
    """Signed volume (shares) and mid change (cents) over windows of T orders."""

    delta_v: np.ndarray
    delta_m: np.ndarray
    t_start: np.ndarray
    window: int
    date: str = ""
    dates: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.delta_v)

    def take(self, index) -> ImbalanceSamples:
        return ImbalanceSamples(
            self.delta_v[index],
            self.delta_m[index],
            self.t_start[index],
            self.window,
            self.date,
            None if self.dates is None else self.dates[index],
        )

    @classmethod
    def concat(cls, parts: Sequence[ImbalanceSamples]) -> ImbalanceSamples:
        if not parts:
            raise ValueError("nothing to concatenate")
        windows = {p.window for p in parts}
        if len(windows) != 1:
            raise ValueError("cannot mix window lengths")
        dates = np.concatenate([p.dates if p.dates is not None else np.full(len(p), p.date) for p in parts])
        return cls(
            np.concatenate([p.delta_v for p in parts]),
            np.concatenate([p.delta_m for p in parts]),
            np.concatenate([p.t_start for p in parts]),
            windows.pop(),
            dates=dates,
        )

    def correlation(self) -> float:
        return float(np.corrcoef(self.delta_v, self.delta_m)[0, 1])


def order_flow_imbalance(orders: MarketOrders, window: int, stride: int | None = None) -> ImbalanceSamples:
    """Signed volume and mid change over consecutive windows of ``window`` orders.

    The mid change runs from just before the first order of the window to just
    before the first order after it. ``stride`` defaults to ``window``
    (disjoint windows); incomplete trailing windows are dropped.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    stride = window if stride is None else stride
    if stride < 1:
        raise ValueError("stride must be >= 1")
    n = len(orders)
    if n < window:
        e = np.empty(0, np.int64)
        return ImbalanceSamples(e, np.empty(0), e, window, orders.date)
    flow = np.concatenate([[0], np.cumsum(orders.sign.astype(np.int64) * orders.total_size)])
    path = orders.mid_path()
    starts = np.arange(0, n - window + 1, stride)
    return ImbalanceSamples(
        delta_v=flow[starts + window] - flow[starts],
        delta_m=(path[starts + window] - path[starts]) / UNITS_PER_CENT,
        t_start=starts,
        window=window,
        date=orders.date,
    )


def aggregate_impact_curve(samples: ImbalanceSamples, n_bins: int = 20) -> ConditionedCurve:
    """Mean mid change per equal-width imbalance bin."""
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    x = samples.delta_v.astype(float)
    y = np.asarray(samples.delta_m, dtype=float)
    if x.size == 0:
        return _curve_from_bins(np.empty(0, np.int64), None, None, x, y, f"equal-width n_bins={n_bins}")
    lo, hi = float(x.min()), float(x.max())
    width = (hi - lo) / n_bins if hi > lo else 1.0
    idx = np.clip(np.floor((x - lo) / width).astype(np.int64), 0, n_bins - 1)
    return _curve_from_bins(
        idx,
        lambda k: lo + k * width,
        lambda k: lo + (k + 1) * width,
        x,
        y,
        f"equal-width n_bins={n_bins}",
    )
