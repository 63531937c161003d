"""Acceptance criteria, one test per criterion.

Each test times itself against its budget and records a PASS/FAIL line,
printed at the end of the pytest run. Run on its own with::

    pytest tests/test_acceptance.py -v
"""

import contextlib
import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from _fixtures import (
    MULTIFILL_BOOK,
    MULTIFILL_MESSAGES,
    SAMPLE_BOOK,
    SAMPLE_MESSAGES,
    multifill_stream,
    random_orders,
    sample_stream,
    synthetic_day_files,
)
from conftest import ACCEPTANCE_RESULTS
from lobimpact.bars import BarKind, Trades, sample_bars
from lobimpact.impact import Lag1Accumulator, lag1_response, order_flow_imbalance
from lobimpact.ingest import (
    EventRecord,
    emit_lobster_files,
    merge_streams,
    parse_message_file,
    parse_orderbook_file,
    validate_stream,
)
from lobimpact.preprocess import reconstruct_market_orders
from lobimpact.regress import best_split, kfold_cv, kfold_splits, kyle_lambda, ols_fit, power_law_fit, tree_fit
from lobimpact.synth import KyleWorldConfig, ZiConfig, generate_kyle_world, generate_zero_intelligence


@contextlib.contextmanager
def criterion(name, budget_s):
    """Run a criterion body, enforce its time budget and record the outcome."""
    notes: list[str] = []
    start = time.perf_counter()
    try:
        yield notes
        elapsed = time.perf_counter() - start
        assert elapsed < budget_s, f"took {elapsed:.2f}s, budget {budget_s}s"
    except BaseException as exc:
        ACCEPTANCE_RESULTS[name] = (False, f"{time.perf_counter() - start:.2f}s: {str(exc).splitlines()[0] if str(exc) else type(exc).__name__}")
        print(f"FAIL {name}")
        raise
    ACCEPTANCE_RESULTS[name] = (True, " ".join([f"{elapsed:.2f}s / {budget_s}s"] + notes))
    print(f"PASS {name} ({elapsed:.2f}s)")


# ------------------------------------------------------------ fixtures


def test_fixture_exactness():
    with criterion("fixture exactness", 1.0):
        ev = parse_message_file(SAMPLE_MESSAGES)
        expected = [
            (43955242200000, 4, 140339446, 5, 2158800, 1),
            (43955242600000, 4, 140339446, 10, 2158800, 1),
            (43955242600000, 4, 140339446, 75, 2158800, 1),
            (43955242600000, 3, 140339455, 100, 2159600, -1),
            (43955242600000, 1, 140339468, 100, 2159500, -1),
            (43955244200000, 3, 140339468, 100, 2159500, -1),
            (43955246800000, 1, 140339505, 100, 2158900, -1),
            (43955248400000, 5, 0, 300, 2158800, -1),
            (43955251200000, 3, 140339505, 100, 2158800, -1),
            (43955251300000, 1, 140339541, 100, 2159600, -1),
        ]
        assert list(ev) == [EventRecord(*row) for row in expected]
        book = parse_orderbook_file(SAMPLE_BOOK)
        rows = [list(map(int, line.split(b","))) for line in SAMPLE_BOOK.splitlines()]
        assert np.column_stack([book.ask, book.ask_volume, book.bid, book.bid_volume]).tolist() == rows

        mos = reconstruct_market_orders(sample_stream())
        sell = mos[0]
        assert (sell.sign, sell.total_size, sell.n_fills, sell.time) == (-1, 85, 2, 43955242600000)
        assert mos.first_row[0] == 1 and mos.last_row[0] == 2

        assert len(parse_message_file(MULTIFILL_MESSAGES)) == len(parse_orderbook_file(MULTIFILL_BOOK)) == 6
        buys = reconstruct_market_orders(multifill_stream())
        assert len(buys) == 1
        assert (buys[0].sign, buys[0].total_size, buys[0].n_fills) == (1, 100, 3)


# ------------------------------------------------------------ impact


def _naive_lag1(sign, before, after, spreads, clipped):
    """Re-read every stored order in plain Python with exact summation."""
    rs, sq, sp = [], [], []
    for i in range(len(sign)):
        dm = (after[i] - before[i]) / 100
        r = sign[i] * dm
        rs.append(max(0.0, r) if clipped else r)
        sq.append(dm * dm)
        sp.append(spreads[i] / 100)
    n = len(sign)
    r1 = math.fsum(rs) / n
    v1 = math.fsum(sq) / n
    return math.fsum(sp) / n, r1, math.sqrt(max(v1 - r1 * r1, 0.0))


def _close(got, ref):
    return max(abs(got.avg_spread - ref[0]), abs(got.r1 - ref[1]), abs(got.sigma_r - ref[2]))


def test_lag1_oracle_equivalence():
    with criterion("lag-1 response oracle", 10.0) as notes:
        worst = 0.0
        for seed in range(1000):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(1, 201))
            mos = random_orders(rng, n)
            cols = (mos.sign.tolist(), mos.mid_before.tolist(), mos.mid_after_next.tolist(), mos.spread_before.tolist())
            checkpoints = {1, (n + 1) // 2, n}
            for mode in ("signed", "clipped"):
                clipped = mode == "clipped"
                acc = Lag1Accumulator(mode)
                for i, row in enumerate(zip(*cols), start=1):
                    acc.update(*row)
                    if i in checkpoints:
                        diff = _close(acc.result(), _naive_lag1(*(c[:i] for c in cols), clipped=clipped))
                        worst = max(worst, diff)
                        assert diff <= 1e-12, (seed, mode, i, diff)
                batch = lag1_response(mos, mode)
                assert batch.n_mo == n
                diff = _close(batch, _naive_lag1(*cols, clipped=clipped))
                worst = max(worst, diff)
                assert diff <= 1e-12, (seed, mode, diff)
        notes.append(f"max abs diff {worst:.1e}")


def test_imbalance_oracle():
    with criterion("imbalance oracle", 5.0):
        for seed in range(1000):
            rng = np.random.default_rng(10_000 + seed)
            n = int(rng.integers(1, 150))
            T = int(rng.integers(1, 15))
            mos = random_orders(rng, n)
            got = order_flow_imbalance(mos, T, stride=T)
            sign, size = mos.sign.tolist(), mos.total_size.tolist()
            dv, dm = [], []
            for j in range(n // T):
                lo, hi = j * T, j * T + T
                dv.append(sum(sign[i] * size[i] for i in range(lo, hi)))
                dm.append((mos.mid_after_next[hi - 1] - mos.mid_before[lo]) / 100)
            assert got.delta_v.tolist() == dv
            np.testing.assert_allclose(got.delta_m, dm, rtol=0, atol=1e-9)


# ------------------------------------------------------------ regression


def test_kyle_recovery():
    with criterion("Kyle lambda recovery", 5.0):
        mos = generate_kyle_world(KyleWorldConfig(true_lambda=0.5, noise_std=1.0, n_mo=50_000, seed=2024))
        lam = kyle_lambda(order_flow_imbalance(mos, 10)).lambda_
        assert abs(lam - 0.5) <= 0.02 * 0.5, lam
        mos = generate_kyle_world(KyleWorldConfig(true_lambda=0.0, noise_std=1.0, n_mo=50_000, seed=2024))
        lam0 = kyle_lambda(order_flow_imbalance(mos, 10)).lambda_
        assert abs(lam0) < 0.005, lam0


def test_power_law_recovery():
    with criterion("power-law recovery", 5.0):
        q = np.geomspace(1e-3, 5.0, 500)
        assert abs(power_law_fit(q, q**0.5).exponent - 0.5) <= 1e-9
        rng = np.random.default_rng(77)
        q = rng.uniform(0.01, 2.0, 10_000)
        g = 2.0 * q**0.6 * rng.lognormal(0.0, 0.3, q.size)
        delta = power_law_fit(q, g).exponent
        assert 0.58 <= delta <= 0.62, delta


def _rss_grid(x, y, a, b):
    """RSS of the line a + b x on a grid of (a, b), from sufficient statistics."""
    n, sx, sy, sxx, sxy, syy = len(x), x.sum(), y.sum(), x @ x, x @ y, y @ y
    return syy - 2 * a * sy - 2 * b * sxy + n * a * a + 2 * a * b * sx + b * b * sxx


def _grid_search_line(x, y, half_width=50.0, points=41, tol=1e-9):
    """Minimise RSS over (intercept, slope) by repeated zooming grid search."""
    centre = np.zeros(2)
    while half_width > tol:
        axis = np.linspace(-half_width, half_width, points)
        a, b = np.meshgrid(centre[0] + axis, centre[1] + axis, indexing="ij")
        rss = _rss_grid(x, y, a, b)
        i, j = np.unravel_index(np.argmin(rss), rss.shape)
        centre = np.array([a[i, j], b[i, j]])
        half_width /= 2
    return centre


def test_ols_correctness():
    with criterion("OLS correctness", 10.0):
        rng = np.random.default_rng(5)
        for _ in range(100):
            n = int(rng.integers(10, 400))
            # single feature: compare against a derivative-free grid search
            x = rng.normal(rng.uniform(-2, 2), rng.uniform(0.5, 3.0), n)
            y = rng.uniform(-5, 5) + rng.uniform(-5, 5) * x + rng.normal(0, rng.uniform(0.1, 3), n)
            fit = ols_fit(x, y)
            grid = _grid_search_line(x, y)
            assert np.abs(fit.beta_ - grid).max() <= 1e-6, (fit.beta_, grid)

            # several features: orthogonality and the sum-of-squares identity
            p = int(rng.integers(1, 6))
            X = rng.normal(size=(n, p)) * rng.uniform(0.1, 10, p) + rng.uniform(-5, 5, p)
            y = X @ rng.normal(size=p) + rng.normal(0, 1, n)
            fit = ols_fit(X, y)
            design = np.column_stack([np.ones(n), X])
            resid = y - fit.predict(X)
            scale = np.linalg.norm(design, axis=0) * np.linalg.norm(y)
            assert (np.abs(design.T @ resid) <= 1e-8 * scale).all()
            tss = ((y - y.mean()) ** 2).sum()
            ess = ((fit.predict(X) - y.mean()) ** 2).sum()
            assert abs(tss - (resid @ resid + ess)) <= 1e-8 * tss


def test_cv_laws():
    with criterion("CV laws", 5.0):
        for n in range(10, 201):
            for k in (2, 5, 10):
                folds = kfold_splits(n, k, seed=n)
                sizes = [len(f) for f in folds]
                joined = np.concatenate(folds)
                assert len(folds) == k
                assert len(np.unique(joined)) == len(joined) == n
                assert sorted(joined.tolist()) == list(range(n))
                assert max(sizes) - min(sizes) <= 1
            if n % 10 == 0:
                x = np.arange(n, dtype=float)
                y = 3.0 * x - 7.0
                for k in (2, 5, 10):
                    mse = kfold_cv(x, y, k, "ols", seed=n).mse
                    # exact in exact arithmetic; allow float rounding of the line
                    assert (mse <= 1e-20 * np.mean(y * y)).all(), mse


def _exhaustive_root(x, y):
    best_sse, best_thr = math.inf, None
    xs = np.unique(x)
    for lo, hi in zip(xs[:-1], xs[1:]):
        thr = (lo + hi) / 2
        left, right = y[x <= thr], y[x > thr]
        sse = ((left - left.mean()) ** 2).sum() + ((right - right.mean()) ** 2).sum()
        if best_thr is None or sse < best_sse - 1e-9 * max(1.0, best_sse):
            best_sse, best_thr = sse, thr
    return best_sse, best_thr


def test_tree_laws():
    with criterion("tree laws", 10.0):
        x = np.concatenate([np.linspace(-5, -0.5, 10), np.linspace(0, 5, 10)])
        y = np.where(x < 0, 1.0, 5.0)
        tree = tree_fit(x, y, max_depth=1)
        assert np.array_equal(tree.predict(x.reshape(-1, 1)), y)

        rng = np.random.default_rng(99)
        for _ in range(300):
            n = int(rng.integers(1, 150))
            x = rng.normal(size=n).round(1)
            y = rng.normal(size=n)
            depth = [None, 0, 1, 2, 3, 5][int(rng.integers(0, 6))]
            tree = tree_fit(x, y, depth, int(rng.integers(1, min(n, 5) + 1)))
            leaves = tree.apply(x)
            pred = tree.predict(x.reshape(-1, 1))
            for leaf in np.unique(leaves):
                routed = leaves == leaf
                assert (pred[routed] == np.mean(y[routed])).all()

        for _ in range(300):
            n = int(rng.integers(2, 51))
            x = rng.integers(0, 30, n).astype(float)
            y = rng.normal(size=n)
            sse, thr = _exhaustive_root(x, y)
            split = best_split(x.reshape(-1, 1), y)
            if thr is None:
                assert split is None
            else:
                assert split[1] == thr
                assert abs(split[2] - sse) <= 1e-9 * max(1.0, sse)


# ------------------------------------------------------------ synth, bars


def test_zero_intelligence_round_trip():
    with criterion("zero-intelligence round trip", 30.0):
        for seed in range(100):
            cfg = ZiConfig(lo_rate=4.0, mo_rate=1.0, cancel_rate=2.5, depth=5, seed=seed,
                           session_start=37_800.0, session_end=38_400.0)
            stream = generate_zero_intelligence(cfg)
            msg, book = emit_lobster_files(stream)
            back = merge_streams(parse_message_file(msg), parse_orderbook_file(book, cfg.depth), stream.metadata)
            assert validate_stream(back) == []
            assert back.events == stream.events and back.book == stream.book
            assert emit_lobster_files(back) == (msg, book)


def test_bars_conservation():
    with criterion("bars conservation", 5.0):
        rng = np.random.default_rng(31)
        for _ in range(200):
            n = int(rng.integers(1, 300))
            t = Trades.from_arrays(
                np.cumsum(rng.integers(0, 5 * 10**9, n)), rng.integers(1, 500, n), rng.integers(1, 10**6, n)
            )
            for kind, threshold in (
                (BarKind.TIME, int(rng.integers(1, 10**10))),
                (BarKind.TICK, int(rng.integers(1, 20))),
                (BarKind.VOLUME, int(rng.integers(1, 3000))),
                (BarKind.DOLLAR, int(rng.integers(1, 10**9))),
            ):
                bars = sample_bars(t, kind, threshold)
                assert sum(b.traded_volume for b in bars) == int(t.size.sum())
                counts = [b.n_events for b in bars]
                assert sum(counts) == n
                assert [b.first_index for b in bars] == np.cumsum([0] + counts[:-1]).tolist()

        sizes = rng.integers(1, 300, 2000)
        t = Trades.from_arrays(np.arange(2000), sizes, np.full(2000, 1_234_500))
        for v in (1, 100, 999, 5000):
            vol = sample_bars(t, "volume", v)
            dol = sample_bars(t, "dollar", v * 1_234_500)
            assert [(b.first_index, b.n_events, b.traded_volume) for b in vol] == [
                (b.first_index, b.n_events, b.traded_volume) for b in dol
            ]


# ------------------------------------------------------------ performance

# Peak RSS comes from VmHWM, which starts afresh at exec; ru_maxrss would
# carry over the high-water mark of the forking test process.
_PERF_SCRIPT = """
import json, sys, time
from lobimpact.impact import lag1_response
from lobimpact.ingest import load_day
from lobimpact.preprocess import clip_session, reconstruct_market_orders

def hwm_kib():
    with open("/proc/self/status") as fh:
        return next(int(line.split()[1]) for line in fh if line.startswith("VmHWM:"))

base = hwm_kib()
start = time.perf_counter()
stream = load_day(sys.argv[1])
stats = lag1_response(reconstruct_market_orders(clip_session(stream)), "signed")
elapsed = time.perf_counter() - start
peak = hwm_kib() - base
print(json.dumps({"elapsed": elapsed, "rss_kib": peak, "events": len(stream), "n_mo": stats.n_mo}))
"""


@pytest.mark.skipif(not os.path.exists("/proc/self/status"), reason="peak RSS is read from /proc")
def test_performance(tmp_path):
    # the budget covers building the fixture; the parse timing is asserted separately
    with criterion("performance", 60.0) as notes:
        msg, book = synthetic_day_files(1_000_000, seed=1)
        msg_path = tmp_path / "SYN_2015-01-02_34200000_57600000_message_1.csv"
        msg_path.write_bytes(msg)
        (tmp_path / "SYN_2015-01-02_34200000_57600000_orderbook_1.csv").write_bytes(book)
        input_bytes = len(msg) + len(book)
        env = dict(os.environ, POLARS_MAX_THREADS="1", OMP_NUM_THREADS="1", OPENBLAS_NUM_THREADS="1")
        proc = subprocess.run([sys.executable, "-c", _PERF_SCRIPT, str(msg_path)],
                              capture_output=True, text=True, env=env, check=True)
        result = json.loads(proc.stdout)
        assert result["events"] == 1_000_000 and result["n_mo"] > 0
        assert result["elapsed"] <= 5.0, f"{result['elapsed']:.2f}s for 1M events"
        ratio = result["rss_kib"] * 1024 / input_bytes
        assert ratio < 2.0, f"peak memory {ratio:.2f}x input"
        notes.append(f"(pipeline {result['elapsed']:.2f}s <= 5s, peak memory {ratio:.2f}x input)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
