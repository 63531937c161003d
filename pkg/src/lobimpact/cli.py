"""``lobimpact`` command line.

Settings resolve in this order (later wins): built-in defaults, a
``--config`` file of ``key = value`` lines, ``LOBIMPACT_<KEY>`` environment
variables, command-line flags. Outputs are staged and only moved into
``--out`` once a command succeeds; every run writes ``manifest.json``.
"""

from __future__ import annotations

import argparse
import csv
import glob
import hashlib
import io
import json
import logging
import math
import multiprocessing
import os
import shutil
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .bars import BarKind, Trades, bars_to_rows, sample_bars
from .impact import (
    ImbalanceSamples,
    aggregate_impact_curve,
    average_daily,
    lag1_response,
    order_flow_imbalance,
    per_order_response,
    volume_conditioned_response,
)
from .ingest import NS_PER_SECOND, load_day, validate_stream
from .preprocess import (
    MarketOrders,
    SessionWindow,
    clip_session,
    joint_outlier_mask,
    normalize_volumes,
    outlier_mask,
    reconstruct_market_orders,
)
from .regress import fit_report, kfold_cv, make_model
from .synth import (
    KyleWorldConfig,
    ZiConfig,
    generate_kyle_world,
    generate_zero_intelligence,
    kyle_world_to_stream,
    write_lobster_files,
)

logger = logging.getLogger("lobimpact")

ENV_PREFIX = "LOBIMPACT_"
COMMANDS = ("ingest", "impact", "imbalance", "bars", "fit", "cv", "synth", "reproduce")


class UsageError(Exception):
    """Bad invocation or missing input; exits with status 2."""


# --------------------------------------------------------------------------
# argument parsing


def _add_input_options(p):
    p.add_argument("inputs", nargs="*", help="message files, directories or glob patterns")
    p.add_argument("--depth", type=int, default=None, help="book depth (default: from file name or columns)")
    p.add_argument("--ticker", default=None, help="only use files for this ticker")
    p.add_argument("--date-from", default=None, help="first date (inclusive, as in file names)")
    p.add_argument("--date-to", default=None, help="last date (inclusive)")
    p.add_argument("--session-start", default="10:30", help="HH:MM (default 10:30)")
    p.add_argument("--session-end", default="15:00", help="HH:MM (default 15:00)")
    p.add_argument("--jobs", type=int, default=1, help="days processed in parallel")


def _add_output_options(p):
    p.add_argument("--out", default="lobimpact-out", help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="format of tabular outputs")


def _add_imbalance_options(p):
    p.add_argument("-T", "--window", type=int, default=10, help="market orders per imbalance window")
    p.add_argument("--stride", type=int, default=None, help="window step (default: window)")
    p.add_argument("--outlier-k", type=float, default=3.0, help="drop samples beyond k standard deviations")
    p.add_argument("--bins", type=int, default=20, help="equal-width imbalance bins")


def _add_model_options(p, kinds):
    p.add_argument("--model", choices=kinds, default=kinds[0], help=f"default {kinds[0]}")
    p.add_argument("--seed", type=int, default=0, help="seed for splits and folds")
    p.add_argument("--max-depth", type=int, default=5, help="tree depth limit")
    p.add_argument("--min-samples-leaf", type=int, default=20, help="tree leaf size")
    p.add_argument("--quantile", type=float, default=0.5, help="Kyle linear region: |dV| quantile")
    p.add_argument("--max-abs-imbalance", type=float, default=None, help="Kyle linear region: absolute |dV| cutoff")
    p.add_argument("--samples", default=None, help="CSV of samples (instead of LOBSTER inputs)")
    p.add_argument("--x-col", default="delta_v", help="feature column of --samples")
    p.add_argument("--y-col", default="delta_m", help="target column of --samples")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lobimpact", description="Price impact analysis for LOBSTER limit order book data.")
    parser.add_argument("--version", action="version", version=f"lobimpact {__version__}")
    parser.add_argument("--config", default=None, help="key = value file mirroring the flags")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("ingest", help="parse and validate LOBSTER file pairs")
    _add_input_options(p)
    _add_output_options(p)

    p = sub.add_parser("impact", help="daily lag-1 response statistics")
    _add_input_options(p)
    _add_output_options(p)
    p.add_argument("--mode", choices=("signed", "clipped"), default="signed", help="response averaging (default signed)")
    p.add_argument("--volume-curve", action="store_true", help="also bin response by normalised volume")
    p.add_argument("--outlier-k", type=float, default=3.0)

    p = sub.add_parser("imbalance", help="order-flow imbalance samples and aggregate impact curve")
    _add_input_options(p)
    _add_output_options(p)
    _add_imbalance_options(p)

    p = sub.add_parser("bars", help="time/tick/volume/dollar bars")
    _add_input_options(p)
    _add_output_options(p)
    p.add_argument("--kind", choices=[k.value for k in BarKind], default="volume")
    p.add_argument(
        "--threshold",
        type=float,
        default=None,
        help="seconds (time), trades (tick), shares (volume) or dollars (dollar)",
    )
    p.add_argument("--source", choices=("orders", "trades"), default="orders",
                   help="reconstructed market orders or raw execution rows")

    p = sub.add_parser("fit", help="fit an impact model with a holdout split")
    _add_input_options(p)
    _add_output_options(p)
    _add_imbalance_options(p)
    _add_model_options(p, ["ols", "tree", "powerlaw", "kyle"])
    p.add_argument("--test-fraction", type=float, default=0.25, help="holdout share of samples")

    p = sub.add_parser("cv", help="k-fold cross-validation")
    _add_input_options(p)
    _add_output_options(p)
    _add_imbalance_options(p)
    _add_model_options(p, ["ols", "tree"])
    p.add_argument("--k", type=int, default=10, help="cross-validation folds")

    p = sub.add_parser("synth", help="write synthetic LOBSTER file pairs")
    p.add_argument("--model", choices=("zi", "kyle"), default="zi", help="zero-intelligence book or Kyle world")
    p.add_argument("--seed", type=int, default=0, help="base seed; day i uses seed + i")
    p.add_argument("--days", type=int, default=1, help="number of daily file pairs")
    p.add_argument("--ticker", default=None, help="ticker in file names (default ZISIM or KYLE)")
    p.add_argument("--duration", type=float, default=60.0, help="zi: session length in seconds")
    p.add_argument("--lo-rate", type=float, default=1.0, help="zi: limit orders per second")
    p.add_argument("--mo-rate", type=float, default=0.2, help="zi: market orders per second")
    p.add_argument("--cancel-rate", type=float, default=0.5, help="zi: cancellations per second")
    p.add_argument("--lam", type=float, default=0.5, help="kyle: true lambda, cents per share")
    p.add_argument("--noise", type=float, default=1.0, help="kyle: noise std, cents")
    p.add_argument("--n-mo", type=int, default=10_000, help="kyle: market orders per day")
    p.add_argument("--depth", type=int, default=1, help="zi: book levels written")
    p.add_argument("--out", default="lobimpact-out", help="output directory")

    p = sub.add_parser("reproduce", help="full pipeline over a directory of daily file pairs")
    _add_input_options(p)
    _add_output_options(p)
    _add_imbalance_options(p)
    p.add_argument("--mode", choices=("signed", "clipped"), default="signed", help="response averaging (default signed)")
    p.add_argument("--k", type=int, default=10, help="cross-validation folds")
    p.add_argument("--seed", type=int, default=0, help="seed for splits and folds")
    p.add_argument("--test-fraction", type=float, default=0.25, help="holdout share of samples")
    p.add_argument("--max-depth", type=int, default=5)
    p.add_argument("--min-samples-leaf", type=int, default=20)
    p.add_argument("--quantile", type=float, default=0.5)
    p.add_argument("--max-abs-imbalance", type=float, default=None)
    return parser


def _read_config_file(path: str) -> dict[str, str]:
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.lstrip("-").replace("-", "_").lower()] = value
    return values


def _env_overrides(environ) -> dict[str, str]:
    return {
        k[len(ENV_PREFIX):].lower(): v
        for k, v in environ.items()
        if k.startswith(ENV_PREFIX) and len(k) > len(ENV_PREFIX)
    }


def _apply_overrides(parser: argparse.ArgumentParser, overrides: dict[str, str]) -> None:
    """Install string overrides as subcommand defaults (argparse converts them)."""
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for sp in subparsers.choices.values():
        known = {a.dest: a for a in sp._actions}
        for key, value in overrides.items():
            action = known.get(key)
            if action is None:
                continue
            if isinstance(action, argparse._StoreTrueAction):
                sp.set_defaults(**{key: value.lower() in ("1", "true", "yes", "on")})
            elif key == "inputs":
                sp.set_defaults(inputs=value.split())
            else:
                sp.set_defaults(**{key: value})


def parse_args(argv, environ=None) -> argparse.Namespace:
    environ = os.environ if environ is None else environ
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    overrides = {}
    if known.config:
        overrides.update(_read_config_file(known.config))
    overrides.update(_env_overrides(environ))
    overrides.pop("config", None)
    parser = build_parser()
    _apply_overrides(parser, overrides)
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        raise UsageError("a command is required: " + ", ".join(COMMANDS))
    return args


# --------------------------------------------------------------------------
# helpers


def _config_echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("verbose",)}


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _day_key(path: Path) -> tuple[str, str]:
    parts = path.name.split("_")
    return (parts[0], parts[1]) if len(parts) > 2 else (path.stem, "")


def discover_inputs(args) -> list[Path]:
    """Message files named by ``args.inputs``, filtered by ticker and dates."""
    found: set[Path] = set()
    for item in args.inputs:
        path = Path(item)
        if path.is_dir():
            matches = [p for p in path.iterdir() if "message" in p.name and p.name.endswith((".csv", ".csv.gz"))]
        elif path.is_file():
            matches = [path]
        else:
            matches = [Path(p) for p in glob.glob(item) if "message" in Path(p).name]
        found.update(matches)
    selected = []
    for p in sorted(found):
        ticker, date = _day_key(p)
        if args.ticker and ticker != args.ticker:
            continue
        if args.date_from and date < args.date_from:
            continue
        if args.date_to and date > args.date_to:
            continue
        selected.append(p)
    if not selected:
        raise UsageError("no input files matched")
    return selected


@dataclass
class Day:
    ticker: str
    date: str
    path: str
    n_events: int
    n_violations: int
    orders: MarketOrders | None = None
    trades: Trades | None = None


def _prepare_day(path: str, depth, session: tuple[str, str], want: str) -> Day:
    stream = load_day(path, depth)
    violations = validate_stream(stream)
    if violations:
        logger.warning("%s: %d validation violations; offending rows skipped", path, len(violations))
        keep = np.ones(len(stream), dtype=bool)
        keep[[v.index for v in violations]] = False
        stream = stream.take(keep)
    meta = stream.metadata
    day = Day(meta.ticker, meta.date, str(path), len(stream), len(violations))
    if want == "validate":
        return day
    stream = clip_session(stream, SessionWindow.from_hhmm(*session))
    if want == "trades":
        day.trades = Trades.from_stream(stream)
    else:
        day.orders = reconstruct_market_orders(stream)
    return day


def load_days(args, want: str = "orders") -> list[Day]:
    paths = [str(p) for p in discover_inputs(args)]
    session = (args.session_start, args.session_end)
    jobs = max(1, int(getattr(args, "jobs", 1) or 1))
    if jobs == 1 or len(paths) == 1:
        return [_prepare_day(p, args.depth, session, want) for p in paths]
    # fork after polars spins up its thread pool can deadlock
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
        return list(pool.map(_prepare_day, paths, [args.depth] * len(paths), [session] * len(paths), [want] * len(paths)))


class Outputs:
    """Stage files in a scratch directory; publish them only on success."""

    def __init__(self, out_dir: str, fmt: str = "csv"):
        self.out_dir = Path(out_dir)
        self.fmt = fmt
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.out_dir))
        self.names: list[str] = []

    def table(self, stem: str, rows: list[dict], columns: list[str] | None = None) -> None:
        if self.fmt == "json":
            self.json(f"{stem}.json", rows)
            return
        columns = columns or (list(rows[0]) if rows else [])
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})
        self._write(f"{stem}.csv", buf.getvalue())

    def json(self, name: str, obj) -> None:
        self._write(name, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")

    def bytes(self, name: str, data: bytes) -> None:
        (self.staging / name).write_bytes(data)
        self.names.append(name)

    def _write(self, name: str, text: str) -> None:
        (self.staging / name).write_text(text)
        self.names.append(name)

    def commit(self, args, inputs: list[Path]) -> None:
        manifest = {
            "version": __version__,
            "command": args.command,
            "config": _config_echo(args),
            "inputs": [{"path": str(p), "sha256": _sha256(p)} for p in inputs],
            "outputs": sorted(self.names),
        }
        self.json("manifest.json", manifest)
        for name in self.names:
            os.replace(self.staging / name, self.out_dir / name)
        shutil.rmtree(self.staging, ignore_errors=True)

    def abort(self) -> None:
        shutil.rmtree(self.staging, ignore_errors=True)


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _input_files(days_or_paths) -> list[Path]:
    paths = []
    for item in days_or_paths:
        p = Path(item.path if isinstance(item, Day) else item)
        paths.append(p)
        book = p.with_name(p.name.replace("message", "orderbook"))
        if book.exists():
            paths.append(book)
    return paths


def _imbalance_from_days(days: list[Day], window: int, stride) -> ImbalanceSamples:
    parts = []
    for d in days:
        s = order_flow_imbalance(d.orders, window, stride)
        parts.append(ImbalanceSamples(s.delta_v, s.delta_m, s.t_start, window, d.date, np.full(len(s), d.date)))
    return ImbalanceSamples.concat(parts)


def _filter_outliers(samples: ImbalanceSamples, k: float) -> tuple[ImbalanceSamples, int]:
    if len(samples) < 2:
        return samples, 0
    keep = joint_outlier_mask(samples.delta_v, samples.delta_m, k=k)
    return samples.take(keep), int((~keep).sum())


def _load_samples(args):
    """(x, y, inputs) from --samples CSV or from LOBSTER inputs via imbalance."""
    if args.samples:
        path = Path(args.samples)
        if not path.is_file():
            raise UsageError(f"samples file not found: {path}")
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        try:
            x = np.array([float(r[args.x_col]) for r in rows])
            y = np.array([float(r[args.y_col]) for r in rows])
        except KeyError as exc:
            raise UsageError(f"column {exc.args[0]!r} missing from {path}") from None
        return x, y, [path]
    days = load_days(args)
    samples, _ = _filter_outliers(_imbalance_from_days(days, args.window, args.stride), args.outlier_k)
    return samples.delta_v.astype(float), samples.delta_m, _input_files(days)


def _model_params(args, kind: str) -> dict:
    if kind == "tree":
        return {"max_depth": args.max_depth, "min_samples_leaf": args.min_samples_leaf}
    if kind == "kyle":
        return {"quantile": args.quantile, "max_abs_imbalance": args.max_abs_imbalance}
    return {}


# --------------------------------------------------------------------------
# commands


def cmd_ingest(args, out: Outputs):
    days = load_days(args, want="validate")
    rows = []
    for path in [Path(d.path) for d in days]:
        stream = load_day(path, args.depth)
        for v in validate_stream(stream):
            rows.append({"file": path.name, "index": v.index, "kind": v.kind, "detail": v.detail})
    out.table("violations", rows, ["file", "index", "kind", "detail"])
    out.json(
        "ingest_summary.json",
        [{"ticker": d.ticker, "date": d.date, "file": Path(d.path).name, "n_events": d.n_events,
          "n_violations": d.n_violations} for d in days],
    )
    return _input_files(days)


def _impact_rows(days: list[Day], mode: str):
    rows, stats = [], []
    for d in days:
        s = lag1_response(d.orders, mode)
        stats.append((d.ticker, s))
        rows.append({"ticker": d.ticker, "date": d.date, "avg_spread": s.avg_spread, "r1": s.r1,
                     "sigma_r": s.sigma_r, "n_mo": int(s.n_mo)})
    summary = {}
    for ticker in sorted({t for t, _ in stats}):
        daily = [s for t, s in stats if t == ticker and not s.empty]
        if daily:
            avg = average_daily(daily)
            summary[ticker] = {"avg_spread": avg.avg_spread, "r1": avg.r1, "sigma_r": avg.sigma_r,
                               "n_mo": avg.n_mo, "n_days": len(daily)}
    return rows, summary


IMPACT_COLUMNS = ["ticker", "date", "avg_spread", "r1", "sigma_r", "n_mo"]


def cmd_impact(args, out: Outputs):
    days = load_days(args)
    rows, summary = _impact_rows(days, args.mode)
    out.table("impact", rows, IMPACT_COLUMNS)
    out.json("impact_summary.json", {"mode": args.mode, "tickers": summary})
    if args.volume_curve:
        vols, resp = [], []
        for d in days:
            if len(d.orders) == 0:
                logger.warning("%s %s: no market orders; skipped", d.ticker, d.date)
                continue
            vols.append(normalize_volumes(d.orders))
            resp.append(per_order_response(d.orders, args.mode))
        if vols:
            v, r = np.concatenate(vols), np.concatenate(resp)
            if len(r) >= 2:
                keep = outlier_mask(r, args.outlier_k)
                v, r = v[keep], r[keep]
            curve = volume_conditioned_response(v, r)
            out.table("volume_curve", curve.rows())
    return _input_files(days)


def cmd_imbalance(args, out: Outputs):
    days = load_days(args)
    samples = _imbalance_from_days(days, args.window, args.stride)
    out.table(
        "imbalance_samples",
        [{"date": str(dt), "t_start": int(t), "delta_v": int(v), "delta_m": float(m)}
         for dt, t, v, m in zip(samples.dates, samples.t_start, samples.delta_v, samples.delta_m)],
        ["date", "t_start", "delta_v", "delta_m"],
    )
    kept, removed = _filter_outliers(samples, args.outlier_k)
    curve = aggregate_impact_curve(kept, args.bins)
    out.table("imbalance_curve", curve.rows())
    out.json("imbalance_summary.json", {
        "window": args.window, "stride": args.stride or args.window, "n_samples": len(samples),
        "n_removed": removed, "correlation": kept.correlation() if len(kept) > 1 else None,
    })
    return _input_files(days)


def cmd_bars(args, out: Outputs):
    if args.threshold is None:
        raise UsageError("--threshold is required for bars")
    kind = BarKind(args.kind)
    scale = {BarKind.TIME: NS_PER_SECOND, BarKind.DOLLAR: 10_000}.get(kind, 1)
    days = load_days(args, want="trades" if args.source == "trades" else "orders")
    rows = []
    for d in days:
        trades = d.trades if args.source == "trades" else Trades.from_orders(d.orders)
        for row in bars_to_rows(sample_bars(trades, kind, args.threshold * scale)):
            rows.append({"ticker": d.ticker, "date": d.date, **row})
    columns = ["ticker", "date", "start_time", "end_time", "open", "high", "low", "close", "traded_volume",
               "traded_dollar", "n_events", "vwap", "partial", "first_index"]
    out.table("bars", rows, columns)
    return _input_files(days)


def cmd_fit(args, out: Outputs):
    x, y, inputs = _load_samples(args)
    est = make_model(args.model, **_model_params(args, args.model))
    report = fit_report(x, y, est, test_fraction=args.test_fraction, seed=args.seed)
    payload = report.as_dict()
    payload["model"] = args.model
    out.json("fit_report.json", payload)
    return inputs


def cmd_cv(args, out: Outputs):
    x, y, inputs = _load_samples(args)
    est = make_model(args.model, **_model_params(args, args.model))
    cv = kfold_cv(x, y, args.k, est, seed=args.seed)
    out.table(
        "cv_scores",
        [{"fold": i, "n_test": len(f), "mse": m, "r2": r} for i, (f, m, r) in enumerate(zip(cv.folds, cv.mse, cv.r2))],
        ["fold", "n_test", "mse", "r2"],
    )
    out.json("cv_report.json", {"model": args.model, **cv.summary()})
    return inputs


def cmd_synth(args, out: Outputs):
    if args.days < 1:
        raise UsageError("--days must be >= 1")
    base = np.datetime64("2015-01-02")
    for i in range(args.days):
        date = str(np.busday_offset(base, i, roll="forward"))
        seed = args.seed + i
        if args.model == "zi":
            cfg = ZiConfig(
                lo_rate=args.lo_rate, mo_rate=args.mo_rate, cancel_rate=args.cancel_rate, depth=args.depth,
                session_start=37_800.0, session_end=37_800.0 + args.duration, seed=seed,
                ticker=args.ticker or "ZISIM", date=date,
            )
            stream = generate_zero_intelligence(cfg)
        else:
            cfg = KyleWorldConfig(true_lambda=args.lam, noise_std=args.noise, n_mo=args.n_mo, seed=seed, date=date)
            stream = kyle_world_to_stream(generate_kyle_world(cfg), ticker=args.ticker or "KYLE")
        tmp = out.staging / f"day{i}"
        msg, book = write_lobster_files(stream, tmp)
        out.bytes(msg.name, msg.read_bytes())
        out.bytes(book.name, book.read_bytes())
        shutil.rmtree(tmp)
    return []


def cmd_reproduce(args, out: Outputs):
    days = load_days(args)
    rows, summary = _impact_rows(days, args.mode)
    out.table("impact", rows, IMPACT_COLUMNS)
    out.table(
        "ticker_summary",
        [{"ticker": t, **{k: v for k, v in s.items() if k != "n_days"}} for t, s in summary.items()],
        ["ticker", "avg_spread", "r1", "sigma_r", "n_mo"],
    )

    samples = _imbalance_from_days(days, args.window, args.stride)
    kept, removed = _filter_outliers(samples, args.outlier_k)
    out.table(
        "imbalance_samples",
        [{"date": str(dt), "t_start": int(t), "delta_v": int(v), "delta_m": float(m)}
         for dt, t, v, m in zip(kept.dates, kept.t_start, kept.delta_v, kept.delta_m)],
        ["date", "t_start", "delta_v", "delta_m"],
    )
    out.table("imbalance_curve", aggregate_impact_curve(kept, args.bins).rows())
    x, y = kept.delta_v.astype(float), kept.delta_m
    tree_params = {"max_depth": args.max_depth, "min_samples_leaf": args.min_samples_leaf}
    ols = fit_report(x, y, "ols", test_fraction=args.test_fraction, seed=args.seed)
    tree = fit_report(x, y, make_model("tree", **tree_params), test_fraction=args.test_fraction, seed=args.seed)
    cv_ols = kfold_cv(x, y, args.k, "ols", seed=args.seed)
    cv_tree = kfold_cv(x, y, args.k, make_model("tree", **tree_params), seed=args.seed)
    kyle = fit_report(
        x, y, make_model("kyle", quantile=args.quantile, max_abs_imbalance=args.max_abs_imbalance),
        test_fraction=0, seed=args.seed,
    )
    out.table(
        "cv_scores",
        [{"model": name, "fold": i, "mse": m, "r2": r}
         for name, cv in (("ols", cv_ols), ("tree", cv_tree))
         for i, (m, r) in enumerate(zip(cv.mse, cv.r2))],
        ["model", "fold", "mse", "r2"],
    )
    out.json("fit_report.json", {
        "window": args.window,
        "n_samples": len(samples),
        "n_removed": removed,
        "correlation": kept.correlation() if len(kept) > 1 else None,
        "ols": ols.as_dict(),
        "tree": {**tree.as_dict(), "model": "tree"},
        "cv": {"ols": cv_ols.summary(), "tree": cv_tree.summary()},
        "kyle": {**kyle.coefficients, "train": kyle.train.as_dict()},
    })
    return _input_files(days)


HANDLERS = {
    "ingest": cmd_ingest,
    "impact": cmd_impact,
    "imbalance": cmd_imbalance,
    "bars": cmd_bars,
    "fit": cmd_fit,
    "cv": cmd_cv,
    "synth": cmd_synth,
    "reproduce": cmd_reproduce,
}


def run(argv=None, environ=None) -> int:
    try:
        args = parse_args(argv, environ)
    except UsageError as exc:
        print(f"lobimpact: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = Outputs(args.out, getattr(args, "format", "csv"))
    try:
        inputs = HANDLERS[args.command](args, out)
        out.commit(args, inputs)
    except UsageError as exc:
        out.abort()
        print(f"lobimpact: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError, ArithmeticError) as exc:
        out.abort()
        msg = " ".join(str(exc).split())
        print(f"lobimpact: error: {msg}", file=sys.stderr)
        return 1
    finally:
        _remove_if_empty(out.out_dir)
    return 0


def _remove_if_empty(path: Path) -> None:
    try:
        path.rmdir()
    except OSError:
        pass


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
