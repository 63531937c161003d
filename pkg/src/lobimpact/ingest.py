"""Parsing, alignment and validation of LOBSTER message/orderbook files.

Prices are kept as integers in units of 1e-4 dollars and times as integer
nanoseconds after midnight. Parsed data lives in columnar numpy arrays;
``EventTable`` and ``BookTable`` expose them as read-only sequences of
``EventRecord`` / ``BookSnapshot`` rows.
"""

from __future__ import annotations

import enum
import gzip
import io
import logging
import os
import re
import sys
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Union

import numpy as np
import polars as pl

logger = logging.getLogger(__name__)

NS_PER_SECOND = 1_000_000_000
DAY_NS = 86_400 * NS_PER_SECOND
MAX_TIME_DIGITS = 9

# LOBSTER fills unoccupied levels with these prices and zero volume.
DUMMY_ASK_PRICE = 9_999_999_999
DUMMY_BID_PRICE = -9_999_999_999

_CHUNK_BYTES = 1 << 18
_MESSAGE_COLUMNS = ["time", "event_type", "order_id", "size", "price", "direction"]
_TIME_RE = re.compile(r"^(\d+)(?:\.(\d{0,9}))?$")

Source = Union[str, os.PathLike, bytes, IO[bytes]]


class EventType(enum.IntEnum):
    SUBMISSION = 1
    CANCELLATION = 2
    DELETION = 3
    EXEC_VISIBLE = 4
    EXEC_HIDDEN = 5
    CROSS_TRADE = 6
    HALT = 7


class LobsterParseError(ValueError):
    """Malformed or invalid row in a LOBSTER file.

    ``line`` is the 1-based line number in the input.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class CrossedBookError(LobsterParseError):
    """Level-1 ask at or below the level-1 bid."""

    def __init__(self, row: int, ask: int, bid: int):
        self.row = row
        super().__init__(f"crossed book at row {row} (ask {ask} <= bid {bid})", line=row + 1)


class StreamAlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class EventRecord:
    time: int
    event_type: EventType
    order_id: int
    size: int
    price: int
    direction: int

    @property
    def seconds(self) -> float:
        return self.time / NS_PER_SECOND


@dataclass(frozen=True)
class BookSnapshot:
    """Book state as ``(ask_price, ask_volume, bid_price, bid_volume)`` per level."""

    levels: tuple[tuple[int, int, int, int], ...]

    @property
    def ask(self) -> int:
        return self.levels[0][0]

    @property
    def ask_volume(self) -> int:
        return self.levels[0][1]

    @property
    def bid(self) -> int:
        return self.levels[0][2]

    @property
    def bid_volume(self) -> int:
        return self.levels[0][3]

    @property
    def depth(self) -> int:
        return len(self.levels)


class EventTable(Sequence):
    """Columnar message rows; indexing yields ``EventRecord``."""

    def __init__(self, time, event_type, order_id, size, price, direction):
        self.time = np.asarray(time, dtype=np.int64)
        self.event_type = np.asarray(event_type, dtype=np.int8)
        self.order_id = np.asarray(order_id, dtype=np.int64)
        self.size = np.asarray(size, dtype=np.int64)
        self.price = np.asarray(price, dtype=np.int64)
        self.direction = np.asarray(direction, dtype=np.int8)
        n = len(self.time)
        for name in ("event_type", "order_id", "size", "price", "direction"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has length {len(getattr(self, name))}, expected {n}")
        for arr in self._columns():
            arr.flags.writeable = False

    def _columns(self):
        return (self.time, self.event_type, self.order_id, self.size, self.price, self.direction)

    def __len__(self) -> int:
        return len(self.time)

    def __getitem__(self, i):
        if isinstance(i, slice) or isinstance(i, np.ndarray):
            return self.take(i)
        return EventRecord(
            int(self.time[i]),
            EventType(int(self.event_type[i])),
            int(self.order_id[i]),
            int(self.size[i]),
            int(self.price[i]),
            int(self.direction[i]),
        )

    def take(self, index) -> EventTable:
        return EventTable(*(arr[index] for arr in self._columns()))

    @classmethod
    def from_records(cls, records) -> EventTable:
        records = list(records)
        cols = list(zip(*[(r.time, int(r.event_type), r.order_id, r.size, r.price, r.direction) for r in records]))
        if not cols:
            cols = [()] * 6
        return cls(*cols)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventTable):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self._columns(), other._columns()))

    __hash__ = None


def _as_levels(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64)
    return arr.reshape(-1, 1) if arr.ndim == 1 else arr


class BookTable(Sequence):
    """Columnar orderbook rows, arrays of shape ``(n, depth)``."""

    def __init__(self, ask_price, ask_volume, bid_price, bid_volume):
        self.ask_price = _as_levels(ask_price)
        self.ask_volume = _as_levels(ask_volume)
        self.bid_price = _as_levels(bid_price)
        self.bid_volume = _as_levels(bid_volume)
        shapes = {a.shape for a in self._columns()}
        if len(shapes) != 1:
            raise ValueError(f"inconsistent book column shapes {sorted(shapes)}")
        for arr in self._columns():
            arr.flags.writeable = False

    def _columns(self):
        return (self.ask_price, self.ask_volume, self.bid_price, self.bid_volume)

    @property
    def depth(self) -> int:
        return self.ask_price.shape[1]

    def __len__(self) -> int:
        return self.ask_price.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice) or isinstance(i, np.ndarray):
            return self.take(i)
        levels = tuple(
            (int(self.ask_price[i, k]), int(self.ask_volume[i, k]), int(self.bid_price[i, k]), int(self.bid_volume[i, k]))
            for k in range(self.depth)
        )
        return BookSnapshot(levels)

    def take(self, index) -> BookTable:
        return BookTable(*(arr[index] for arr in self._columns()))

    @classmethod
    def from_snapshots(cls, snapshots, depth: int | None = None) -> BookTable:
        snapshots = list(snapshots)
        if depth is None:
            depth = snapshots[0].depth if snapshots else 1
        data = np.array([[lvl for lvl in s.levels] for s in snapshots], dtype=np.int64).reshape(-1, depth, 4)
        return cls(data[:, :, 0], data[:, :, 1], data[:, :, 2], data[:, :, 3])

    # level-1 views used throughout the estimators
    @property
    def ask(self) -> np.ndarray:
        return self.ask_price[:, 0]

    @property
    def bid(self) -> np.ndarray:
        return self.bid_price[:, 0]

    def mid(self) -> np.ndarray:
        """Level-1 mid-prices in 1e-4 dollars (exact: values are multiples of 0.5)."""
        return (self.ask + self.bid) / 2.0

    def spread(self) -> np.ndarray:
        return self.ask - self.bid

    def __eq__(self, other) -> bool:
        if not isinstance(other, BookTable):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self._columns(), other._columns()))

    __hash__ = None


@dataclass(frozen=True)
class StreamMetadata:
    ticker: str = ""
    date: str = ""
    depth: int = 1
    time_digits: int = MAX_TIME_DIGITS


@dataclass(frozen=True, eq=False)
class MergedStream:
    """Events aligned 1:1 with the book state immediately after each event."""

    events: EventTable
    book: BookTable
    metadata: StreamMetadata = field(default_factory=StreamMetadata)

    def __len__(self) -> int:
        return len(self.events)

    def take(self, index) -> MergedStream:
        return MergedStream(self.events.take(index), self.book.take(index), self.metadata)

    def snapshot(self, i: int) -> BookSnapshot:
        return self.book[i]


@dataclass(frozen=True)
class Violation:
    index: int
    kind: str
    detail: str = ""


# --------------------------------------------------------------------------
# input handling


def _open_binary(source: Source) -> IO[bytes]:
    if isinstance(source, (bytes, bytearray)):
        return io.BytesIO(source)
    if isinstance(source, (str, os.PathLike)):
        path = Path(source)
        if str(path) == "-":
            return sys.stdin.buffer
        if path.suffix == ".gz":
            return gzip.open(path, "rb")
        return open(path, "rb")
    return source


def _iter_chunks(stream: IO[bytes], chunk_bytes: int | None = None) -> Iterator[bytes]:
    """Yield chunks that end on a line boundary."""
    chunk_bytes = chunk_bytes or _CHUNK_BYTES
    tail = b""
    while True:
        block = stream.read(chunk_bytes)
        if not block:
            break
        block = tail + block
        cut = block.rfind(b"\n")
        if cut < 0:
            tail = block
            continue
        tail = block[cut + 1 :]
        yield block[: cut + 1]
    if tail.strip():
        yield tail + b"\n"


def _count_lines(source: Source) -> int | None:
    """Number of data rows, or None for one-shot streams (stdin, file objects)."""
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
        return data.count(b"\n") + (1 if data and not data.endswith(b"\n") and data.strip() else 0)
    if not isinstance(source, (str, os.PathLike)) or str(source) == "-":
        return None
    n = 0
    last = b"\n"
    with _open_binary(source) as fh:
        for block in iter(lambda: fh.read(_CHUNK_BYTES), b""):
            n += block.count(b"\n")
            last = block[-1:]
    if last != b"\n":
        n += 1
    return n


def _parse_time_text(text: str, line: int) -> tuple[int, int]:
    m = _TIME_RE.match(text.strip())
    if m is None:
        raise LobsterParseError(f"malformed timestamp {text!r}", line)
    frac = m.group(2) or ""
    ns = int(m.group(1)) * NS_PER_SECOND + int(frac.ljust(MAX_TIME_DIGITS, "0") or 0)
    return ns, len(frac)


def parse_time(text: str) -> int:
    """Convert ``'43955.2426'`` style seconds-after-midnight to integer nanoseconds."""
    ns, _ = _parse_time_text(text, line=None)
    if ns >= DAY_NS:
        raise LobsterParseError(f"time {text!r} not below 86400 s")
    return ns


def format_time(ns: int, digits: int = MAX_TIME_DIGITS) -> str:
    if not 0 <= digits <= MAX_TIME_DIGITS:
        raise ValueError("digits must be in 0..9")
    secs, frac = divmod(int(ns), NS_PER_SECOND)
    scale = 10 ** (MAX_TIME_DIGITS - digits)
    if frac % scale:
        raise ValueError(f"time {ns} ns not representable with {digits} fractional digits")
    if digits == 0:
        return str(secs)
    return f"{secs}.{frac // scale:0{digits}d}"


# --------------------------------------------------------------------------
# message file


def _scan_message_lines(chunk: bytes, first_line: int) -> None:
    """Slow path: find and raise on the first invalid row of ``chunk``."""
    for offset, raw in enumerate(chunk.decode("ascii", errors="replace").splitlines()):
        line = first_line + offset
        if not raw.strip():
            raise LobsterParseError("empty row", line)
        _parse_message_row(raw, line)
    raise LobsterParseError("unparseable message data", first_line)


def _parse_message_row(raw: str, line: int) -> tuple:
    parts = raw.strip().split(",")
    if len(parts) != 6:
        raise LobsterParseError(f"expected 6 columns, found {len(parts)}", line)
    ns, digits = _parse_time_text(parts[0], line)
    try:
        etype, oid, size, price, direction = (int(p) for p in parts[1:])
    except ValueError:
        raise LobsterParseError(f"non-integer field in {raw.strip()!r}", line) from None
    _check_message_values(ns, etype, oid, size, price, direction, line)
    return ns, etype, oid, size, price, direction, digits


def _check_message_values(ns, etype, oid, size, price, direction, line) -> None:
    if not 0 <= ns < DAY_NS:
        raise LobsterParseError(f"time {ns / NS_PER_SECOND} s outside [0, 86400)", line)
    if not 1 <= etype <= 7:
        raise LobsterParseError(f"event type {etype} not in 1..7", line)
    if size <= 0:
        raise LobsterParseError(f"non-positive size {size}", line)
    if price <= 0:
        raise LobsterParseError(f"non-positive price {price}", line)
    if direction not in (1, -1):
        raise LobsterParseError(f"direction {direction} not in {{+1, -1}}", line)
    if oid < 0:
        raise LobsterParseError(f"negative order id {oid}", line)


def _parse_message_chunk(chunk: bytes, first_line: int):
    try:
        df = pl.read_csv(
            chunk,
            has_header=False,
            schema={c: (pl.Utf8 if c == "time" else pl.Int64) for c in _MESSAGE_COLUMNS},
            truncate_ragged_lines=False,
        )
        if df.null_count().sum_horizontal().item():
            raise ValueError("missing fields")
        parts = df["time"].str.strip_chars().str.split_exact(".", 1)
        secs = parts.struct.field("field_0")
        frac = parts.struct.field("field_1").fill_null("")
        flen = frac.str.len_bytes()
        if (flen > MAX_TIME_DIGITS).any() or not secs.str.contains(r"^\d+$").all():
            raise ValueError("time format")
        if not frac.str.contains(r"^\d*$").all():
            raise ValueError("time format")
        time = (secs.cast(pl.Int64) * NS_PER_SECOND + frac.str.pad_end(MAX_TIME_DIGITS, "0").cast(pl.Int64)).to_numpy()
        cols = [df[c].to_numpy() for c in _MESSAGE_COLUMNS[1:]]
    except Exception:
        _scan_message_lines(chunk, first_line)
        raise  # pragma: no cover - the scan always raises
    etype, oid, size, price, direction = cols
    bad = (
        (time < 0) | (time >= DAY_NS) | (etype < 1) | (etype > 7) | (size <= 0) | (price <= 0)
        | (np.abs(direction) != 1) | (oid < 0)
    )
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        _check_message_values(time[i], etype[i], oid[i], size[i], price[i], direction[i], first_line + i)
    digits = flen.to_numpy()
    cols = (time, etype.astype(np.int8), oid, size, price, direction.astype(np.int8))
    return cols, int(digits.min()), int(digits.max())


def _collect(source: Source, parse_chunk, ncols: int):
    """Drive the chunked parser, preallocating when the row count is known."""
    n_rows = _count_lines(source)
    extras = []
    out = None
    parts: list[tuple] = []
    pos = 0
    line = 1
    fh = _open_binary(source)
    try:
        for chunk in _iter_chunks(fh):
            cols, *extra = parse_chunk(chunk, line)
            m = len(cols[0])
            extras.append(extra)
            if n_rows is not None:
                if out is None:
                    out = [np.empty((n_rows,) + c.shape[1:], dtype=c.dtype) for c in cols]
                for dst, src in zip(out, cols):
                    dst[pos : pos + m] = src
            else:
                parts.append(cols)
            pos += m
            line += m
    finally:
        if fh is not sys.stdin.buffer and not isinstance(source, io.IOBase):
            fh.close()
    if n_rows is None:
        out = [np.concatenate([p[j] for p in parts]) for j in range(ncols)] if parts else None
    elif out is not None:
        out = [a[:pos] for a in out]
    return out, extras


def parse_message_file(source: Source) -> EventTable:
    """Parse a LOBSTER message file (path, ``'-'`` for stdin, bytes or binary stream).

    Rows are ``Time,Type,OrderID,Size,Price,Direction``; ``.gz`` paths are
    decompressed transparently. Raises ``LobsterParseError`` with the line
    number of the first bad row.
    """
    cols, extras = _collect(source, _parse_message_chunk, 6)
    if cols is None:
        return EventTable([], [], [], [], [], [])
    table = EventTable(*cols)
    lo = min(e[0] for e in extras)
    hi = max(e[1] for e in extras)
    table.time_digits = hi if lo == hi else None
    return table


# --------------------------------------------------------------------------
# orderbook file


def _check_book_rows(ap, av, bp, bv, first_line: int) -> None:
    populated_ask = av > 0
    populated_bid = bv > 0
    if (av < 0).any() or (bv < 0).any():
        i = int(np.flatnonzero((av < 0).any(axis=1) | (bv < 0).any(axis=1))[0])
        raise LobsterParseError("negative volume", first_line + i)
    bad_price = (populated_ask & (ap <= 0)) | (populated_bid & (bp <= 0))
    if bad_price.any():
        i = int(np.flatnonzero(bad_price.any(axis=1))[0])
        raise LobsterParseError("non-positive price at a populated level", first_line + i)
    crossed = populated_ask[:, 0] & populated_bid[:, 0] & (ap[:, 0] <= bp[:, 0])
    if crossed.any():
        i = int(np.flatnonzero(crossed)[0])
        raise CrossedBookError(first_line + i - 1, int(ap[i, 0]), int(bp[i, 0]))


def _scan_book_lines(chunk: bytes, first_line: int, depth: int) -> None:
    for offset, raw in enumerate(chunk.decode("ascii", errors="replace").splitlines()):
        line = first_line + offset
        parts = raw.strip().split(",")
        if len(parts) != 4 * depth:
            raise LobsterParseError(f"expected {4 * depth} columns for depth {depth}, found {len(parts)}", line)
        try:
            [int(p) for p in parts]
        except ValueError:
            raise LobsterParseError(f"non-integer field in {raw.strip()!r}", line) from None
    raise LobsterParseError("unparseable orderbook data", first_line)


def parse_orderbook_file(source: Source, depth: int = 1) -> BookTable:
    """Parse a LOBSTER orderbook file with ``4 * depth`` integer columns per row."""
    if depth < 1:
        raise ValueError("depth must be a positive integer")
    width = 4 * depth

    def parse_chunk(chunk: bytes, first_line: int):
        try:
            df = pl.read_csv(
                chunk,
                has_header=False,
                schema={f"c{j}": pl.Int64 for j in range(width)},
                truncate_ragged_lines=False,
            )
            mat = df.to_numpy()
            if mat.shape[1] != width or df.null_count().sum_horizontal().item():
                raise ValueError("shape")
        except Exception:
            _scan_book_lines(chunk, first_line, depth)
            raise  # pragma: no cover
        mat = mat.reshape(-1, depth, 4)
        cols = tuple(np.ascontiguousarray(mat[:, :, j]) for j in range(4))
        _check_book_rows(*cols, first_line)
        return (cols,)

    cols, _ = _collect(source, parse_chunk, 4)
    if cols is None:
        empty = np.empty((0, depth), dtype=np.int64)
        return BookTable(empty, empty, empty, empty)
    return BookTable(*cols)


def infer_depth(source: Source) -> int:
    """Book depth from the column count of the first row."""
    fh = _open_binary(source)
    try:
        first = fh.readline()
    finally:
        if isinstance(source, (str, os.PathLike)) and str(source) != "-":
            fh.close()
    ncols = len(first.strip().split(b","))
    if not first.strip() or ncols % 4:
        raise LobsterParseError(f"orderbook row has {ncols} columns, not a multiple of 4", 1)
    return ncols // 4


# --------------------------------------------------------------------------
# merge and validate


def merge_streams(events: EventTable, book: BookTable, metadata: StreamMetadata | None = None) -> MergedStream:
    if len(events) == 0 or len(book) == 0:
        raise StreamAlignmentError("cannot merge empty streams")
    if len(events) != len(book):
        raise StreamAlignmentError(f"length mismatch: {len(events)} events vs {len(book)} snapshots")
    t = events.time
    back = np.flatnonzero(t[1:] < t[:-1])
    if back.size:
        i = int(back[0]) + 1
        raise StreamAlignmentError(f"time decreases at index {i}")
    if metadata is None:
        metadata = StreamMetadata(depth=book.depth)
    digits = getattr(events, "time_digits", None)
    if digits is not None and metadata.time_digits != digits:
        metadata = StreamMetadata(metadata.ticker, metadata.date, metadata.depth, digits)
    return MergedStream(events, book, metadata)


def validate_stream(stream: MergedStream) -> list[Violation]:
    """Check every row invariant; returns violations sorted by index."""
    ev, bk = stream.events, stream.book
    found: list[Violation] = []

    def report(mask, kind, detail=""):
        found.extend(Violation(int(i), kind, detail) for i in np.flatnonzero(mask))

    if len(ev) != len(bk):
        found.append(Violation(min(len(ev), len(bk)), "length mismatch", f"{len(ev)} events vs {len(bk)} snapshots"))
        return found
    t = ev.time
    report((t < 0) | (t >= DAY_NS), "time out of range")
    if len(t) > 1:
        report(np.concatenate([[False], np.diff(t) < 0]), "non-monotone time")
    report((ev.event_type < 1) | (ev.event_type > 7), "invalid event type")
    report(ev.size <= 0, "non-positive size")
    report(ev.price <= 0, "non-positive price")
    report(np.abs(ev.direction) != 1, "invalid direction")
    report((ev.event_type == EventType.EXEC_HIDDEN) & (ev.order_id != 0), "hidden execution with order id")

    ap, av, bp, bv = bk.ask_price, bk.ask_volume, bk.bid_price, bk.bid_volume
    pa, pb = av > 0, bv > 0
    report((av < 0).any(axis=1) | (bv < 0).any(axis=1), "negative volume")
    report(((pa & (ap <= 0)) | (pb & (bp <= 0))).any(axis=1), "non-positive book price")
    report(pa[:, 0] & pb[:, 0] & (ap[:, 0] <= bp[:, 0]), "crossed book")
    if bk.depth > 1:
        both_a = pa[:, 1:] & pa[:, :-1]
        both_b = pb[:, 1:] & pb[:, :-1]
        report((both_a & (np.diff(ap, axis=1) <= 0)).any(axis=1), "ask levels not increasing")
        report((both_b & (np.diff(bp, axis=1) >= 0)).any(axis=1), "bid levels not decreasing")
        # a populated level must not follow an empty one
        report((pa[:, 1:] & ~pa[:, :-1]).any(axis=1) | (pb[:, 1:] & ~pb[:, :-1]).any(axis=1), "gap in book levels")
    found.sort(key=lambda v: v.index)
    return found


# --------------------------------------------------------------------------
# emission


def _time_text(ns: np.ndarray, digits: int) -> pl.Series:
    if not 0 <= digits <= MAX_TIME_DIGITS:
        raise ValueError("digits must be in 0..9")
    secs, frac = np.divmod(ns, NS_PER_SECOND)
    scale = 10 ** (MAX_TIME_DIGITS - digits)
    bad = np.flatnonzero(frac % scale)
    if bad.size:
        raise ValueError(f"time {int(ns[bad[0]])} ns not representable with {digits} fractional digits")
    text = pl.Series(secs).cast(pl.Utf8)
    if digits == 0:
        return text
    return text + "." + pl.Series(frac // scale).cast(pl.Utf8).str.zfill(digits)


def _write_rows(columns: dict) -> bytes:
    return pl.DataFrame(columns).write_csv(include_header=False, line_terminator="\n").encode("ascii")


def emit_message_file(events: EventTable, digits: int | None = None) -> bytes:
    if digits is None:
        digits = getattr(events, "time_digits", None) or MAX_TIME_DIGITS
    return _write_rows({
        "time": _time_text(events.time, digits),
        "type": events.event_type,
        "order_id": events.order_id,
        "size": events.size,
        "price": events.price,
        "direction": events.direction,
    })


def emit_orderbook_file(book: BookTable) -> bytes:
    n, depth = len(book), book.depth
    mat = np.stack(book._columns(), axis=-1).reshape(n, 4 * depth)
    return _write_rows({f"c{j}": mat[:, j] for j in range(4 * depth)})


def emit_lobster_files(stream: MergedStream, digits: int | None = None) -> tuple[bytes, bytes]:
    if digits is None:
        digits = stream.metadata.time_digits
    return emit_message_file(stream.events, digits), emit_orderbook_file(stream.book)


_NAME_RE = re.compile(r"^(?P<ticker>[^_]+)_(?P<date>[^_]+)_.*message(?:_(?P<level>\d+))?\.csv(?:\.gz)?$")


def orderbook_path_for(message_path: str | os.PathLike) -> Path:
    path = Path(message_path)
    return path.with_name(path.name.replace("message", "orderbook"))


def load_day(message_path: str | os.PathLike, depth: int | None = None) -> MergedStream:
    """Parse and merge a message file and its ``orderbook`` sibling.

    Ticker, date and (if ``depth`` is None) the book depth come from the
    LOBSTER naming scheme ``TICKER_DATE_..._message_LEVEL.csv``; depth falls
    back to the orderbook column count.
    """
    message_path = Path(message_path)
    book_path = orderbook_path_for(message_path)
    m = _NAME_RE.match(message_path.name)
    ticker = m.group("ticker") if m else message_path.stem
    date = m.group("date") if m else ""
    if depth is None:
        depth = int(m.group("level")) if m and m.group("level") else infer_depth(book_path)
    events = parse_message_file(message_path)
    book = parse_orderbook_file(book_path, depth)
    return merge_streams(events, book, StreamMetadata(ticker, date, depth))
