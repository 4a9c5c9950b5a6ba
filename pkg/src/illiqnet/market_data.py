"""Quote and metadata formats, parsing/validation and minute aggregation.

Quote CSV (UTF-8, LF)::

    #illiqnet-v1
    stock_id,ts,ask_prices,ask_volumes,bid_prices,bid_volumes
    S1,0,10.01;10.02,100;50,9.99;9.98,200;80

Multi-level fields are ``;``-joined; an empty field is an empty book side.

Binary quote files start with ``b"ILQQ"``, a little-endian u16 version and a
u16 reserved word, followed by length-prefixed records (u32 payload length)::

    u16 id_len | id bytes | f64 ts | u8 n_ask | u8 n_bid |
    f64 ask_px[n_ask] | f64 ask_vol[n_ask] | f64 bid_px[n_bid] | f64 bid_vol[n_bid]
"""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Sequence

import numpy as np

from .illiquidity import (
    LEVELS,
    MINUTES_PER_DAY,
    IlliquiditySeries,
    LiquidityState,
    block_illiquidity,
    block_states,
)

FORMAT_TAG = "#illiqnet-v1"
QUOTE_HEADER = ["stock_id", "ts", "ask_prices", "ask_volumes", "bid_prices", "bid_volumes"]
META_HEADER = ["date", "stock_id", "sector", "cap_style", "prev_close"]
BINARY_MAGIC = b"ILQQ"
BINARY_VERSION = 1

SECTORS = (
    "Agriculture",
    "Communication and cultural",
    "Comprehensive",
    "Construction",
    "Electricity, gas, water",
    "Extractive",
    "Financial",
    "Information technology",
    "Manufacturing",
    "Real estate",
    "Retailing",
    "Service",
    "Transportation",
)
CAP_STYLES = tuple(
    f"{size}-cap-{style}"
    for size in ("Small", "Mid", "Large")
    for style in ("growth", "balance", "value")
)
DEFAULT_LIMIT_RATIO = 0.10


class QuoteFormatError(ValueError):
    """The file cannot be read as a quote/metadata file at all."""


class QuoteValidationError(ValueError):
    """A row parsed but violates a snapshot or metadata invariant."""

    def __init__(self, message, row=None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


@dataclass(frozen=True)
class QuoteSnapshot:
    stock_id: str
    ts: float
    ask_prices: tuple = ()
    ask_volumes: tuple = ()
    bid_prices: tuple = ()
    bid_volumes: tuple = ()

    def __post_init__(self):
        for name in ("ask_prices", "ask_volumes", "bid_prices", "bid_volumes"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        object.__setattr__(self, "ts", float(self.ts))
        self.validate()

    def validate(self):
        if len(self.ask_prices) != len(self.ask_volumes):
            raise QuoteValidationError("ask prices and volumes differ in length")
        if len(self.bid_prices) != len(self.bid_volumes):
            raise QuoteValidationError("bid prices and volumes differ in length")
        if len(self.ask_prices) > LEVELS or len(self.bid_prices) > LEVELS:
            raise QuoteValidationError(f"more than {LEVELS} levels on a side")
        if not math.isfinite(self.ts) or self.ts < 0:
            raise QuoteValidationError(f"timestamp {self.ts} outside the session")
        for p in self.ask_prices + self.bid_prices:
            if not (p > 0 and math.isfinite(p)):
                raise QuoteValidationError(f"non-positive price {p}")
        for v in self.ask_volumes + self.bid_volumes:
            if not (v >= 0 and math.isfinite(v)):
                raise QuoteValidationError(f"negative volume {v}")
        if any(b <= a for a, b in zip(self.ask_prices, self.ask_prices[1:])):
            raise QuoteValidationError("ask prices not strictly ascending")
        if any(b >= a for a, b in zip(self.bid_prices, self.bid_prices[1:])):
            raise QuoteValidationError("bid prices not strictly descending")
        if self.ask_prices and self.bid_prices and self.ask_prices[0] <= self.bid_prices[0]:
            raise QuoteValidationError(
                f"crossed book: ask {self.ask_prices[0]} <= bid {self.bid_prices[0]}"
            )


@dataclass
class QuoteBlock:
    """Columnar snapshots of one stock-day; level arrays padded with NaN prices."""

    stock_id: str
    ts: np.ndarray
    ask_px: np.ndarray
    ask_vol: np.ndarray
    bid_px: np.ndarray
    bid_vol: np.ndarray

    def __len__(self):
        return len(self.ts)

    @property
    def n_ask(self):
        return np.sum(~np.isnan(self.ask_px), axis=1)

    @property
    def n_bid(self):
        return np.sum(~np.isnan(self.bid_px), axis=1)

    @classmethod
    def from_snapshots(cls, snapshots: Sequence[QuoteSnapshot], stock_id=None) -> "QuoteBlock":
        k = len(snapshots)
        if stock_id is None:
            stock_id = snapshots[0].stock_id if k else ""
        ask_px = np.full((k, LEVELS), np.nan)
        bid_px = np.full((k, LEVELS), np.nan)
        ask_vol = np.zeros((k, LEVELS))
        bid_vol = np.zeros((k, LEVELS))
        ts = np.empty(k)
        for i, s in enumerate(snapshots):
            ts[i] = s.ts
            na, nb = len(s.ask_prices), len(s.bid_prices)
            ask_px[i, :na] = s.ask_prices
            ask_vol[i, :na] = s.ask_volumes
            bid_px[i, :nb] = s.bid_prices
            bid_vol[i, :nb] = s.bid_volumes
        return cls(stock_id, ts, ask_px, ask_vol, bid_px, bid_vol)

    def snapshots(self) -> list[QuoteSnapshot]:
        out = []
        na, nb = self.n_ask, self.n_bid
        for i in range(len(self.ts)):
            out.append(QuoteSnapshot(
                self.stock_id,
                float(self.ts[i]),
                self.ask_px[i, : na[i]].tolist(),
                self.ask_vol[i, : na[i]].tolist(),
                self.bid_px[i, : nb[i]].tolist(),
                self.bid_vol[i, : nb[i]].tolist(),
            ))
        return out


@dataclass(frozen=True)
class StockMeta:
    stock_id: str
    sector: str
    cap_style: str
    prev_close: float
    limit_ratio: float = DEFAULT_LIMIT_RATIO
    down_limit_price: float = field(init=False)

    def __post_init__(self):
        if self.sector not in SECTORS:
            raise QuoteValidationError(f"unknown sector {self.sector!r}")
        if self.cap_style not in CAP_STYLES:
            raise QuoteValidationError(f"unknown cap style {self.cap_style!r}")
        if not self.prev_close > 0:
            raise QuoteValidationError(f"non-positive prev_close {self.prev_close}")
        if not 0 < self.limit_ratio < 1:
            raise QuoteValidationError(f"limit ratio {self.limit_ratio} outside (0, 1)")
        object.__setattr__(self, "down_limit_price", down_limit_price(self.prev_close, self.limit_ratio))


def down_limit_price(prev_close: float, limit_ratio: float = DEFAULT_LIMIT_RATIO) -> float:
    """Lowest allowed price: prev_close * (1 - ratio), rounded half-up to 0.01."""
    raw = Decimal(repr(float(prev_close))) * (Decimal(1) - Decimal(repr(float(limit_ratio))))
    return float(raw.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class TradingDay:
    date: str
    minutes: int = MINUTES_PER_DAY
    interval_len: int = 60

    @property
    def session_seconds(self) -> int:
        return self.minutes * self.interval_len


@dataclass
class ParseResult:
    snapshots: list
    rejected: list  # QuoteValidationError instances, each carrying .row
    n_rows: int

    @property
    def n_parsed(self):
        return len(self.snapshots)

    @property
    def n_rejected(self):
        return len(self.rejected)


# --- parsing -----------------------------------------------------------------

def _split(field_: str) -> list[float]:
    field_ = field_.strip()
    if not field_:
        return []
    return [float(x) for x in field_.split(";")]


def _order(snapshots: list[QuoteSnapshot]) -> list[QuoteSnapshot]:
    # stable: equal timestamps keep file order
    return sorted(snapshots, key=lambda s: (s.stock_id, s.ts))


def parse_quotes(source, fmt: str = "csv", strict: bool = False) -> ParseResult:
    """Parse a quote file (path, bytes or binary stream).

    Malformed rows are collected in ``ParseResult.rejected`` with their row
    number; ``strict=True`` raises the first one instead.  Snapshots come
    back grouped by stock and ordered by timestamp.
    """
    data = _read_bytes(source)
    if fmt == "csv":
        return _parse_csv(data, strict)
    if fmt == "binary":
        return _parse_binary(data, strict)
    raise ValueError(f"unknown quote format {fmt!r}")


def _read_bytes(source) -> bytes:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)
    if hasattr(source, "read"):
        out = source.read()
        return out.encode("utf-8") if isinstance(out, str) else out
    with open(source, "rb") as fh:
        return fh.read()


def _parse_csv(data: bytes, strict: bool) -> ParseResult:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise QuoteFormatError(f"quote file is not UTF-8: {exc}") from None
    lines = text.split("\n")
    if not lines or lines[0].strip() != FORMAT_TAG:
        raise QuoteFormatError(f"missing version line {FORMAT_TAG!r}")
    if len(lines) < 2 or lines[1].strip().split(",") != QUOTE_HEADER:
        raise QuoteFormatError("unreadable quote header")
    snaps, rejected = [], []
    n_rows = 0
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        n_rows += 1
        try:
            parts = line.rstrip("\r").split(",")
            if len(parts) != len(QUOTE_HEADER):
                raise QuoteValidationError(f"expected {len(QUOTE_HEADER)} fields, got {len(parts)}")
            sid = parts[0].strip()
            if not sid:
                raise QuoteValidationError("empty stock_id")
            snaps.append(QuoteSnapshot(sid, float(parts[1]), _split(parts[2]), _split(parts[3]),
                                       _split(parts[4]), _split(parts[5])))
        except (QuoteValidationError, ValueError) as exc:
            err = QuoteValidationError(str(exc), row=lineno)
            if strict:
                raise err from None
            rejected.append(err)
    return ParseResult(_order(snaps), rejected, n_rows)


_REC_HEAD = struct.Struct("<H")
_REC_MID = struct.Struct("<dBB")


def _parse_binary(data: bytes, strict: bool) -> ParseResult:
    if len(data) < 8 or data[:4] != BINARY_MAGIC:
        raise QuoteFormatError("bad binary quote magic")
    version, _ = struct.unpack_from("<HH", data, 4)
    if version != BINARY_VERSION:
        raise QuoteFormatError(f"unsupported binary quote version {version}")
    pos = 8
    snaps, rejected = [], []
    n_rows = 0
    while pos < len(data):
        if pos + 4 > len(data):
            raise QuoteFormatError("truncated record length")
        (length,) = struct.unpack_from("<I", data, pos)
        pos += 4
        payload = data[pos:pos + length]
        pos += length
        n_rows += 1
        try:
            if len(payload) != length:
                raise QuoteValidationError("truncated record")
            (id_len,) = _REC_HEAD.unpack_from(payload, 0)
            off = 2
            sid = payload[off:off + id_len].decode("utf-8")
            off += id_len
            ts, na, nb = _REC_MID.unpack_from(payload, off)
            off += _REC_MID.size
            need = 8 * 2 * (na + nb)
            if len(payload) - off != need:
                raise QuoteValidationError("record length does not match level counts")
            vals = struct.unpack_from(f"<{2 * (na + nb)}d", payload, off)
            ap, av = vals[:na], vals[na:2 * na]
            bp, bv = vals[2 * na:2 * na + nb], vals[2 * na + nb:]
            snaps.append(QuoteSnapshot(sid, ts, ap, av, bp, bv))
        except (QuoteValidationError, ValueError, struct.error) as exc:
            err = QuoteValidationError(str(exc), row=n_rows)
            if strict:
                raise err from None
            rejected.append(err)
    return ParseResult(_order(snaps), rejected, n_rows)


def _fmt(x: float) -> str:
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def write_quotes_csv(snapshots: Iterable[QuoteSnapshot], dest=None) -> bytes:
    buf = io.StringIO()
    buf.write(FORMAT_TAG + "\n")
    buf.write(",".join(QUOTE_HEADER) + "\n")
    for s in snapshots:
        buf.write(",".join([
            s.stock_id, _fmt(s.ts),
            ";".join(map(_fmt, s.ask_prices)), ";".join(map(_fmt, s.ask_volumes)),
            ";".join(map(_fmt, s.bid_prices)), ";".join(map(_fmt, s.bid_volumes)),
        ]) + "\n")
    data = buf.getvalue().encode("utf-8")
    _emit(data, dest)
    return data


def write_quotes_binary(snapshots: Iterable[QuoteSnapshot], dest=None) -> bytes:
    parts = [BINARY_MAGIC, struct.pack("<HH", BINARY_VERSION, 0)]
    for s in snapshots:
        sid = s.stock_id.encode("utf-8")
        na, nb = len(s.ask_prices), len(s.bid_prices)
        payload = (_REC_HEAD.pack(len(sid)) + sid + _REC_MID.pack(s.ts, na, nb)
                   + struct.pack(f"<{2 * (na + nb)}d", *s.ask_prices, *s.ask_volumes,
                                 *s.bid_prices, *s.bid_volumes))
        parts.append(struct.pack("<I", len(payload)))
        parts.append(payload)
    data = b"".join(parts)
    _emit(data, dest)
    return data


def _emit(data: bytes, dest):
    if dest is None:
        return
    if hasattr(dest, "write"):
        dest.write(data)
    else:
        with open(dest, "wb") as fh:
            fh.write(data)


# --- metadata ----------------------------------------------------------------

def load_metadata(source) -> dict[str, dict[str, StockMeta]]:
    """Read the metadata CSV into ``{date: {stock_id: StockMeta}}``.

    Unknown sector or cap-style labels raise :class:`QuoteValidationError`
    carrying the row number.
    """
    text = _read_bytes(source).decode("utf-8")
    lines = text.split("\n")
    if not lines or lines[0].strip() != FORMAT_TAG:
        raise QuoteFormatError(f"missing version line {FORMAT_TAG!r}")
    reader = csv.reader(lines[1:])
    header = next(reader, None)
    if header is None or header[:len(META_HEADER)] != META_HEADER or len(header) > 6 \
            or (len(header) == 6 and header[5] != "limit_ratio"):
        raise QuoteFormatError("unreadable metadata header")
    out: dict[str, dict[str, StockMeta]] = {}
    for lineno, row in enumerate(reader, start=3):
        if not row:
            continue
        try:
            if len(row) != len(header):
                raise QuoteValidationError(f"expected {len(header)} fields, got {len(row)}")
            ratio = float(row[5]) if len(row) > 5 and row[5].strip() else DEFAULT_LIMIT_RATIO
            meta = StockMeta(row[1], row[2], row[3], float(row[4]), ratio)
        except (QuoteValidationError, ValueError) as exc:
            raise QuoteValidationError(str(exc), row=lineno) from None
        out.setdefault(row[0], {})[meta.stock_id] = meta
    return out


def write_metadata(rows: Iterable[tuple[str, StockMeta]], dest) -> None:
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        fh.write(FORMAT_TAG + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(META_HEADER + ["limit_ratio"])
        for date, m in rows:
            w.writerow([date, m.stock_id, m.sector, m.cap_style, _fmt(m.prev_close), _fmt(m.limit_ratio)])


def coverage_report(meta: dict[str, StockMeta], stock_ids: Iterable[str]) -> list[str]:
    """Stocks present in quotes but absent from metadata (excluded from group analyses)."""
    return sorted(set(stock_ids) - set(meta))


# --- minute aggregation ------------------------------------------------------

def aggregate_block(block: QuoteBlock, date: str, day: TradingDay | None = None) -> IlliquiditySeries:
    """Collapse one stock-day of snapshots into the fixed minute grid.

    Slot ``m`` covers ``[60 m, 60 (m + 1))`` seconds.  The slot state is the
    majority snapshot state, ties going to the more severe state; the slot
    value is the mean illiquidity of its two-sided snapshots.  Snapshots at
    or after the end of the grid (closing call auction) are ignored.
    """
    day = day or TradingDay(date)
    M = day.minutes
    ts = np.asarray(block.ts, dtype=float)
    if len(ts) and np.any(ts < 0):
        raise ValueError(f"{block.stock_id}: negative timestamp")
    if np.any(np.diff(ts) < 0):
        raise ValueError(f"{block.stock_id}: snapshots not sorted by timestamp")
    slot = np.floor(ts / day.interval_len).astype(np.int64)
    keep = slot < M
    slot = slot[keep]
    ask_px, ask_vol = block.ask_px[keep], block.ask_vol[keep]
    bid_px, bid_vol = block.bid_px[keep], block.bid_vol[keep]

    n_ask = np.sum(~np.isnan(ask_px), axis=1)
    n_bid = np.sum(~np.isnan(bid_px), axis=1)
    st = block_states(n_ask, n_bid).astype(np.int64)
    illiq = block_illiquidity(ask_px, ask_vol, bid_px, bid_vol)

    n_states = int(LiquidityState.NO_QUOTE) + 1
    counts = np.bincount(slot * n_states + st, minlength=M * n_states).reshape(M, n_states)
    n_snap = counts.sum(axis=1)
    # majority with ties toward the larger (more severe) state code
    key = counts * n_states + np.arange(n_states)
    states = np.argmax(key, axis=1).astype(np.int8)
    states[n_snap == 0] = LiquidityState.MISSING

    quoted = st == LiquidityState.QUOTED
    qn = np.bincount(slot[quoted], minlength=M)
    qsum = np.bincount(slot[quoted], weights=illiq[quoted], minlength=M)
    values = np.full(M, np.nan)
    use = states == LiquidityState.QUOTED
    values[use] = qsum[use] / qn[use]

    ask_total = np.where(np.isnan(ask_px), 0.0, ask_vol).sum(axis=1)
    ask_volume = np.full(M, np.nan)
    if len(slot):
        last = np.flatnonzero(np.r_[slot[1:] != slot[:-1], True])
        ask_volume[slot[last]] = ask_total[last]

    low_ask_nobid = np.full(M, np.inf)
    nobid = (n_ask > 0) & (n_bid == 0)
    np.minimum.at(low_ask_nobid, slot[nobid], ask_px[nobid, 0])
    low_mid = np.full(M, np.inf)
    np.minimum.at(low_mid, slot[quoted], (ask_px[quoted, 0] + bid_px[quoted, 0]) / 2.0)
    low_ask_nobid[np.isinf(low_ask_nobid)] = np.nan
    low_mid[np.isinf(low_mid)] = np.nan

    return IlliquiditySeries(block.stock_id, date, states, values, ask_volume,
                             low_ask_nobid, low_mid, n_snap)


def aggregate_minute(snapshots: Sequence[QuoteSnapshot] | QuoteBlock, day: TradingDay) -> IlliquiditySeries:
    """Minute aggregation of one stock's snapshots for ``day``."""
    block = snapshots if isinstance(snapshots, QuoteBlock) else QuoteBlock.from_snapshots(list(snapshots))
    return aggregate_block(block, day.date, day)


def group_by_stock(snapshots: Iterable[QuoteSnapshot]) -> dict[str, list[QuoteSnapshot]]:
    out: dict[str, list[QuoteSnapshot]] = {}
    for s in snapshots:
        out.setdefault(s.stock_id, []).append(s)
    return out


def aggregate_day(snapshots: Iterable[QuoteSnapshot], day: TradingDay) -> dict[str, IlliquiditySeries]:
    return {sid: aggregate_minute(sn, day) for sid, sn in sorted(group_by_stock(snapshots).items())}
