"""Depth-weighted spread illiquidity, liquidity-loss states and daily statistics.

The illiquidity of one order-book snapshot is

    I = (1/10) * (sum_i A_i * Va_i - sum_j B_j * Vb_j) / P_mid * 10000

with ``A``/``Va`` the ask prices and volumes, ``B``/``Vb`` the bid side and
``P_mid`` the mean of the best ask and best bid.  The 1/10 normalizer is kept
when a book has fewer than ten levels.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

MINUTES_PER_DAY = 237
LEVELS = 10
SCALE = 10000.0


class LiquidityState(enum.IntEnum):
    """Per-snapshot / per-slot quoting state.

    Values double as severity ranks: when a minute slot has a tie between
    states, the larger value wins.  ``MISSING`` only exists at slot level.
    """

    QUOTED = 0
    NO_ASK = 1
    NO_BID = 2
    NO_QUOTE = 3
    MISSING = 4

    @property
    def label(self) -> str:
        return _STATE_LABELS[self]

    @classmethod
    def from_label(cls, label: str) -> "LiquidityState":
        try:
            return _LABEL_STATES[label]
        except KeyError:
            raise ValueError(f"unknown liquidity state {label!r}") from None


_STATE_LABELS = {
    LiquidityState.QUOTED: "Quoted",
    LiquidityState.NO_ASK: "NoAsk",
    LiquidityState.NO_BID: "NoBid",
    LiquidityState.NO_QUOTE: "NoQuote",
    LiquidityState.MISSING: "Missing",
}
_LABEL_STATES = {v: k for k, v in _STATE_LABELS.items()}

LOSS_STATES = (LiquidityState.NO_ASK, LiquidityState.NO_BID, LiquidityState.NO_QUOTE)


class StateError(ValueError):
    """Illiquidity requested for a snapshot with an empty book side."""


class UndefinedCorrelationError(ValueError):
    pass


def compute_illiquidity(snapshot) -> float:
    """Illiquidity of a single two-sided snapshot.

    Raises StateError if either side is empty; use :func:`classify_state`
    for those.
    """
    if not snapshot.ask_prices or not snapshot.bid_prices:
        raise StateError("illiquidity undefined for a one-sided or empty book")
    ask = math.fsum(p * v for p, v in zip(snapshot.ask_prices, snapshot.ask_volumes))
    bid = math.fsum(p * v for p, v in zip(snapshot.bid_prices, snapshot.bid_volumes))
    mid = (snapshot.ask_prices[0] + snapshot.bid_prices[0]) / 2.0
    return (ask - bid) / LEVELS / mid * SCALE


def classify_state(snapshot) -> LiquidityState:
    has_ask = len(snapshot.ask_prices) > 0
    has_bid = len(snapshot.bid_prices) > 0
    if has_ask and has_bid:
        return LiquidityState.QUOTED
    if has_bid:
        return LiquidityState.NO_ASK
    if has_ask:
        return LiquidityState.NO_BID
    return LiquidityState.NO_QUOTE


def block_states(n_ask: np.ndarray, n_bid: np.ndarray) -> np.ndarray:
    """Vectorized :func:`classify_state` over level counts."""
    has_ask = n_ask > 0
    has_bid = n_bid > 0
    out = np.full(n_ask.shape, LiquidityState.NO_QUOTE, dtype=np.int8)
    out[has_ask & has_bid] = LiquidityState.QUOTED
    out[~has_ask & has_bid] = LiquidityState.NO_ASK
    out[has_ask & ~has_bid] = LiquidityState.NO_BID
    return out


def block_illiquidity(ask_px, ask_vol, bid_px, bid_vol) -> np.ndarray:
    """Vectorized illiquidity over (k, 10) level arrays padded with NaN prices.

    Rows lacking either side come back as NaN.
    """
    ask = np.where(np.isnan(ask_px), 0.0, ask_px * ask_vol).sum(axis=1)
    bid = np.where(np.isnan(bid_px), 0.0, bid_px * bid_vol).sum(axis=1)
    mid = (ask_px[:, 0] + bid_px[:, 0]) / 2.0
    with np.errstate(invalid="ignore"):
        return (ask - bid) / LEVELS / mid * SCALE


@dataclass
class IlliquiditySeries:
    """One stock-day of minute slots.

    ``values`` holds the slot illiquidity (NaN unless the slot is Quoted).
    The remaining per-slot arrays feed episode and down-limit detection:
    ``ask_volume`` is the total ask volume of the slot's last snapshot,
    ``low_ask_nobid`` the lowest best ask seen while no bid was posted and
    ``low_mid`` the lowest mid price of the slot's two-sided snapshots.
    """

    stock_id: str
    date: str
    states: np.ndarray
    values: np.ndarray
    ask_volume: np.ndarray = None
    low_ask_nobid: np.ndarray = None
    low_mid: np.ndarray = None
    n_snapshots: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.states)
        self.states = np.asarray(self.states, dtype=np.int8)
        self.values = np.asarray(self.values, dtype=float)
        for name in ("ask_volume", "low_ask_nobid", "low_mid"):
            arr = getattr(self, name)
            arr = np.full(n, np.nan) if arr is None else np.asarray(arr, dtype=float)
            setattr(self, name, arr)
        if self.n_snapshots is None:
            self.n_snapshots = np.zeros(n, dtype=np.int64)
        if len(self.values) != n:
            raise ValueError("states and values differ in length")
        quoted = self.states == LiquidityState.QUOTED
        if np.any(np.isnan(self.values[quoted])) or np.any(~np.isnan(self.values[~quoted])):
            raise ValueError("a value must be present exactly on Quoted slots")

    def __len__(self):
        return len(self.states)

    @property
    def quoted(self) -> np.ndarray:
        return self.states == LiquidityState.QUOTED

    @property
    def negative_slots(self) -> np.ndarray:
        """Minutes whose illiquidity came out negative (kept, not clamped)."""
        return np.flatnonzero(self.quoted & (self.values < 0))

    @classmethod
    def from_states(cls, stock_id, date, states, values=None, **kw):
        states = np.asarray([int(s) for s in states], dtype=np.int8)
        if values is None:
            values = np.where(states == LiquidityState.QUOTED, 1.0, np.nan)
        return cls(stock_id, date, states, values, **kw)


@dataclass(frozen=True)
class NoBidEpisode:
    stock_id: str
    date: str
    start_minute: int
    duration_minutes: int
    max_ask_volume: float


def no_bid_episodes(series: IlliquiditySeries) -> list[NoBidEpisode]:
    """Maximal runs of NoBid/NoQuote slots with the peak ask volume per run."""
    lost = np.isin(series.states, (LiquidityState.NO_BID, LiquidityState.NO_QUOTE))
    out = []
    m = 0
    n = len(lost)
    while m < n:
        if not lost[m]:
            m += 1
            continue
        start = m
        while m < n and lost[m]:
            m += 1
        vols = series.ask_volume[start:m]
        vmax = float(np.nanmax(vols)) if np.any(~np.isnan(vols)) else 0.0
        out.append(NoBidEpisode(series.stock_id, series.date, start, m - start, vmax))
    return out


def daily_market_illiquidity(all_series: Iterable[IlliquiditySeries]) -> float:
    """Mean over stocks of each stock's mean Quoted-slot illiquidity."""
    means = []
    for s in all_series:
        q = s.quoted
        if q.any():
            means.append(float(np.mean(s.values[q])))
    if not means:
        raise ValueError("no Quoted slot on this date; market illiquidity undefined")
    return float(np.mean(means))


def loss_state_frequency(all_series: Iterable[IlliquiditySeries]) -> dict[str, np.ndarray]:
    """Per-minute share of stocks in each loss state.

    Used to contrast no-ask / no-bid / no-quote occupation between crash and
    non-crash days for stocks that touched the down limit.
    """
    all_series = list(all_series)
    if not all_series:
        return {s.label: np.zeros(MINUTES_PER_DAY) for s in LOSS_STATES}
    states = np.vstack([s.states for s in all_series])
    return {s.label: (states == s).mean(axis=0) for s in LOSS_STATES}


def pearson(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Pearson r and its two-sided t-test p-value (n - 2 degrees of freedom)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson needs two 1-d series of equal length")
    if len(x) < 3:
        raise ValueError("pearson needs at least 3 observations")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise UndefinedCorrelationError("zero variance: correlation undefined")
    res = stats.pearsonr(x, y)
    r = float(np.clip(res.statistic, -1.0, 1.0))
    return r, float(res.pvalue)


def write_series_csv(path, all_series: Iterable[IlliquiditySeries], header_comment: str | None = None):
    """Export ``date,stock_id,minute,state,value`` plus the detection columns."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_comment:
            fh.write(header_comment.rstrip("\n") + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "stock_id", "minute", "state", "value",
                    "ask_volume", "low_ask_nobid", "low_mid"])
        for s in all_series:
            for m in range(len(s)):
                w.writerow([
                    s.date, s.stock_id, m, LiquidityState(s.states[m]).label,
                    _num(s.values[m]), _num(s.ask_volume[m]),
                    _num(s.low_ask_nobid[m]), _num(s.low_mid[m]),
                ])


def read_series_csv(path) -> list[IlliquiditySeries]:
    rows: dict[tuple[str, str], list] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        lines = (ln for ln in fh if not ln.startswith("#"))
        for row in csv.DictReader(lines):
            rows.setdefault((row["date"], row["stock_id"]), []).append(row)
    out = []
    for (date, sid), rs in rows.items():
        rs.sort(key=lambda r: int(r["minute"]))
        out.append(IlliquiditySeries(
            stock_id=sid,
            date=date,
            states=[LiquidityState.from_label(r["state"]) for r in rs],
            values=[_parse_num(r["value"]) for r in rs],
            ask_volume=[_parse_num(r.get("ask_volume", "")) for r in rs],
            low_ask_nobid=[_parse_num(r.get("low_ask_nobid", "")) for r in rs],
            low_mid=[_parse_num(r.get("low_mid", "")) for r in rs],
        ))
    return out


def read_fear_csv(path) -> dict[str, float]:
    """Optional external ``date,fear`` series, consumed only by :func:`pearson`."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = (ln for ln in fh if not ln.startswith("#"))
        return {r["date"]: float(r["fear"]) for r in csv.DictReader(lines)}


def _num(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)) or (np.isscalar(x) and np.isnan(x)):
        return ""
    return repr(float(x))


def _parse_num(s) -> float:
    return float(s) if s not in ("", None) else math.nan
