"""Synthetic quote-level market with planted ground truth.

Each stock-day carries a latent log-illiquidity path

    z = rho * common + sqrt(1 - rho^2) * (rho_s * sector + sqrt(1 - rho_s^2) * noise)

with ``rho`` raised on crash days.  The path is rendered into ten-level books
whose spread and ask depth grow with ``z`` while bid depth shrinks, so the
depth-weighted spread is increasing in ``z``.

On crash days a cascade is planted: the seed group hits the down limit first,
the core fails together at the day's peak minute and the periphery trails
before and after it.  A few days of clustered small failures (precursor
days) lead into every run of crash days; calm days only see scattered
random failures.  Every planted failure minute is recorded in the manifest.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from .illiquidity import LEVELS, MINUTES_PER_DAY
from .market_data import (
    CAP_STYLES,
    SECTORS,
    QuoteBlock,
    StockMeta,
    down_limit_price,
    write_metadata,
    write_quotes_csv,
)

CALM, PRECURSOR, CRASH = "calm", "precursor", "crash"
_CLOSE_CALL_MINUTES = 3


def _default_sectors():
    return {
        "Financial": 0.1,
        "Manufacturing": 0.3,
        "Information technology": 0.2,
        "Real estate": 0.2,
        "Retailing": 0.2,
    }


@dataclass
class SynthConfig:
    n_stocks: int = 50
    n_days: int = 60
    crash_days: frozenset = frozenset({20, 21, 22, 45, 46, 47})
    seed: int = 0
    base_coupling: float = 0.2
    crash_coupling: float = 0.9
    sector_coupling: float = 0.95
    crash_sector_coupling: float = 0.0
    seed_group: str = "Financial"
    sectors: dict = field(default_factory=_default_sectors)
    snapshot_rate: int = 2
    core_fraction: float = 0.2
    crash_fail_fraction: float = 0.7
    precursor_days: tuple = (4, 6)
    calm_failure_rate: float = 0.5
    missing_rate: float = 0.002
    up_limit_rate: float = 0.02
    start_date: str = "2015-01-05"

    def __post_init__(self):
        self.crash_days = frozenset(int(d) for d in self.crash_days)
        self.precursor_days = tuple(int(x) for x in self.precursor_days)
        self.validate()

    def validate(self):
        if self.n_stocks < 4 or self.n_days < 1:
            raise ValueError("need at least 4 stocks and 1 day")
        if not (0 <= self.base_coupling < 1 and 0 <= self.crash_coupling < 1):
            raise ValueError("couplings must lie in [0, 1)")
        if not self.crash_coupling > self.base_coupling:
            raise ValueError("crash_coupling must exceed base_coupling")
        if not (0 <= self.sector_coupling < 1 and 0 <= self.crash_sector_coupling < 1):
            raise ValueError("sector couplings must lie in [0, 1)")
        if abs(sum(self.sectors.values()) - 1.0) > 1e-9 or any(v < 0 for v in self.sectors.values()):
            raise ValueError("sector fractions must be non-negative and sum to 1")
        unknown = set(self.sectors) - set(SECTORS)
        if unknown:
            raise ValueError(f"unknown sectors {sorted(unknown)}")
        if self.seed_group not in self.sectors:
            raise ValueError("seed_group must be one of the configured sectors")
        if any(not 0 <= d < self.n_days for d in self.crash_days):
            raise ValueError("crash day index outside the calendar")
        if self.snapshot_rate < 1 or self.snapshot_rate > 60:
            raise ValueError("snapshot_rate must lie in [1, 60]")
        lo, hi = self.precursor_days
        if not 0 <= lo <= hi:
            raise ValueError("precursor_days must be an ordered (low, high) pair")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["crash_days"] = sorted(self.crash_days)
        d["precursor_days"] = list(self.precursor_days)
        return d


def trading_dates(start: str, n: int) -> list[str]:
    first = np.busday_offset(np.datetime64(start, "D"), 0, roll="forward")
    return [str(np.busday_offset(first, k)) for k in range(n)]


def _apportion(fractions: dict, n: int) -> list[str]:
    # largest remainder, labels in the config's order
    labels = list(fractions)
    raw = np.array([fractions[k] * n for k in labels])
    base = np.floor(raw).astype(int)
    rest = n - base.sum()
    for k in np.argsort(-(raw - base), kind="stable")[:rest]:
        base[k] += 1
    return [lab for lab, c in zip(labels, base) for _ in range(c)]


@dataclass
class _Structure:
    stock_ids: list
    sectors: list
    cap_styles: list
    roles: list  # seed / core / periphery
    prev_close: np.ndarray  # (n_days, n_stocks)
    base_volume: np.ndarray
    regimes: list
    peaks: dict  # day -> peak minute
    failures: dict  # day -> {stock index: minute}
    up_limit: dict  # day -> {stock index: (start, length)}


class SyntheticMarket:
    """Generated market; quote blocks are rendered lazily and deterministically."""

    def __init__(self, config: SynthConfig):
        self.config = config
        self.dates = trading_dates(config.start_date, config.n_days)
        self._s = self._structure()

    # --- ground truth ---------------------------------------------------

    @property
    def stock_ids(self) -> list:
        return list(self._s.stock_ids)

    @property
    def regimes(self) -> dict:
        return dict(zip(self.dates, self._s.regimes))

    @property
    def crash_calendar(self) -> dict:
        return {d: r == CRASH for d, r in self.regimes.items()}

    def planted_failures(self, day: int) -> dict:
        ids = self._s.stock_ids
        return {ids[i]: m for i, m in sorted(self._s.failures.get(day, {}).items())}

    def metadata(self, day: int) -> dict:
        s = self._s
        return {
            sid: StockMeta(sid, s.sectors[i], s.cap_styles[i], float(s.prev_close[day, i]) / 100.0)
            for i, sid in enumerate(s.stock_ids)
        }

    def roles(self) -> dict:
        return dict(zip(self._s.stock_ids, self._s.roles))

    def suggested_crash_threshold(self) -> int:
        # precursor days plant up to 5 failures; stay above that on small markets
        return max(5, self.config.n_stocks // 4)

    def manifest(self) -> dict:
        s = self._s
        return {
            "config": self.config.to_dict(),
            "dates": self.dates,
            "regimes": self.regimes,
            "stocks": {
                sid: {"sector": s.sectors[i], "cap_style": s.cap_styles[i], "role": s.roles[i]}
                for i, sid in enumerate(s.stock_ids)
            },
            "failures": {self.dates[d]: self.planted_failures(d) for d in range(self.config.n_days)},
            "peaks": {self.dates[d]: p for d, p in sorted(s.peaks.items())},
            "suggested": {
                "crash_threshold": self.suggested_crash_threshold(),
                "peak_min_height": 3,
            },
        }

    # --- structure ------------------------------------------------------

    def _structure(self) -> _Structure:
        cfg = self.config
        rng = np.random.default_rng([cfg.seed, 0])
        n = cfg.n_stocks
        width = len(str(n - 1))
        ids = [f"S{i:0{width}d}" for i in range(n)]
        sectors = _apportion(cfg.sectors, n)
        rng.shuffle(sectors)
        caps = [CAP_STYLES[k] for k in rng.integers(0, len(CAP_STYLES), n)]
        roles = ["periphery"] * n
        others = [i for i in range(n) if sectors[i] != cfg.seed_group]
        n_core = int(round(cfg.core_fraction * len(others)))
        for i in range(n):
            if sectors[i] == cfg.seed_group:
                roles[i] = "seed"
                caps[i] = "Large-cap-value"
        for i in rng.choice(others, size=n_core, replace=False) if n_core else []:
            roles[i] = "core"

        base_px = rng.uniform(5.0, 30.0, n)
        rets = rng.normal(0.0, 0.015, (cfg.n_days, n))
        rets[sorted(cfg.crash_days)] -= 0.05
        prev_close = np.round(base_px * np.exp(np.cumsum(rets, axis=0) - rets[0]) * 100).astype(np.int64)
        prev_close = np.maximum(prev_close, 200)
        base_volume = rng.uniform(300, 800, n)

        regimes = [CALM] * cfg.n_days
        for d in cfg.crash_days:
            regimes[d] = CRASH
        lo, hi = cfg.precursor_days
        for start in sorted(d for d in cfg.crash_days if d - 1 not in cfg.crash_days):
            length = int(rng.integers(lo, hi + 1))
            for d in range(start - length, start):
                if d >= 0 and regimes[d] == CALM:
                    regimes[d] = PRECURSOR

        peaks, failures, up_limit = {}, {}, {}
        seeds = [i for i in range(n) if roles[i] == "seed"]
        core = [i for i in range(n) if roles[i] == "core"]
        periph = [i for i in range(n) if roles[i] == "periphery"]
        last = MINUTES_PER_DAY - 1
        for d in range(cfg.n_days):
            drng = np.random.default_rng([cfg.seed, 3, d])
            fail = {}
            if regimes[d] == CRASH:
                peak = int(drng.integers(150, 201))
                peaks[d] = peak
                for i in seeds:
                    fail[i] = peak - int(drng.integers(12, 26))
                for i in core:
                    fail[i] = peak + int(drng.choice([-1, 0, 0, 0, 1]))
                for i in periph:
                    if drng.random() < cfg.crash_fail_fraction:
                        if drng.random() < 0.3:
                            fail[i] = peak - int(drng.integers(15, 46))
                        else:
                            fail[i] = peak + int(drng.integers(12, 37))
            elif regimes[d] == PRECURSOR:
                pool = seeds + core
                k = int(drng.integers(3, 6))
                block = int(drng.integers(6, MINUTES_PER_DAY // 10))
                for i in drng.choice(pool, size=min(k, len(pool)), replace=False):
                    fail[int(i)] = block * 10 + int(drng.integers(0, 10))
            else:
                for i in drng.choice(n, size=min(n, drng.poisson(cfg.calm_failure_rate)), replace=False):
                    fail[int(i)] = int(drng.integers(0, MINUTES_PER_DAY))
            failures[d] = {i: int(np.clip(m, 0, last)) for i, m in fail.items()}
            if regimes[d] == CALM:
                ups = {}
                for i in range(n):
                    if i not in failures[d] and drng.random() < cfg.up_limit_rate:
                        ups[i] = (int(drng.integers(0, MINUTES_PER_DAY - 20)), int(drng.integers(3, 20)))
                up_limit[d] = ups
        return _Structure(ids, sectors, caps, roles, prev_close, base_volume, regimes,
                          peaks, failures, up_limit)

    # --- rendering ------------------------------------------------------

    def _latent(self, day: int) -> np.ndarray:
        cfg = self.config
        s = self._s
        M = MINUTES_PER_DAY
        regime = s.regimes[day]
        rho = cfg.crash_coupling if regime == CRASH else cfg.base_coupling
        rho_s = cfg.crash_sector_coupling if regime == CRASH else cfg.sector_coupling
        drng = np.random.default_rng([cfg.seed, 1, day])
        common = _ar1(drng.standard_normal(M))
        labels = sorted(set(s.sectors))
        sector_f = {lab: _ar1(drng.standard_normal(M)) for lab in labels}
        z = np.empty((cfg.n_stocks, M))
        for i in range(cfg.n_stocks):
            srng = np.random.default_rng([cfg.seed, 2, day, i])
            own = _ar1(srng.standard_normal(M))
            z[i] = rho * common + np.sqrt(1 - rho**2) * (rho_s * sector_f[s.sectors[i]] + np.sqrt(1 - rho_s**2) * own)
        shift = {CRASH: 0.8, PRECURSOR: 0.3, CALM: 0.0}[regime]
        return z + shift

    def day_blocks(self, day: int) -> dict[str, QuoteBlock]:
        """Quote blocks for every stock on trading day index ``day``."""
        z = self._latent(day)
        return {sid: self._render(day, i, z[i]) for i, sid in enumerate(self._s.stock_ids)}

    def _render(self, day: int, i: int, z: np.ndarray) -> QuoteBlock:
        cfg = self.config
        s = self._s
        M = MINUTES_PER_DAY
        rng = np.random.default_rng([cfg.seed, 4, day, i])
        rate = cfg.snapshot_rate
        regime = s.regimes[day]
        prev = int(s.prev_close[day, i])
        limit = int(round(down_limit_price(prev / 100.0) * 100))
        fail = s.failures.get(day, {}).get(i)
        up = s.up_limit.get(day, {}).get(i)

        # session minutes plus the closing call, each with ``rate`` snapshots
        n_min = M + _CLOSE_CALL_MINUTES
        minute = np.repeat(np.arange(n_min), rate)
        sub = np.tile(np.arange(rate), n_min)
        step = 60 // rate
        ts = minute * 60 + sub * step + rng.integers(0, step, minute.size)
        zz = np.concatenate([z, np.full(_CLOSE_CALL_MINUTES, z[-1])])[minute]

        drift = {CRASH: -0.06, PRECURSOR: -0.02, CALM: 0.0}[regime]
        walk = np.cumsum(rng.normal(drift / M, 0.0015, n_min))
        mid = np.round(prev * (1.0 + rng.normal(0, 0.004)) * np.exp(walk))[minute]
        floor = limit + max(5, int(round(0.015 * limit)))
        mid = np.maximum(mid, floor).astype(np.int64)

        spread = np.clip(np.round(2.0 * np.exp(0.6 * zz)), 1, 40).astype(np.int64)
        ask1 = mid + (spread + 1) // 2
        bid1 = ask1 - spread
        lv = np.arange(LEVELS)
        ask_c = ask1[:, None] + lv[None, :]
        bid_c = bid1[:, None] - lv[None, :]
        vb0 = s.base_volume[i]
        jit_a = np.exp(rng.normal(0, 0.1, (len(ts), LEVELS)))
        jit_b = np.exp(rng.normal(0, 0.1, (len(ts), LEVELS)))
        ask_v = np.maximum(1, np.round(vb0 * np.exp(0.5 * zz)[:, None] * jit_a))
        bid_v = np.maximum(1, np.round(vb0 * np.exp(-0.5 * zz)[:, None] * jit_b))

        ask_px = ask_c / 100.0
        bid_px = np.where(bid_c > 0, bid_c / 100.0, np.nan)
        bid_v = np.where(bid_c > 0, bid_v, 0.0)

        if up is not None:
            a, ln = up
            off = (minute >= a) & (minute < a + ln)
            ask_px[off] = np.nan
            ask_v[off] = 0.0

        if fail is not None:
            pinned = minute >= fail
            since = np.maximum(0, minute - fail)
            panic = {CRASH: 4.0, PRECURSOR: 2.0, CALM: 1.0}[regime] * rng.uniform(0.8, 1.2)
            ask_px[pinned] = (limit + lv[None, :]) / 100.0
            top = np.round(vb0 * panic * 5 * (1.0 + np.log1p(since[pinned])))
            ask_v[pinned, 0] = top
            bid_px[pinned] = np.nan
            bid_v[pinned] = 0.0

        keep = np.ones(len(ts), dtype=bool)
        if cfg.missing_rate > 0:
            gone = rng.random(M) < cfg.missing_rate
            if fail is not None:
                gone[fail] = False
            keep &= ~gone[np.minimum(minute, M - 1)] | (minute >= M)
        return QuoteBlock(s.stock_ids[i], ts[keep].astype(float), ask_px[keep], ask_v[keep],
                          bid_px[keep], bid_v[keep])

    def iter_days(self) -> Iterator[tuple[int, str, dict]]:
        for d, date in enumerate(self.dates):
            yield d, date, self.day_blocks(d)

    # --- files ----------------------------------------------------------

    def write(self, out_dir) -> dict:
        """Write quote CSVs, metadata CSV and the manifest; returns the manifest."""
        os.makedirs(out_dir, exist_ok=True)
        rows = []
        for d, date in enumerate(self.dates):
            meta = self.metadata(d)
            rows.extend((date, meta[sid]) for sid in self._s.stock_ids)
            snaps = []
            for sid, block in self.day_blocks(d).items():
                snaps.extend(block.snapshots())
            write_quotes_csv(snaps, os.path.join(out_dir, f"quotes_{date}.csv"))
        write_metadata(rows, os.path.join(out_dir, "metadata.csv"))
        man = self.manifest()
        with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(man, fh, indent=1, sort_keys=True)
            fh.write("\n")
        return man


def _ar1(eps: np.ndarray, phi: float = 0.3) -> np.ndarray:
    out = np.empty_like(eps)
    out[0] = eps[0]
    scale = np.sqrt(1 - phi**2)
    for t in range(1, len(eps)):
        out[t] = phi * out[t - 1] + scale * eps[t]
    return out


def generate(config: SynthConfig, out_dir=None) -> SyntheticMarket:
    market = SyntheticMarket(config)
    if out_dir is not None:
        market.write(out_dir)
    return market
