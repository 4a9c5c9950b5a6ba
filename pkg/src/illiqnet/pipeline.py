"""Day-level analysis steps shared by the command line and end-to-end checks."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .cascade import (
    BeforePeakScore, DistanceProfile, FailureEvent, PeakSet, before_peak_score, crash_days,
    detect_failures, detect_peaks, distance_profile, failure_counts,
)
from .config import PipelineConfig
from .dependency import (
    DependencyMatrix, GCCStats, IlliquidityNetwork, ThresholdFallbackWarning, build_network,
    discretize, gcc_ratio, nmi_stats, pairwise_nmi, select_threshold,
)
from .dynamics import GROUPINGS
from .early_warning import IntervalStat, daily_nonrandomness, evaluate, interval_nonrandomness, signal, sweep
from .illiquidity import IlliquiditySeries
from .market_data import aggregate_block


@dataclass
class DayNetwork:
    date: str
    matrix: DependencyMatrix
    nmi_mean: float
    nmi_std: float
    network: IlliquidityNetwork
    gcc: GCCStats
    fallback: bool = False


@dataclass
class DayCascade:
    date: str
    events: list
    peaks: PeakSet
    scores: dict = field(default_factory=dict)  # grouping -> list of BeforePeakScore
    profile: DistanceProfile | None = None


def network_for_day(series: Sequence[IlliquiditySeries], date: str, meta: dict | None,
                    cfg: PipelineConfig) -> DayNetwork:
    """Discretize, compute all-pairs NMI, pick the threshold and build the graph."""
    ordered = sorted(series, key=lambda s: s.stock_id)
    matrix = pairwise_nmi([discretize(s, cfg.bins) for s in ordered], date, cfg.workers)
    mean, std = nmi_stats(matrix)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ThresholdFallbackWarning)
        thr = select_threshold(matrix, cfg.step)
    fallback = any(issubclass(w.category, ThresholdFallbackWarning) for w in caught)
    net = build_network(matrix, thr, meta)
    return DayNetwork(date, matrix, mean, std, net, gcc_ratio(net), fallback)


def failures_for_day(series: Iterable[IlliquiditySeries], meta: dict, tol: float) -> list[FailureEvent]:
    """First down-limit minute of every stock with metadata; sorted by stock."""
    out = []
    for s in sorted(series, key=lambda s: s.stock_id):
        m = meta.get(s.stock_id)
        if m is None:
            continue
        ev = detect_failures(s, m, tol)
        if ev is not None:
            out.append(ev)
    return out


def cascade_for_day(events: Sequence[FailureEvent], network: IlliquidityNetwork, meta: dict,
                    cfg: PipelineConfig, date: str) -> DayCascade:
    peaks = detect_peaks(failure_counts(events), cfg.peak_window, cfg.peak_min_height, date)
    out = DayCascade(date, list(events), peaks)
    if not peaks.peaks or not events:
        return out
    for grouping in GROUPINGS:
        out.scores[grouping] = before_peak_score(events, peaks, network, grouping, meta, cfg.shuffles, cfg.seed)
    out.profile = distance_profile(events, peaks, network, cfg.bin_width)
    return out


def nonrandomness_for_day(events, network, cfg: PipelineConfig, date: str) -> tuple[list[IntervalStat], float]:
    stats = interval_nonrandomness(events, network, cfg.interval_len, date=date)
    return stats, daily_nonrandomness(stats)


@dataclass
class MarketRun:
    """Everything computed for a synthetic market, day by day."""

    dates: list
    regimes: dict
    networks: dict = field(default_factory=dict)
    cascades: dict = field(default_factory=dict)
    w_d: dict = field(default_factory=dict)
    calendar: dict = field(default_factory=dict)

    def signal(self, t: int):
        return signal([(d, self.w_d[d]) for d in self.dates], t)

    def evaluation(self, t: int):
        return evaluate(self.signal(t), self.calendar, t)

    def sweep(self, windows=range(1, 16)):
        return sweep([(d, self.w_d[d]) for d in self.dates], self.calendar, windows)

    def score(self, date: str, group: str, grouping: str = "sector") -> BeforePeakScore | None:
        for s in self.cascades[date].scores.get(grouping, []):
            if s.group_id == group:
                return s
        return None


def run_market(market, cfg: PipelineConfig, days: Iterable[int] | None = None) -> MarketRun:
    """Aggregate, network, cascade and signal stages over a synthetic market in memory."""
    idx = list(range(len(market.dates))) if days is None else list(days)
    run = MarketRun([market.dates[d] for d in idx], {market.dates[d]: market.regimes[market.dates[d]] for d in idx})
    events_by_date = {}
    for d in idx:
        date = market.dates[d]
        meta = market.metadata(d)
        series = [aggregate_block(b, date) for b in market.day_blocks(d).values()]
        dn = network_for_day(series, date, meta, cfg)
        events = failures_for_day(series, meta, cfg.limit_tolerance)
        run.networks[date] = dn
        run.cascades[date] = cascade_for_day(events, dn.network, meta, cfg, date)
        run.w_d[date] = nonrandomness_for_day(events, dn.network, cfg, date)[1]
        events_by_date[date] = events
    run.calendar = crash_days(events_by_date, cfg.crash_threshold)
    return run


def regime_nmi(run: MarketRun, regime: str) -> np.ndarray:
    """Rows of (mean, std) NMI for the days of one planted regime."""
    return np.array([(run.networks[d].nmi_mean, run.networks[d].nmi_std)
                     for d in run.dates if run.regimes[d] == regime]).reshape(-1, 2)
