"""Down-limit failures, intraday failure peaks and cascade profiling."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dependency import IlliquidityNetwork
from .dynamics import group_of
from .illiquidity import MINUTES_PER_DAY, IlliquiditySeries, UndefinedCorrelationError, pearson

LIMIT_TOLERANCE = 0.005
CRASH_THRESHOLD = 800
PEAK_WINDOW = 10
PEAK_MIN_HEIGHT = 5
SHUFFLES = 100
BIN_WIDTH = 5


@dataclass(frozen=True)
class FailureEvent:
    stock_id: str
    date: str
    fail_minute: int


@dataclass
class PeakSet:
    date: str
    peaks: list
    counts: np.ndarray


@dataclass(frozen=True)
class BeforePeakScore:
    group_id: str
    date: str
    R_bp: float
    R_bpr: float
    n_bp_ij: int
    N_bp_j: int
    N_ij: int
    N_j: int
    shuffles: int
    seed: int
    grouping: str = "sector"

    @property
    def S(self) -> float:
        return self.R_bp - self.R_bpr


@dataclass
class DistanceProfile:
    date: str
    points: list = field(default_factory=list)  # (signed distance, |distance|, degree, stock_id)
    bins: list = field(default_factory=list)  # (bin_center, max_degree)
    r: float | None = None
    p_value: float | None = None


def detect_failures(series: IlliquiditySeries, meta, tol: float = LIMIT_TOLERANCE) -> FailureEvent | None:
    """First minute at the down limit.

    A minute counts when an ask-only book offers at the limit, or when a
    two-sided book's mid price sits at the limit (within ``tol``).
    """
    level = meta.down_limit_price + tol
    with np.errstate(invalid="ignore"):
        hit = (series.low_ask_nobid <= level) | (series.low_mid <= level)
    idx = np.flatnonzero(hit)
    if idx.size == 0:
        return None
    return FailureEvent(series.stock_id, series.date, int(idx[0]))


def crash_days(events_by_date: dict, threshold: int = CRASH_THRESHOLD) -> dict[str, bool]:
    """Crash iff strictly more than ``threshold`` distinct stocks failed that day."""
    return {d: len({e.stock_id for e in evs}) > threshold for d, evs in sorted(events_by_date.items())}


def failure_counts(events: Iterable[FailureEvent], minutes: int = MINUTES_PER_DAY) -> np.ndarray:
    counts = np.zeros(minutes, dtype=np.int64)
    seen = set()
    for e in events:
        if e.stock_id in seen:
            continue
        seen.add(e.stock_id)
        counts[e.fail_minute] += 1
    return counts


def detect_peaks(counts: Sequence[int], window: int = PEAK_WINDOW, min_height: int = PEAK_MIN_HEIGHT,
                 date: str = "") -> PeakSet:
    """Minutes that dominate every other minute within ``+-window``.

    A peak needs ``counts[m] >= min_height``.  Against earlier neighbours it
    must be strictly larger; against later ones at least as large, so among
    tied maxima only the earliest survives.
    """
    if window < 1 or min_height < 1:
        raise ValueError("window and min_height must be >= 1")
    c = np.asarray(counts)
    n = len(c)
    peaks = []
    for m in range(n):
        v = c[m]
        if v < min_height:
            continue
        before = c[max(0, m - window):m]
        after = c[m + 1:m + 1 + window]
        if np.all(v > before) and np.all(v >= after):
            peaks.append(m)
    return PeakSet(date, peaks, c)


def assign_peaks(minutes: np.ndarray, peaks: Sequence[int]) -> np.ndarray:
    """Nearest peak for each minute; equidistant minutes go to the earlier peak."""
    p = np.asarray(sorted(peaks))
    minutes = np.asarray(minutes)
    d = np.abs(minutes[:, None] - p[None, :])
    return p[np.argmin(d, axis=1)]  # argmin returns the first (earliest) on ties


def _peaks(peaks) -> list:
    return list(peaks.peaks) if isinstance(peaks, PeakSet) else list(peaks)


def before_peak_score(events: Sequence[FailureEvent], peaks, network: IlliquidityNetwork,
                      grouping: str = "sector", meta: dict | None = None,
                      shuffles: int = SHUFFLES, seed: int = 0) -> list[BeforePeakScore]:
    """Excess share of a group among failures that precede their peak.

    Only failed stocks present in the network (and in the metadata) take
    part.  The baseline re-assigns the same failure minutes to the same
    stocks at random, ``shuffles`` times, with generator seeds
    ``seed + k``.  Days without failures, or where no failure precedes its
    peak, yield no scores.
    """
    peak_list = _peaks(peaks)
    if not peak_list:
        raise ValueError("before_peak_score needs at least one peak")
    if shuffles < 1:
        raise ValueError("shuffles must be >= 1")
    meta = meta if meta is not None else network.meta
    if meta is None:
        raise ValueError("before_peak_score needs stock metadata")

    node_groups = {s: group_of(meta[s], grouping) for s in network.nodes if s in meta}
    if not node_groups:
        return []
    groups = sorted(set(node_groups.values()))
    gindex = {g: k for k, g in enumerate(groups)}
    N_ij = np.bincount([gindex[g] for g in node_groups.values()], minlength=len(groups))
    N_j = len(node_groups)

    failed = [e for e in events if e.stock_id in node_groups]
    if not failed:
        return []
    fg = np.array([gindex[node_groups[e.stock_id]] for e in failed])
    minutes = np.array([e.fail_minute for e in failed])

    def counts_before(mins):
        bp = mins < assign_peaks(mins, peak_list)
        return np.bincount(fg[bp], minlength=len(groups)), int(bp.sum())

    node_share = N_ij / N_j
    n_bp, N_bp = counts_before(minutes)
    if N_bp == 0:
        return []
    R_bp = (n_bp / N_bp) / node_share

    acc = np.zeros(len(groups))
    valid = 0
    for k in range(shuffles):
        rng = np.random.default_rng(seed + k)
        nb, Nb = counts_before(rng.permutation(minutes))
        if Nb:
            acc += (nb / Nb) / node_share
            valid += 1
    R_bpr = acc / valid if valid else np.full(len(groups), np.nan)
    date = failed[0].date
    return [
        BeforePeakScore(g, date, float(R_bp[k]), float(R_bpr[k]), int(n_bp[k]), N_bp,
                        int(N_ij[k]), N_j, shuffles, seed, grouping)
        for g, k in gindex.items()
    ]


def distance_profile(events: Sequence[FailureEvent], peaks, network: IlliquidityNetwork,
                     bin_width: int = BIN_WIDTH) -> DistanceProfile:
    """Degree of failed stocks against their timing distance to the assigned peak.

    Bins are centred on multiples of ``bin_width``; ``r`` correlates bin
    centres with the log of the per-bin maximum degree.
    """
    if bin_width < 1:
        raise ValueError("bin_width must be >= 1")
    peak_list = _peaks(peaks)
    if not peak_list:
        raise ValueError("distance_profile needs at least one peak")
    deg = network.degrees()
    failed = [e for e in events if e.stock_id in deg]
    date = failed[0].date if failed else network.date
    prof = DistanceProfile(date)
    if not failed:
        return prof
    minutes = np.array([e.fail_minute for e in failed])
    assigned = assign_peaks(minutes, peak_list)
    best: dict[int, int] = {}
    for e, m, p in zip(failed, minutes, assigned):
        d = int(m - p)
        prof.points.append((d, abs(d), deg[e.stock_id], e.stock_id))
        k = int(math.floor(abs(d) / bin_width + 0.5))
        best[k] = max(best.get(k, 0), deg[e.stock_id])
    prof.bins = [(k * bin_width, best[k]) for k in sorted(best)]
    if len(prof.bins) >= 3:
        centers = [c for c, _ in prof.bins]
        logdeg = [math.log(d) for _, d in prof.bins]
        try:
            prof.r, prof.p_value = pearson(centers, logdeg)
        except UndefinedCorrelationError:
            prof.r = None
    return prof


# --- persistence -------------------------------------------------------------

def write_failures_csv(path, events: Iterable[FailureEvent], config_hash: str = "") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "stock_id", "fail_minute"])
        for e in events:
            w.writerow([e.date, e.stock_id, e.fail_minute])


def read_failures_csv(path) -> dict[str, list[FailureEvent]]:
    out: dict[str, list[FailureEvent]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(ln for ln in fh if not ln.startswith("#")):
            out.setdefault(row["date"], []).append(
                FailureEvent(row["stock_id"], row["date"], int(row["fail_minute"])))
    return out


def write_before_peak_csv(path, scores: Iterable[BeforePeakScore], config_hash: str = "") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "grouping", "group", "R_bp", "R_bpr", "S", "n_bp_ij", "N_bp_j", "N_ij", "N_j",
                    "shuffles", "seed"])
        for s in scores:
            w.writerow([s.date, s.grouping, s.group_id, repr(s.R_bp), repr(s.R_bpr), repr(s.S),
                        s.n_bp_ij, s.N_bp_j, s.N_ij, s.N_j, s.shuffles, s.seed])
