"""Non-randomness of simultaneous failures and the next-day crash warning.

Within each short interval the failed stocks are checked against the day's
network: ``w = e / (n (n - 1) / 2)`` is the share of possible links among the
``n`` failed stocks that actually exist.  The daily value ``w_d`` averages the
defined ``w``.  A warning is raised at the close of day ``d`` when none of the
last ``t`` days (``d`` included) had ``w_d == 0``; it targets day ``d + 1``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

from .cascade import FailureEvent
from .dependency import IlliquidityNetwork
from .illiquidity import MINUTES_PER_DAY

INTERVAL_LEN = 10
WINDOW = 5


@dataclass(frozen=True)
class IntervalStat:
    date: str
    interval_index: int
    n_f: int
    e_nf: int

    @property
    def pairs(self) -> int:
        return self.n_f * (self.n_f - 1) // 2

    @property
    def w(self) -> float | None:
        return self.e_nf / self.pairs if self.n_f >= 2 else None

    @property
    def w_exact(self) -> Fraction | None:
        return Fraction(self.e_nf, self.pairs) if self.n_f >= 2 else None


@dataclass(frozen=True)
class SignalState:
    date: str
    w_d: float
    N: int | None
    warn: bool | None  # None during warm-up


@dataclass
class EvaluationReport:
    t: int
    true_positives: int = 0
    false_positives: int = 0
    false_negatives: int = 0
    true_negatives: int = 0
    warned_dates: list = field(default_factory=list)
    hit_dates: list = field(default_factory=list)  # crash days warned the day before
    missed_dates: list = field(default_factory=list)

    @property
    def recall(self) -> float | None:
        den = self.true_positives + self.false_negatives
        return self.true_positives / den if den else None

    @property
    def precision(self) -> float | None:
        den = self.true_positives + self.false_positives
        return self.true_positives / den if den else None

    @property
    def f1(self) -> float | None:
        r, p = self.recall, self.precision
        if r is None or p is None:
            return None
        return 2 * r * p / (r + p) if r + p else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["recall"] = self.recall
        d["precision"] = self.precision
        d["f1"] = self.f1
        return d


def interval_nonrandomness(events: Sequence[FailureEvent], network: IlliquidityNetwork,
                           interval_len: int = INTERVAL_LEN, minutes: int = MINUTES_PER_DAY,
                           date: str | None = None) -> list[IntervalStat]:
    """Per-interval failure counts and links among the failed stocks.

    The last interval is shorter when ``interval_len`` does not divide the
    day.  Failed stocks missing from the network still count in ``n_f``.
    """
    if interval_len < 1:
        raise ValueError("interval_len must be >= 1")
    date = date if date is not None else (events[0].date if events else network.date)
    n_int = -(-minutes // interval_len)
    members: list[list[str]] = [[] for _ in range(n_int)]
    seen = set()
    for e in events:
        if e.stock_id in seen:
            continue
        seen.add(e.stock_id)
        members[e.fail_minute // interval_len].append(e.stock_id)
    out = []
    for k, ids in enumerate(members):
        links = 0
        for a in range(len(ids)):
            for b in range(a + 1, len(ids)):
                if network.has_edge(ids[a], ids[b]):
                    links += 1
        out.append(IntervalStat(date, k, len(ids), links))
    return out


def daily_nonrandomness(stats: Sequence[IntervalStat]) -> float:
    """Mean of the defined interval ``w``; 0 when no interval has two failures."""
    ws = [s.w_exact for s in stats if s.n_f >= 2]
    if not ws:
        return 0.0
    return float(sum(ws, Fraction(0)) / len(ws))


def signal(daily: Sequence[tuple[str, float]], t: int = WINDOW) -> list[SignalState]:
    """Sliding count of zero-``w_d`` days over the ``t`` days ending at each day."""
    if t < 1:
        raise ValueError("window t must be >= 1")
    out = []
    for i, (date, wd) in enumerate(daily):
        if i + 1 < t:
            out.append(SignalState(date, wd, None, None))
            continue
        N = sum(1 for _, w in daily[i + 1 - t:i + 1] if w == 0)
        out.append(SignalState(date, wd, N, N == 0))
    return out


def evaluate(states: Sequence[SignalState], calendar: dict[str, bool], t: int | None = None) -> EvaluationReport:
    """Score warnings against the crash calendar one trading day ahead.

    Days still in warm-up and the last day (no successor) are not evaluable.
    """
    dates = sorted(calendar)
    nxt = {a: b for a, b in zip(dates, dates[1:])}
    if t is None:
        t = sum(1 for s in states if s.warn is None) + 1
    rep = EvaluationReport(t)
    for s in states:
        if s.date not in calendar:
            raise ValueError(f"calendar lacks {s.date}")
        if s.warn is None or s.date not in nxt:
            continue
        target = nxt[s.date]
        crash = calendar[target]
        if s.warn:
            rep.warned_dates.append(s.date)
        if s.warn and crash:
            rep.true_positives += 1
            rep.hit_dates.append(target)
        elif s.warn:
            rep.false_positives += 1
        elif crash:
            rep.false_negatives += 1
            rep.missed_dates.append(target)
        else:
            rep.true_negatives += 1
    return rep


def sweep(daily: Sequence[tuple[str, float]], calendar: dict[str, bool], windows=range(1, 16)) -> list[EvaluationReport]:
    return [evaluate(signal(daily, t), calendar, t) for t in windows]


def write_signal_csv(path, states: Sequence[SignalState], calendar: dict[str, bool], config_hash: str = "") -> None:
    dates = sorted(calendar)
    nxt = {a: b for a, b in zip(dates, dates[1:])}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "w_d", "N", "warn", "next_day_crash"])
        for s in states:
            nd = nxt.get(s.date)
            w.writerow([
                s.date, repr(s.w_d), "" if s.N is None else s.N,
                "" if s.warn is None else int(s.warn),
                "" if nd is None else int(calendar[nd]),
            ])


def read_signal_csv(path) -> list[tuple[str, float, int | None, bool | None, bool | None]]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(ln for ln in fh if not ln.startswith("#")):
            out.append((
                r["date"], float(r["w_d"]),
                int(r["N"]) if r["N"] else None,
                bool(int(r["warn"])) if r["warn"] else None,
                bool(int(r["next_day_crash"])) if r["next_day_crash"] else None,
            ))
    return out


def best_window(reports: Sequence[EvaluationReport]) -> int | None:
    """Window with the highest F1; ties go to the shorter window."""
    scored = [r for r in reports if r.f1 is not None]
    if not scored:
        return None
    return max(scored, key=lambda r: (r.f1, -r.t)).t


def write_sweep_json(path, reports: Sequence[EvaluationReport], config_hash: str = "",
                     extra: dict | None = None) -> None:
    doc = {
        "config_hash": config_hash,
        "best_t": best_window(reports),
        "sweep": [r.to_dict() for r in reports],
    }
    doc.update(extra or {})
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
