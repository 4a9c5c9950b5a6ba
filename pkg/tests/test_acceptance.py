"""End-to-end acceptance checks; each test prints one PASS/FAIL line."""

import itertools
import json
import os
import time
from fractions import Fraction

import numpy as np
import pytest

from criteria import check
from illiqnet.cascade import before_peak_score
from illiqnet.cli import SUBCOMMANDS, main
from illiqnet.config import PipelineConfig
from illiqnet.dependency import (
    DiscreteSeries, IlliquidityNetwork, UnionFind, equal_frequency_bins, gcc_sweep, nmi, pairwise_nmi,
)
from illiqnet.dynamics import GROUPINGS, group_proportion
from illiqnet.early_warning import IntervalStat, daily_nonrandomness
from illiqnet.illiquidity import compute_illiquidity
from illiqnet.market_data import CAP_STYLES, QuoteSnapshot, StockMeta
from illiqnet.pipeline import regime_nmi, run_market
from illiqnet.synthetic import SynthConfig, SyntheticMarket
from oracles import bfs_components, oracle_matrix

SEEDS = range(10)


@pytest.fixture(scope="module")
def seed_runs():
    """The default 50-stock, 60-day market (6 crash days) under ten seeds."""
    start = time.perf_counter()
    runs = {}
    for s in SEEDS:
        market = SyntheticMarket(SynthConfig(seed=s))
        cfg = PipelineConfig(crash_threshold=market.suggested_crash_threshold(), peak_min_height=3, seed=s)
        runs[s] = (market, run_market(market, cfg))
    return runs, time.perf_counter() - start


def _crash_dates(run):
    return [d for d in run.dates if run.regimes[d] == "crash"]


# --- 1 -----------------------------------------------------------------------

def _flat(ask, bid, vol=100, levels=10):
    return type("Book", (), {"ask_prices": (ask,) * levels, "ask_volumes": (vol,) * levels,
                             "bid_prices": (bid,) * levels, "bid_volumes": (vol,) * levels})()


def test_criterion_01_illiquidity_exactness():
    start = time.perf_counter()
    flat = compute_illiquidity(_flat(10.01, 9.99))
    mirrored = compute_illiquidity(QuoteSnapshot("S", 0, [10.0, 12.0], [30, 10], [5.0, 4.0], [60, 30]))
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(1000):
        na, nb = rng.integers(1, 11, 2)
        mid = rng.integers(100, 10000)
        gap = rng.integers(1, 50)
        asks = [(mid + gap + k) / 100 for k in range(na)]
        bids = [(mid - gap - k) / 100 for k in range(nb)]
        av, bv = rng.uniform(1, 1e6, na), rng.uniform(1, 1e6, nb)
        c = rng.uniform(0.01, 100)
        base = compute_illiquidity(QuoteSnapshot("S", 0, asks, av, bids, bv))
        scaled = compute_illiquidity(QuoteSnapshot("S", 0, asks, av * c, bids, bv * c))
        worst = max(worst, abs(scaled - c * base) / max(1.0, abs(c * base)))
    elapsed = time.perf_counter() - start
    ok = flat == 2000.0 and mirrored == 0.0 and worst <= 1e-9 and elapsed < 1.0
    check(1, "illiquidity exactness", ok,
          f"flat book {flat!r} (want 2000.0 exact), mirrored {mirrored!r} (want 0), "
          f"max rel scale error {worst:.1e} (<= 1e-9 over 1000 books), {elapsed:.2f}s (< 1 s)")


# --- 2 -----------------------------------------------------------------------

def test_criterion_02_nmi_oracle():
    worst = 0.0
    self_ok = True
    for length in range(1, 9):
        symbols = np.array(list(itertools.product(range(3), repeat=length)), dtype=np.uint8)
        got = pairwise_nmi([DiscreteSeries(str(i), s, 3) for i, s in enumerate(symbols)]).nmi
        worst = max(worst, float(np.abs(got - oracle_matrix(symbols.astype(np.int64), 3)).max()))
        self_ok &= all(nmi(s, s) == 1.0 for s in symbols if s.min() != s.max())
    rng = np.random.default_rng(2)
    perm_worst = 0.0
    for _ in range(1000):
        n, b = int(rng.integers(2, 100)), int(rng.integers(2, 16))
        x, y = rng.integers(0, b, n), rng.integers(0, b, n)
        if rng.random() < 0.5:
            y = (x + rng.integers(0, 2, n)) % b
        order, relabel = rng.permutation(n), rng.permutation(b)
        base = nmi(x, y)
        devs = [nmi(x[order], y[order]), nmi(relabel[x], relabel[y])]
        if x.min() != x.max():  # relabeling one side keeps NMI unless it breaks an identical-constant pair
            devs.append(nmi(relabel[x], y))
        perm_worst = max(perm_worst, *(abs(v - base) for v in devs))
    ok = worst <= 1e-12 and self_ok and perm_worst <= 1e-12
    check(2, "NMI oracle equivalence", ok,
          f"max |nmi - oracle| {worst:.1e} over all pairs of length <= 8 on {{0,1,2}} (<= 1e-12), "
          f"self-NMI == 1: {self_ok}, permutation/relabel deviation {perm_worst:.1e} over 1000 cases (<= 1e-12)")


# --- 3 -----------------------------------------------------------------------

def _crash_nmi(crash_coupling):
    market = SyntheticMarket(SynthConfig(n_stocks=30, n_days=3, crash_days={2}, seed=5, crash_coupling=crash_coupling))
    run = run_market(market, PipelineConfig(crash_threshold=market.suggested_crash_threshold(), peak_min_height=3),
                     days=[2])
    return run.networks[run.dates[0]].nmi_mean


def test_criterion_03_estimator_bias():
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    vals = [nmi(equal_frequency_bins(rng.random(237), 16), equal_frequency_bins(rng.random(237), 16))
            for _ in range(1000)]
    bias = float(np.mean(vals))
    coupled = {c: _crash_nmi(c) for c in (0.5, 0.9)}
    elapsed = time.perf_counter() - start
    ok = bias < 0.25 and all(bias < v for v in coupled.values()) and elapsed < 60
    check(3, "estimator bias bound", ok,
          f"independent mean NMI {bias:.4f} (< 0.25) vs crash-day coupled "
          + ", ".join(f"{v:.4f} at coupling {c}" for c, v in coupled.items())
          + f"; {elapsed:.1f}s (< 60 s)")


# --- 4 -----------------------------------------------------------------------

def test_criterion_04_graph_oracle(default_run):
    rng = np.random.default_rng(4)
    agree = 0
    for _ in range(100):
        n = int(rng.integers(1, 501))
        edges = [tuple(int(v) for v in rng.integers(0, n, 2)) for _ in range(int(rng.integers(0, 2 * n)))]
        uf = UnionFind(n)
        for a, b in edges:
            uf.union(a, b)
        agree += uf.component_sizes() == bfs_components(n, edges)
    monotone = all(np.all(np.diff(gcc_sweep(dn.matrix, 0.01)[1]) <= 0) for dn in default_run.networks.values())
    ok = agree == 100 and monotone
    check(4, "graph oracle", ok,
          f"union-find == BFS on {agree}/100 random graphs (n <= 500, want 100); "
          f"GCC non-increasing over the 0.01-step sweep on all {len(default_run.networks)} days: {monotone}")


# --- 5 -----------------------------------------------------------------------

def test_criterion_05_crash_nmi_direction(seed_runs):
    runs, elapsed = seed_runs
    mean_up = std_down = 0
    for _, run in runs.values():
        crash, calm = regime_nmi(run, "crash"), regime_nmi(run, "calm")
        mean_up += crash[:, 0].mean() > calm[:, 0].mean()
        std_down += crash[:, 1].mean() < calm[:, 1].mean()
    ok = mean_up >= 9 and std_down >= 9 and elapsed < 300
    check(5, "crash-day NMI direction", ok,
          f"crash mean > calm mean in {mean_up}/10 seeds, crash std < calm std in {std_down}/10 seeds "
          f"(each >= 9/10); 10 x 50 stocks x 60 days in {elapsed:.0f}s (< 300 s)")


# --- 6 -----------------------------------------------------------------------

def test_criterion_06_group_proportion(seed_runs):
    meta = {s: StockMeta(s, "Financial" if s == "H" else "Manufacturing", CAP_STYLES[0], 10.0) for s in "Habcd"}
    star = IlliquidityNetwork("d", 0.5, list("Habcd"), [("H", x, 1.0) for x in "abcd"])
    hub = {g.group_id: g.R for g in group_proportion(star, "sector", meta)}["Financial"]
    days = held = 0
    for market, run in seed_runs[0].values():
        for d, date in enumerate(run.dates):
            net = run.networks[date].network
            for grouping in GROUPINGS:
                scores = group_proportion(net, grouping, market.metadata(d))
                days += 1
                held += (sum(s.n_ij for s in scores) == 2 * len(net.edges)) if scores else not net.edges
    ok = hub == 2.5 and held == days
    check(6, "degree-weighted proportion", ok,
          f"star hub R = {hub!r} (want 2.5 exact); sum n_ij == 2|E| on {held}/{days} day-groupings")


# --- 7 -----------------------------------------------------------------------

def test_criterion_07_shuffle_neutrality(seed_runs):
    market, run = seed_runs[0][0]
    per_group: dict[str, list] = {}
    for s in range(50):
        rng = np.random.default_rng([7, s])
        acc: dict[str, list] = {}
        for date in _crash_dates(run):
            cas = run.cascades[date]
            minutes = rng.permutation([e.fail_minute for e in cas.events])
            randomized = [type(e)(e.stock_id, e.date, int(m)) for e, m in zip(cas.events, minutes)]
            meta = market.metadata(run.dates.index(date))
            for sc in before_peak_score(randomized, cas.peaks, run.networks[date].network, "sector", meta,
                                        100, 1000 * s):
                acc.setdefault(sc.group_id, []).append(sc.S)
        for g, v in acc.items():
            per_group.setdefault(g, []).append(np.mean(v))
    z = {g: abs(np.mean(v)) / (np.std(v, ddof=1) / np.sqrt(len(v))) for g, v in per_group.items()}
    neutral = all(v <= 3 for v in z.values())
    positive = 0
    for _, r in seed_runs[0].values():
        fin = [sc.S for d in _crash_dates(r) for sc in r.cascades[d].scores.get("sector", [])
               if sc.group_id == "Financial"]
        positive += bool(fin) and np.mean(fin) > 0
    ok = neutral and positive >= 9
    check(7, "shuffle neutrality and seed-group direction", ok,
          "randomized |mean S| / SE over 50 seeds: "
          + ", ".join(f"{g} {v:.2f}" for g, v in sorted(z.items()))
          + f" (each <= 3); planted Financial S > 0 in {positive}/10 seeds (>= 9)")


# --- 8 -----------------------------------------------------------------------

def test_criterion_08_degree_distance(seed_runs):
    negative, means = 0, []
    for _, run in seed_runs[0].values():
        rs = [run.cascades[d].profile.r for d in _crash_dates(run)
              if run.cascades[d].profile is not None and run.cascades[d].profile.r is not None]
        m = float(np.mean(rs)) if rs else float("nan")
        means.append(m)
        negative += m < 0
    check(8, "degree-distance direction", negative >= 9,
          f"mean crash-day r < 0 in {negative}/10 seeds (>= 9); per-seed r in [{min(means):.2f}, {max(means):.2f}]")


# --- 9 -----------------------------------------------------------------------

def _exact_wd_property(trials=2000):
    rng = np.random.default_rng(9)
    for _ in range(trials):
        stats = []
        for k in range(int(rng.integers(0, 24))):
            n = int(rng.integers(2, 40))
            e = 0 if rng.random() < 0.5 else int(rng.integers(0, n * (n - 1) // 2 + 1))
            stats.append(IntervalStat("d", k, n, e))
        wd = daily_nonrandomness(stats)
        exact = sum((Fraction(s.e_nf, s.pairs) for s in stats), Fraction(0)) / max(1, len(stats))
        if (wd == 0) != all(s.e_nf == 0 for s in stats) or wd != float(exact):
            return False
    return True


def test_criterion_09_warning_recall(tmp_path, seed_runs):
    out = tmp_path / "run"
    base = tmp_path / "base.conf"
    base.write_text("seed = 0\n")
    codes = [main(["synth", "--config", str(base), "--out", str(out)])]
    codes += [main([s, "--config", str(out / "illiqnet.conf"), "--out", str(out)]) for s in SUBCOMMANDS[1:]]
    ev = json.loads((out / "evaluate" / "evaluation.json").read_text())
    recall = ev["at_t"]["recall"]
    swept = [r["t"] for r in ev["sweep"]]
    rows = {}
    for line in (out / "warn" / "intervals.csv").read_text().splitlines()[2:]:
        d, _, n_f, e_nf, _ = line.split(",")
        rows.setdefault(d, []).append((int(n_f), int(e_nf)))
    sig = {ln.split(",")[0]: float(ln.split(",")[1]) for ln in (out / "warn" / "signal.csv").read_text().splitlines()[2:]}
    zero_match = all((sig[d] == 0) == all(e == 0 for n, e in rows[d] if n >= 2) for d in sig)
    exact = _exact_wd_property()
    seed_recall = [run.evaluation(5).recall for _, run in seed_runs[0].values()]
    ok = (all(c == 0 for c in codes) and ev["t"] == 5 and recall is not None and recall >= 0.5
          and swept == list(range(1, 16)) and zero_match and exact)
    check(9, "warning-signal recall", ok,
          f"end-to-end recall at t=5 = {recall} (>= 0.5), exit codes {sorted(set(codes))}, sweep t={swept[0]}..{swept[-1]} "
          f"(1..15), best t={ev['best_t']}, w_d == 0 iff no links: {zero_match}, exact ratio property: {exact}; "
          f"in-memory recall over 10 seeds {min(seed_recall):.2f}..{max(seed_recall):.2f}")


# --- 10 ----------------------------------------------------------------------

def test_criterion_10_pairwise_performance():
    rng = np.random.default_rng(10)
    series = [DiscreteSeries(f"s{i:04d}", rng.integers(0, 16, 237).astype(np.uint8), 16) for i in range(2500)]
    pairwise_nmi(series[:20])  # compile outside the timing
    timings, outputs = {}, {}
    for w in (1, 8):
        start = time.perf_counter()
        outputs[w] = pairwise_nmi(series, workers=w).nmi.tobytes()
        timings[w] = time.perf_counter() - start
    speedup = timings[1] / timings[8]
    identical = outputs[1] == outputs[8]
    fast = min(timings.values()) < 300
    cores = os.cpu_count()
    check(10, "pairwise NMI performance", fast and identical and speedup >= 6.0,
          f"2500 x 237 ({2500 * 2499 // 2} pairs): 1 worker {timings[1]:.1f}s, 8 workers {timings[8]:.1f}s (< 300 s); "
          f"speedup {speedup:.2f} (>= 6.0 near-linear) on {cores} available core(s); "
          f"bit-identical across workers: {identical}")
