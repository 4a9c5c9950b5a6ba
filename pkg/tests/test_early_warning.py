import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from illiqnet.cascade import FailureEvent
from illiqnet.dependency import IlliquidityNetwork
from illiqnet.early_warning import (
    EvaluationReport, IntervalStat, best_window, daily_nonrandomness, evaluate, interval_nonrandomness,
    read_signal_csv, signal, sweep, write_signal_csv, write_sweep_json,
)


def test_w_examples():
    assert IntervalStat("d", 0, 2, 1).w == 1.0
    assert IntervalStat("d", 0, 3, 0).w == 0.0
    assert IntervalStat("d", 0, 3, 2).w_exact == Fraction(2, 3)
    assert IntervalStat("d", 0, 1, 0).w is None


def _triangle_net():
    return IlliquidityNetwork("d", 0.5, list("ABCDE"), [("A", "B", 1), ("B", "C", 1), ("A", "C", 1)])


def test_intervals_cover_day_with_short_tail():
    ev = [FailureEvent("A", "d", 3), FailureEvent("B", "d", 9), FailureEvent("C", "d", 230),
          FailureEvent("D", "d", 236), FailureEvent("E", "d", 15)]
    stats = interval_nonrandomness(ev, _triangle_net())
    assert len(stats) == 24
    assert (stats[0].n_f, stats[0].e_nf) == (2, 1)
    assert (stats[23].n_f, stats[23].e_nf) == (2, 0)
    assert stats[1].n_f == 1
    assert daily_nonrandomness(stats) == 0.5


def test_failed_stock_outside_network_still_counts():
    stats = interval_nonrandomness([FailureEvent("A", "d", 0), FailureEvent("zz", "d", 1)], _triangle_net())
    assert (stats[0].n_f, stats[0].e_nf, stats[0].w) == (2, 0, 0.0)


def test_no_defined_interval_gives_zero():
    assert daily_nonrandomness(interval_nonrandomness([FailureEvent("A", "d", 0)], _triangle_net())) == 0.0
    assert daily_nonrandomness([]) == 0.0


@given(st.lists(st.integers(2, 30).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n * (n - 1) // 2))),
                max_size=24))
def test_w_d_is_zero_exactly_when_no_links(pairs):
    stats = [IntervalStat("d", k, n, e) for k, (n, e) in enumerate(pairs)]
    wd = daily_nonrandomness(stats)
    assert (wd == 0) == all(e == 0 for _, e in pairs)
    if pairs:
        exact = sum(Fraction(e, n * (n - 1) // 2) for n, e in pairs) / len(pairs)
        assert wd == float(exact)


def test_w_unbiased_under_random_failures():
    rng = np.random.default_rng(5)
    n, p = 120, 0.15
    ids = [f"s{i:03d}" for i in range(n)]
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < p
    net = IlliquidityNetwork("d", 0.5, ids, [(ids[i], ids[j], 1.0) for i, j in zip(iu[keep], ju[keep])])
    density = keep.mean()
    ws = []
    for _ in range(3000):
        chosen = rng.choice(n, 6, replace=False)
        ev = [FailureEvent(ids[c], "d", 0) for c in chosen]
        ws.append(interval_nonrandomness(ev, net)[0].w)
    se = np.std(ws) / np.sqrt(len(ws))
    assert abs(np.mean(ws) - density) < 3 * se


def _days(values):
    return [(f"2015-01-{i + 1:02d}", v) for i, v in enumerate(values)]


def test_signal_warm_up_and_counts():
    states = signal(_days([0.0, 0.2, 0.3, 0.0, 0.1, 0.4, 0.5]), t=3)
    assert [s.warn for s in states] == [None, None, False, False, False, False, True]
    assert [s.N for s in states] == [None, None, 1, 1, 1, 1, 0]


@given(st.lists(st.sampled_from([0.0, 0.1, 0.5]), min_size=1, max_size=40), st.integers(1, 14))
def test_longer_window_warns_no_more_often(values, t):
    short, long = signal(_days(values), t), signal(_days(values), t + 1)
    for a, b in zip(short, long):
        if b.warn:
            assert a.warn
        if a.N is not None and b.N is not None:
            assert a.N <= b.N


def test_evaluate_confusion_counts():
    daily = _days([0.1, 0.2, 0.0, 0.3, 0.0])
    cal = {d: False for d, _ in daily}
    cal["2015-01-03"] = True
    rep = evaluate(signal(daily, 1), cal, 1)
    # warns on days 1, 2 and 4; only day 2 precedes the crash
    assert (rep.true_positives, rep.false_positives, rep.false_negatives, rep.true_negatives) == (1, 2, 0, 1)
    assert rep.hit_dates == ["2015-01-03"] and rep.recall == 1.0 and rep.precision == pytest.approx(1 / 3)

    cal2 = {d: False for d, _ in daily}
    cal2["2015-01-05"] = True
    rep2 = evaluate(signal(daily, 1), cal2, 1)
    assert (rep2.true_positives, rep2.false_positives) == (1, 2)


def test_evaluate_never_warn():
    daily = _days([0.0] * 6)
    cal = {d: i == 3 for i, (d, _) in enumerate(daily)}
    rep = evaluate(signal(daily, 2), cal, 2)
    assert rep.true_positives == 0 and rep.false_negatives == 1
    assert rep.recall == 0.0 and rep.precision is None and rep.f1 is None


def test_sweep_and_best_window(tmp_path):
    daily = _days([0.2, 0.0, 0.3, 0.4, 0.5, 0.0, 0.2, 0.3])
    cal = {d: i == 5 for i, (d, _) in enumerate(daily)}
    reports = sweep(daily, cal, range(1, 6))
    assert [r.t for r in reports] == [1, 2, 3, 4, 5]
    assert best_window(reports) == 3
    assert best_window([EvaluationReport(1)]) is None
    write_sweep_json(tmp_path / "s.json", reports, "h", {"t": 5})
    doc = json.loads((tmp_path / "s.json").read_text())
    assert doc["best_t"] == 3 and doc["t"] == 5 and len(doc["sweep"]) == 5


def test_signal_csv_round_trip(tmp_path):
    daily = _days([0.0, 0.25, 0.5])
    cal = {d: i == 2 for i, (d, _) in enumerate(daily)}
    write_signal_csv(tmp_path / "s.csv", signal(daily, 2), cal, "h")
    assert read_signal_csv(tmp_path / "s.csv") == [
        ("2015-01-01", 0.0, None, None, False),
        ("2015-01-02", 0.25, 1, False, True),
        ("2015-01-03", 0.5, 0, True, None),
    ]


def test_calendar_must_cover_signal():
    with pytest.raises(ValueError):
        evaluate(signal(_days([0.1]), 1), {})
