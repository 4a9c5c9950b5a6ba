import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from illiqnet.illiquidity import MINUTES_PER_DAY, LiquidityState
from illiqnet.market_data import (
    CAP_STYLES, FORMAT_TAG, QuoteBlock, QuoteFormatError, QuoteSnapshot, QuoteValidationError, StockMeta,
    TradingDay, aggregate_block, aggregate_minute, coverage_report, down_limit_price, load_metadata,
    parse_quotes, write_metadata, write_quotes_binary, write_quotes_csv,
)

HEADER = "stock_id,ts,ask_prices,ask_volumes,bid_prices,bid_volumes"


def _csv(*rows):
    return "\n".join([FORMAT_TAG, HEADER, *rows]).encode() + b"\n"


def test_csv_row_maps_fields():
    res = parse_quotes(_csv("S1,0,10.01;10.02,100;50,9.99;9.98,200;80"))
    (s,) = res.snapshots
    assert s.ask_prices == (10.01, 10.02) and s.ask_volumes == (100, 50)
    assert s.bid_prices == (9.99, 9.98) and s.bid_volumes == (200, 80)
    assert res.n_rejected == 0


def test_empty_bid_side_is_kept():
    (s,) = parse_quotes(_csv("S1,5,9.00,1000,,")).snapshots
    assert s.bid_prices == () and s.ask_prices == (9.0,)


def test_crossed_book_reports_row_number():
    res = parse_quotes(_csv("S1,0,10.01,1,9.99,1", "S1,1,9.99,100,10.01,100"))
    assert res.n_parsed == 1 and res.n_rejected == 1
    assert res.rejected[0].row == 4
    with pytest.raises(QuoteValidationError) as exc:
        parse_quotes(_csv("S1,1,9.99,100,10.01,100"), strict=True)
    assert exc.value.row == 3


def test_bad_header_is_a_format_error():
    with pytest.raises(QuoteFormatError):
        parse_quotes(b"stock,ts\nS1,0\n")
    with pytest.raises(QuoteFormatError):
        parse_quotes(b"ILQX\x01\x00\x00\x00", fmt="binary")


def test_output_sorted_per_stock():
    res = parse_quotes(_csv("B,3,10.01,1,,", "A,7,10.01,1,,", "B,1,10.01,1,,", "A,2,10.01,1,,"))
    assert [(s.stock_id, s.ts) for s in res.snapshots] == [("A", 2), ("A", 7), ("B", 1), ("B", 3)]


@pytest.mark.parametrize("row", [
    "S1,0,10.02;10.01,1;1,,",        # ask not ascending
    "S1,0,,,9.98;9.99,1;1",          # bid not descending
    "S1,0,10.01,-5,,",               # negative volume
    "S1,0,0,5,,",                    # zero price
    "S1,0,10.01;10.02,1,,",          # length mismatch
    "S1,x,10.01,1,,",                # bad timestamp
    "S1,0,10.01,1",                  # missing fields
])
def test_invariant_violations_rejected(row):
    res = parse_quotes(_csv(row))
    assert res.n_parsed == 0 and res.n_rejected == 1


price = st.integers(1, 5000)


@st.composite
def snapshots(draw):
    sid = draw(st.sampled_from(["A", "B", "600000.SH"]))
    ts = draw(st.integers(0, 14300)) / 4
    mid = draw(st.integers(200, 5000))
    na, nb = draw(st.integers(0, 10)), draw(st.integers(0, 10))
    asks = [(mid + 1 + k) / 100 for k in range(na)]
    bids = [(mid - 1 - k) / 100 for k in range(nb)]
    vol = st.integers(0, 10**7)
    return QuoteSnapshot(sid, ts, asks, [draw(vol) for _ in asks], bids, [draw(vol) for _ in bids])


@given(st.lists(snapshots(), max_size=25))
def test_round_trip_both_formats(snaps):
    ordered = sorted(snaps, key=lambda s: (s.stock_id, s.ts))
    for fmt, writer in (("csv", write_quotes_csv), ("binary", write_quotes_binary)):
        back = parse_quotes(writer(ordered), fmt=fmt)
        assert back.n_rejected == 0
        assert back.snapshots == ordered


@given(st.lists(st.tuples(snapshots(), st.booleans()), max_size=20))
def test_row_count_conservation(rows):
    lines = []
    for snap, corrupt in rows:
        text = write_quotes_csv([snap]).decode().splitlines()[2]
        lines.append(text.replace(",", ";", 1) if corrupt else text)
    res = parse_quotes(_csv(*lines))
    assert res.n_parsed + res.n_rejected == res.n_rows == len(rows)
    assert res.n_rejected == sum(c for _, c in rows)


def test_binary_truncated_record_counted():
    snaps = [QuoteSnapshot("A", 0, [10.01], [1], [9.99], [1]), QuoteSnapshot("A", 1, [10.01], [1], [9.99], [1])]
    data = bytearray(write_quotes_binary(snaps))
    rec = (len(data) - 8) // 2  # both records have the same size, length prefix included
    # n_ask of the second record sits after its prefix, id length, id and timestamp
    data[8 + rec + 4 + 2 + 1 + 8] = 3
    res = parse_quotes(bytes(data), fmt="binary")
    assert res.n_rows == 2 and res.n_parsed == 1 and res.n_rejected == 1


@pytest.mark.parametrize("prev,limit", [(10.00, 9.00), (7.77, 6.99), (10.05, 9.05), (3.15, 2.84)])
def test_down_limit_rounding(prev, limit):
    assert down_limit_price(prev) == limit


def test_limit_ratio_override():
    assert StockMeta("S", "Financial", "Small-cap-value", 10.0, 0.05).down_limit_price == 9.5


def test_metadata_labels_checked(tmp_path):
    good = StockMeta("S1", "Financial", CAP_STYLES[0], 10.0)
    path = tmp_path / "meta.csv"
    write_metadata([("2015-01-05", good)], path)
    assert load_metadata(path)["2015-01-05"]["S1"] == good
    text = path.read_text().replace("Financial", "Banking")
    with pytest.raises(QuoteValidationError) as exc:
        load_metadata(io.BytesIO(text.encode()))
    assert exc.value.row == 3


def test_coverage_report_lists_unknown_stocks():
    meta = {"A": StockMeta("A", "Financial", CAP_STYLES[0], 10.0)}
    assert coverage_report(meta, ["A", "C", "B"]) == ["B", "C"]


def _snap(ts, state="q", sid="S"):
    if state == "q":
        return QuoteSnapshot(sid, ts, [10.01], [100], [9.99], [100])
    if state == "nobid":
        return QuoteSnapshot(sid, ts, [9.0], [1000], [], [])
    if state == "noask":
        return QuoteSnapshot(sid, ts, [], [], [11.0], [500])
    return QuoteSnapshot(sid, ts, [], [], [], [])


def test_slot_mean_of_illiquidity():
    snaps = [QuoteSnapshot("S", t, [10.01], [v], [9.99], [100]) for t, v in ((0, 200), (20, 300), (59.9, 400))]
    ser = aggregate_minute(snaps, TradingDay("d"))
    # per-snapshot values (20.02 v - 999) / 10 / 10 * 10000, averaged
    expected = np.mean([((10.01 * v - 9.99 * 100) / 10) / 10.0 * 10000 for v in (200, 300, 400)])
    assert ser.values[0] == pytest.approx(expected, rel=1e-12)
    assert ser.states[0] == LiquidityState.QUOTED
    assert ser.states[1] == LiquidityState.MISSING


def test_majority_state_and_severity_tie_break():
    snaps = [_snap(0, "nobid"), _snap(1, "nobid"), _snap(2, "q"),
             _snap(60, "q"), _snap(61, "nobid"),
             _snap(120, "noask"), _snap(121, "none")]
    ser = aggregate_minute(snaps, TradingDay("d"))
    assert ser.states[0] == LiquidityState.NO_BID
    assert ser.states[1] == LiquidityState.NO_BID
    assert ser.states[2] == LiquidityState.NO_QUOTE
    assert np.isnan(ser.values[0]) and np.isnan(ser.values[1])


def test_left_closed_slot_boundary():
    ser = aggregate_minute([_snap(59.999), _snap(60.0, "nobid")], TradingDay("d"))
    assert ser.states[0] == LiquidityState.QUOTED
    assert ser.states[1] == LiquidityState.NO_BID


@given(st.lists(st.floats(0, 14400, allow_nan=False), min_size=0, max_size=200))
def test_always_237_slots(times):
    snaps = [_snap(t) for t in sorted(times)]
    ser = aggregate_block(QuoteBlock.from_snapshots(snaps, "S"), "d")
    assert len(ser) == MINUTES_PER_DAY
    expected = {int(t // 60) for t in times if t < 60 * MINUTES_PER_DAY}
    assert set(np.flatnonzero(ser.states != LiquidityState.MISSING)) == expected


def test_dense_session_gives_237_slots():
    snaps = [_snap(t) for t in np.arange(0, 14400, 3.0)]
    ser = aggregate_minute(snaps, TradingDay("d"))
    assert len(ser) == 237 and not np.any(ser.states == LiquidityState.MISSING)


def test_unsorted_block_rejected():
    block = QuoteBlock.from_snapshots([_snap(5), _snap(1)])
    with pytest.raises(ValueError):
        aggregate_block(block, "d")


def test_generated_rows_all_accepted(small_market, tmp_path):
    small_market.write(tmp_path)
    for date in small_market.dates[:3]:
        res = parse_quotes(tmp_path / f"quotes_{date}.csv")
        assert res.n_rejected == 0 and res.n_parsed == res.n_rows > 0
