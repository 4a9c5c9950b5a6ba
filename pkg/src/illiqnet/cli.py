"""Staged command-line pipeline: synth, ingest, illiq, net, dynamics, cascade, warn, evaluate, report.

Every stage writes into ``<out>/<stage>/`` and records a ``stage.json`` with
the config hash and the days it completed.  Downstream stages refuse to read
a missing or differently-configured upstream stage.

Exit codes: 0 success, 1 some days or rows failed (listed on stderr),
2 usage or configuration error, 3 missing or mismatched upstream stage.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import glob
import json
import math
import os
import re
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from . import plotting
from .cascade import (
    crash_days, read_failures_csv, write_before_peak_csv, write_failures_csv,
)
from .config import ConfigError, PipelineConfig
from .dependency import read_network, write_matrix, write_network
from .dynamics import GROUPINGS, group_proportion, link_evolution, write_evolution_csv, write_scores_csv
from .early_warning import (
    evaluate, read_signal_csv, signal, sweep, write_signal_csv, write_sweep_json,
)
from .illiquidity import (
    LOSS_STATES, MINUTES_PER_DAY, LiquidityState, UndefinedCorrelationError, daily_market_illiquidity,
    loss_state_frequency, no_bid_episodes, pearson, read_fear_csv, read_series_csv, write_series_csv,
)
from .market_data import (
    QuoteBlock, QuoteFormatError, QuoteValidationError, aggregate_block, coverage_report, group_by_stock,
    load_metadata, parse_quotes,
)
from .pipeline import cascade_for_day, failures_for_day, network_for_day, nonrandomness_for_day
from .synthetic import SynthConfig, generate

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE, EXIT_STAGE = 0, 1, 2, 3
SUBCOMMANDS = ("synth", "ingest", "illiq", "net", "dynamics", "cascade", "warn", "evaluate", "report")
_QUOTE_FILE = re.compile(r"^quotes_(\d{4}-\d{2}-\d{2})\.(csv|bin)$")


class UsageError(Exception):
    pass


class StageDependencyError(Exception):
    pass


@dataclass
class Context:
    cfg: PipelineConfig
    out: str
    days: str | None = None
    failures: list = field(default_factory=list)  # (date, message)

    @property
    def config_hash(self) -> str:
        return self.cfg.config_hash()

    def stage_dir(self, stage: str) -> str:
        path = os.path.join(self.out, stage)
        os.makedirs(path, exist_ok=True)
        return path

    def path(self, stage: str, name: str) -> str:
        return os.path.join(self.out, stage, name)

    def fail(self, stage: str, date: str, message: str) -> None:
        self.failures.append((date, message))
        print(f"illiqnet {stage}: {date}: {message}", file=sys.stderr)


# --- stage bookkeeping -------------------------------------------------------

def _write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _finish(ctx: Context, stage: str, dates, **extra) -> None:
    doc = {"stage": stage, "config_hash": ctx.config_hash, "dates": list(dates),
           "failed": [d for d, _ in ctx.failures]}
    doc.update(extra)
    _write_json(ctx.path(stage, "stage.json"), doc)


def _require(ctx: Context, stage: str) -> dict:
    path = ctx.path(stage, "stage.json")
    if not os.path.exists(path):
        raise StageDependencyError(
            f"missing output of stage '{stage}' under {ctx.out}; run `illiqnet {stage}` first")
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("config_hash") != ctx.config_hash:
        raise StageDependencyError(
            f"stage '{stage}' was produced with config {doc.get('config_hash')}, current config is "
            f"{ctx.config_hash}; rerun `illiqnet {stage}`")
    return doc


@contextlib.contextmanager
def _csv_out(path, config_hash: str, header):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        yield w


def _read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(ln for ln in fh if not ln.startswith("#")))


def parse_days(spec: str | None, dates: list[str]) -> list[str]:
    """Filter ``dates`` by a ``--days`` selector.

    The selector is a comma list of items, each a date, a 0-based index, or
    an inclusive range ``A:B`` of either (open ends allowed).
    """
    if not spec:
        return list(dates)

    def pos(tok: str, default: int) -> int:
        tok = tok.strip()
        if not tok:
            return default
        if re.fullmatch(r"-?\d+", tok):
            k = int(tok)
            if not -len(dates) <= k < len(dates):
                raise UsageError(f"day index {k} outside 0..{len(dates) - 1}")
            return k % len(dates)
        if tok in dates:
            return dates.index(tok)
        if re.fullmatch(r"\d{4}-\d{2}-\d{2}", tok):
            # bounds may fall on days without data
            return sum(1 for d in dates if d < tok) if default == 0 else sum(1 for d in dates if d <= tok) - 1
        raise UsageError(f"bad --days item {tok!r}")

    keep = set()
    for item in spec.split(","):
        if ":" in item:
            a, b = item.split(":", 1)
            lo, hi = pos(a, 0), pos(b, len(dates) - 1)
            keep.update(range(lo, hi + 1))
        else:
            tok = item.strip()
            if re.fullmatch(r"\d{4}-\d{2}-\d{2}", tok) and tok not in dates:
                raise UsageError(f"no data for day {tok}")
            keep.add(pos(tok, 0))
    return [d for i, d in enumerate(dates) if i in keep]


def _map_days(ctx: Context, stage: str, fn, dates):
    """Run ``fn(date)`` over days on ``workers`` threads; failed days are reported."""
    def guarded(date):
        try:
            return fn(date)
        except (ValueError, KeyError, OSError, QuoteFormatError) as exc:
            return exc

    if ctx.cfg.workers > 1 and len(dates) > 1:
        with ThreadPoolExecutor(max_workers=ctx.cfg.workers) as pool:
            results = list(pool.map(guarded, dates))
    else:
        results = [guarded(d) for d in dates]
    out = {}
    for date, res in zip(dates, results):
        if isinstance(res, Exception):
            ctx.fail(stage, date, str(res))
        else:
            out[date] = res
    return out


def _load_meta(ctx: Context) -> dict:
    if not os.path.exists(ctx.cfg.metadata):
        raise UsageError(f"metadata file not found: {ctx.cfg.metadata}")
    try:
        return load_metadata(ctx.cfg.metadata)
    except (QuoteFormatError, QuoteValidationError) as exc:
        raise UsageError(f"metadata: {exc}") from None


def _series_path(ctx, date):
    return ctx.path("illiq", f"series_{date}.csv")


def _network(ctx, date, meta=None):
    net = read_network(ctx.path("net", f"edges_{date}.csv"), ctx.path("net", f"network_{date}.json"))
    net.meta = meta
    return net


# --- stages ------------------------------------------------------------------

def cmd_synth(ctx: Context) -> str:
    cfg = ctx.cfg
    scfg = SynthConfig(n_stocks=cfg.synth_stocks, n_days=cfg.synth_days,
                       crash_days=set(cfg.synth_crash_days), seed=cfg.seed, start_date=cfg.synth_start)
    data_dir = os.path.join(ctx.out, "data")
    market = generate(scfg, data_dir)
    suggested = replace(cfg, quotes_dir="data", quotes_format="csv", metadata="data/metadata.csv",
                        crash_threshold=market.suggested_crash_threshold(), peak_min_height=3)
    conf_path = os.path.join(ctx.out, "illiqnet.conf")
    suggested.save(conf_path)
    man_path = os.path.join(data_dir, "manifest.json")
    with open(man_path, encoding="utf-8") as fh:
        man = json.load(fh)
    man["config_hash"] = PipelineConfig.load(conf_path).config_hash()
    _write_json(man_path, man)
    n_crash = sum(market.crash_calendar.values())
    return (f"synth: {scfg.n_days} days x {scfg.n_stocks} stocks, {n_crash} crash days -> {data_dir}; "
            f"config {conf_path}")


def _quote_files(ctx: Context) -> dict[str, str]:
    qdir = ctx.cfg.quotes_dir
    if not os.path.isdir(qdir):
        raise UsageError(f"quotes directory not found: {qdir}")
    files = {}
    for path in sorted(glob.glob(os.path.join(qdir, "quotes_*"))):
        m = _QUOTE_FILE.match(os.path.basename(path))
        if not m:
            continue
        fmt = "csv" if m.group(2) == "csv" else "binary"
        if ctx.cfg.quotes_format not in ("auto", fmt):
            continue
        if m.group(1) in files:
            raise UsageError(f"two quote files for {m.group(1)}")
        files[m.group(1)] = path
    if not files:
        raise UsageError(f"no quotes_<date>.csv or .bin files in {qdir}")
    return files


def _parse_file(path: str):
    return parse_quotes(path, "binary" if path.endswith(".bin") else "csv")


def cmd_ingest(ctx: Context) -> str:
    files = _quote_files(ctx)
    meta = _load_meta(ctx)
    dates = parse_days(ctx.days, sorted(files))
    ctx.stage_dir("ingest")
    rows, rejected, ok = [], [], []
    for date in dates:
        try:
            res = _parse_file(files[date])
        except QuoteFormatError as exc:
            ctx.fail("ingest", date, f"{files[date]}: {exc}")
            continue
        stocks = sorted({s.stock_id for s in res.snapshots})
        uncovered = coverage_report(meta.get(date, {}), stocks)
        rows.append([date, os.path.basename(files[date]), res.n_rows, res.n_parsed, res.n_rejected,
                     len(stocks), len(uncovered)])
        for err in res.rejected:
            rejected.append([date, err.row, str(err)])
        if res.n_rejected:
            ctx.fail("ingest", date, f"{res.n_rejected} of {res.n_rows} rows rejected")
        if uncovered:
            print(f"illiqnet ingest: {date}: {len(uncovered)} stocks lack metadata "
                  "(kept, excluded from group analyses)", file=sys.stderr)
        if res.n_parsed:
            ok.append(date)
    with _csv_out(ctx.path("ingest", "parse_report.csv"), ctx.config_hash,
                  ["date", "file", "rows", "parsed", "rejected", "stocks", "without_metadata"]) as w:
        w.writerows(rows)
    with _csv_out(ctx.path("ingest", "rejected.csv"), ctx.config_hash, ["date", "row", "message"]) as w:
        w.writerows(rejected)
    _finish(ctx, "ingest", ok, files={d: os.path.abspath(files[d]) for d in ok})
    n_rows = sum(r[2] for r in rows)
    return f"ingest: {len(ok)} days, {n_rows} rows, {len(rejected)} rejected"


def cmd_illiq(ctx: Context) -> str:
    st = _require(ctx, "ingest")
    dates = parse_days(ctx.days, st["dates"])
    ctx.stage_dir("illiq")
    header = f"# config_hash={ctx.config_hash}"

    def one(date):
        res = _parse_file(st["files"][date])
        series = [aggregate_block(QuoteBlock.from_snapshots(sn), date)
                  for _, sn in sorted(group_by_stock(res.snapshots).items())]
        write_series_csv(_series_path(ctx, date), series, header)
        counts = {lab.label: sum(int((s.states == lab).sum()) for s in series)
                  for lab in (LiquidityState.QUOTED, *LOSS_STATES, LiquidityState.MISSING)}
        try:
            market = daily_market_illiquidity(series)
        except ValueError:
            market = float("nan")
        neg = sum(int(s.negative_slots.sum()) for s in series)
        episodes = [e for s in series for e in no_bid_episodes(s)]
        return market, len(series), counts, neg, episodes

    done = _map_days(ctx, "illiq", one, dates)
    labels = ["Quoted", "NoAsk", "NoBid", "NoQuote", "Missing"]
    with _csv_out(ctx.path("illiq", "daily.csv"), ctx.config_hash,
                  ["date", "market_illiquidity", "stocks", *labels, "negative_slots"]) as w:
        for date, (market, n, counts, neg, _) in done.items():
            w.writerow([date, repr(market), n, *(counts[k] for k in labels), neg])
    with _csv_out(ctx.path("illiq", "episodes.csv"), ctx.config_hash,
                  ["date", "stock_id", "start_minute", "duration_minutes", "max_ask_volume"]) as w:
        for date, res in done.items():
            for e in res[4]:
                w.writerow([e.date, e.stock_id, e.start_minute, e.duration_minutes, repr(e.max_ask_volume)])
    extra = {}
    if ctx.cfg.fear:
        fear = read_fear_csv(ctx.cfg.fear)
        common = [d for d in done if d in fear and not math.isnan(done[d][0])]
        try:
            r, p = pearson([done[d][0] for d in common], [fear[d] for d in common])
            extra["fear_correlation"] = {"r": r, "p_value": p, "days": len(common)}
        except (ValueError, UndefinedCorrelationError) as exc:
            extra["fear_correlation"] = {"r": None, "p_value": None, "days": len(common), "note": str(exc)}
    _finish(ctx, "illiq", list(done), **extra)
    return f"illiq: {len(done)} days aggregated to {MINUTES_PER_DAY} minute slots"


def cmd_net(ctx: Context) -> str:
    st = _require(ctx, "illiq")
    meta = _load_meta(ctx)
    dates = parse_days(ctx.days, st["dates"])
    ctx.stage_dir("net")
    rows, ok = [], []
    for date in dates:  # the NMI kernel itself uses the worker threads
        try:
            series = read_series_csv(_series_path(ctx, date))
            dn = network_for_day(series, date, meta.get(date), ctx.cfg)
        except (ValueError, OSError) as exc:
            ctx.fail("net", date, str(exc))
            continue
        if dn.fallback:
            print(f"illiqnet net: {date}: no GCC drop above 1%; used the largest drop", file=sys.stderr)
        write_matrix(dn.matrix, ctx.path("net", f"nmi_{date}.ilqm"), ctx.config_hash)
        write_network(dn.network, ctx.path("net", f"edges_{date}.csv"), ctx.path("net", f"network_{date}.json"),
                      ctx.config_hash, {"nmi_mean": dn.nmi_mean, "nmi_std": dn.nmi_std, "fallback": dn.fallback})
        rows.append([date, repr(dn.nmi_mean), repr(dn.nmi_std), repr(dn.network.threshold), repr(dn.gcc.ratio),
                     len(dn.network.nodes), len(dn.network.edges), int(dn.fallback)])
        ok.append(date)
    with _csv_out(ctx.path("net", "summary.csv"), ctx.config_hash,
                  ["date", "nmi_mean", "nmi_std", "threshold", "gcc_ratio", "nodes", "edges", "fallback"]) as w:
        w.writerows(rows)
    _finish(ctx, "net", ok)
    return f"net: {len(ok)} daily networks"


def cmd_dynamics(ctx: Context) -> str:
    st = _require(ctx, "net")
    meta = _load_meta(ctx)
    dates = parse_days(ctx.days, st["dates"])
    ctx.stage_dir("dynamics")
    nets = _map_days(ctx, "dynamics", lambda d: _network(ctx, d, meta.get(d, {})), dates)
    order = [d for d in dates if d in nets]
    evo = [link_evolution(nets[a], nets[b]) for a, b in zip(order, order[1:])]
    write_evolution_csv(ctx.path("dynamics", "evolution.csv"), evo, ctx.config_hash)
    scores = [s for d in order for g in GROUPINGS for s in group_proportion(nets[d], g)]
    write_scores_csv(ctx.path("dynamics", "scores.csv"), scores, ctx.config_hash)
    _finish(ctx, "dynamics", order)
    return f"dynamics: {len(order)} days, {len(evo)} day pairs"


def cmd_cascade(ctx: Context) -> str:
    _require(ctx, "illiq")
    st = _require(ctx, "net")
    meta = _load_meta(ctx)
    dates = parse_days(ctx.days, st["dates"])
    ctx.stage_dir("cascade")

    def one(date):
        m = meta.get(date, {})
        series = read_series_csv(_series_path(ctx, date))
        events = failures_for_day(series, m, ctx.cfg.limit_tolerance)
        failed = {e.stock_id for e in events}
        touched = [s for s in series if s.stock_id in failed]
        freq = {k: float(v.mean()) for k, v in loss_state_frequency(touched).items()}
        return cascade_for_day(events, _network(ctx, date, m), m, ctx.cfg, date), (len(touched), freq)

    results = _map_days(ctx, "cascade", one, dates)
    done = {d: r[0] for d, r in results.items()}
    order = [d for d in dates if d in done]
    write_failures_csv(ctx.path("cascade", "failures.csv"),
                       [e for d in order for e in done[d].events], ctx.config_hash)
    calendar = crash_days({d: done[d].events for d in order}, ctx.cfg.crash_threshold)
    with _csv_out(ctx.path("cascade", "calendar.csv"), ctx.config_hash, ["date", "failed", "crash"]) as w:
        for d in order:
            w.writerow([d, len(done[d].events), int(calendar[d])])
    loss_labels = [s.label for s in LOSS_STATES]
    with _csv_out(ctx.path("cascade", "state_frequency.csv"), ctx.config_hash,
                  ["date", "crash", "limit_stocks", *loss_labels]) as w:
        for d in order:
            n, freq = results[d][1]
            w.writerow([d, int(calendar[d]), n, *(repr(freq[k]) for k in loss_labels)])
    with _csv_out(ctx.path("cascade", "peaks.csv"), ctx.config_hash, ["date", "peaks", "max_count"]) as w:
        for d in order:
            pk = done[d].peaks
            w.writerow([d, ";".join(str(p) for p in pk.peaks), int(pk.counts.max()) if len(pk.counts) else 0])
    write_before_peak_csv(ctx.path("cascade", "before_peak.csv"),
                          [s for d in order for g in GROUPINGS for s in done[d].scores.get(g, [])],
                          ctx.config_hash)
    with _csv_out(ctx.path("cascade", "profile.csv"), ctx.config_hash, ["date", "r", "p_value", "bins"]) as w:
        for d in order:
            prof = done[d].profile
            if prof is None:
                continue
            w.writerow([d, "" if prof.r is None else repr(prof.r),
                        "" if prof.p_value is None else repr(prof.p_value), len(prof.bins)])
    with _csv_out(ctx.path("cascade", "distance.csv"), ctx.config_hash,
                  ["date", "stock_id", "distance", "abs_distance", "degree"]) as w:
        for d in order:
            prof = done[d].profile
            for dist, absd, deg, sid in (prof.points if prof else []):
                w.writerow([d, sid, dist, absd, deg])
    _finish(ctx, "cascade", order)
    return f"cascade: {len(order)} days, {sum(calendar.values())} crash days"


def _calendar(ctx: Context) -> dict[str, bool]:
    return {r["date"]: r["crash"] == "1" for r in _read_csv(ctx.path("cascade", "calendar.csv"))}


def cmd_warn(ctx: Context) -> str:
    _require(ctx, "net")
    st = _require(ctx, "cascade")
    dates = parse_days(ctx.days, st["dates"])
    ctx.stage_dir("warn")
    events = read_failures_csv(ctx.path("cascade", "failures.csv"))
    calendar = {d: c for d, c in _calendar(ctx).items() if d in dates}
    done = _map_days(ctx, "warn", lambda d: nonrandomness_for_day(events.get(d, []), _network(ctx, d),
                                                                  ctx.cfg, d), dates)
    order = [d for d in dates if d in done]
    with _csv_out(ctx.path("warn", "intervals.csv"), ctx.config_hash,
                  ["date", "interval", "n_f", "e_nf", "w"]) as w:
        for d in order:
            for s in done[d][0]:
                w.writerow([d, s.interval_index, s.n_f, s.e_nf, "" if s.w is None else repr(s.w)])
    states = signal([(d, done[d][1]) for d in order], ctx.cfg.window)
    write_signal_csv(ctx.path("warn", "signal.csv"), states, {d: calendar[d] for d in order}, ctx.config_hash)
    _finish(ctx, "warn", order, window=ctx.cfg.window)
    n_warn = sum(1 for s in states if s.warn)
    return f"warn: {len(order)} days, {n_warn} warnings at t={ctx.cfg.window}"


def cmd_evaluate(ctx: Context) -> str:
    _require(ctx, "cascade")
    st = _require(ctx, "warn")
    rows = read_signal_csv(ctx.path("warn", "signal.csv"))
    daily = [(d, wd) for d, wd, *_ in rows if d in set(st["dates"])]
    calendar = {d: c for d, c in _calendar(ctx).items() if d in {x for x, _ in daily}}
    ctx.stage_dir("evaluate")
    reports = sweep(daily, calendar, range(1, ctx.cfg.sweep_max + 1))
    main = evaluate(signal(daily, ctx.cfg.window), calendar, ctx.cfg.window)
    write_sweep_json(ctx.path("evaluate", "evaluation.json"), reports, ctx.config_hash,
                     {"t": ctx.cfg.window, "at_t": main.to_dict()})
    _finish(ctx, "evaluate", [d for d, _ in daily])
    fmt = lambda x: "n/a" if x is None else f"{x:.3f}"  # noqa: E731
    return (f"evaluate: t={ctx.cfg.window} recall={fmt(main.recall)} precision={fmt(main.precision)} "
            f"(TP={main.true_positives} FP={main.false_positives} FN={main.false_negatives})")


_BUNDLE = [
    ("illiq", "daily.csv"), ("illiq", "episodes.csv"), ("net", "summary.csv"),
    ("dynamics", "scores.csv"), ("dynamics", "evolution.csv"), ("cascade", "calendar.csv"),
    ("cascade", "failures.csv"), ("cascade", "before_peak.csv"), ("cascade", "profile.csv"),
    ("cascade", "state_frequency.csv"),
    ("warn", "signal.csv"), ("evaluate", "evaluation.json"),
]


def artifact_hash(path) -> str | None:
    """Config hash embedded in a CSV comment line or a JSON document."""
    if path.endswith(".json"):
        with open(path, encoding="utf-8") as fh:
            return json.load(fh).get("config_hash")
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
    return first.split("=", 1)[1] if first.startswith("# config_hash=") else None


def cmd_report(ctx: Context) -> str:
    stages = ["illiq", "net", "dynamics", "cascade", "warn", "evaluate"]
    docs = {s: _require(ctx, s) for s in stages}
    paths = [ctx.path(s, n) for s, n in _BUNDLE]
    dates = docs["net"]["dates"]
    paths += [ctx.path("net", f"network_{d}.json") for d in dates]
    hashes = {}
    for p in paths:
        if not os.path.exists(p):
            raise StageDependencyError(f"missing artifact {p}; rerun `illiqnet {os.path.basename(os.path.dirname(p))}`")
        hashes.setdefault(artifact_hash(p), []).append(os.path.relpath(p, ctx.out))
    if len(hashes) > 1 or ctx.config_hash not in hashes:
        detail = "; ".join(f"{h}: {', '.join(v[:3])}" for h, v in sorted(hashes.items(), key=lambda kv: str(kv[0])))
        raise StageDependencyError(f"artifacts come from different configs ({detail}); rerun the stale stages")

    rdir = ctx.stage_dir("report")
    for s, n in _BUNDLE:
        shutil.copyfile(ctx.path(s, n), os.path.join(rdir, n))

    daily = {r["date"]: r for r in _read_csv(ctx.path("illiq", "daily.csv"))}
    summary = {r["date"]: r for r in _read_csv(ctx.path("net", "summary.csv"))}
    calendar = _calendar(ctx)
    sig = {r[0]: r for r in read_signal_csv(ctx.path("warn", "signal.csv"))}
    days = [d for d in dates if d in daily and d in calendar]
    crash = [calendar[d] for d in days]
    plotting.daily_illiquidity(os.path.join(rdir, "daily_illiquidity.svg"), days,
                               [float(daily[d]["market_illiquidity"]) for d in days], crash)
    plotting.nmi_scatter(os.path.join(rdir, "nmi_mean_std.svg"),
                         [float(summary[d]["nmi_mean"]) for d in days],
                         [float(summary[d]["nmi_std"]) for d in days], crash)
    plotting.gcc_timeline(os.path.join(rdir, "gcc_ratio.svg"), days,
                          [float(summary[d]["gcc_ratio"]) for d in days],
                          [float(summary[d]["threshold"]) for d in days], crash)
    sdays = [d for d in days if d in sig]
    plotting.signal_timeline(os.path.join(rdir, "signal.svg"), sdays, [sig[d][1] for d in sdays],
                             [bool(sig[d][3]) for d in sdays], [calendar[d] for d in sdays])

    with open(ctx.path("evaluate", "evaluation.json"), encoding="utf-8") as fh:
        ev = json.load(fh)
    _write_json(os.path.join(rdir, "report.json"), {
        "config_hash": ctx.config_hash,
        "days": len(days),
        "crash_days": [d for d in days if calendar[d]],
        "t": ev["t"],
        "recall": ev["at_t"]["recall"],
        "precision": ev["at_t"]["precision"],
        "best_t": ev["best_t"],
        "fear_correlation": docs["illiq"].get("fear_correlation"),
        "figures": ["daily_illiquidity.svg", "nmi_mean_std.svg", "gcc_ratio.svg", "signal.svg"],
    })
    _finish(ctx, "report", days)
    return f"report: {len(days)} days -> {rdir}"


_COMMANDS = {
    "synth": cmd_synth, "ingest": cmd_ingest, "illiq": cmd_illiq, "net": cmd_net,
    "dynamics": cmd_dynamics, "cascade": cmd_cascade, "warn": cmd_warn, "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def run(subcommand: str, cfg: PipelineConfig, out: str, days: str | None = None) -> int:
    """Run one stage; returns the process exit status."""
    if subcommand not in _COMMANDS:
        print(f"illiqnet: unknown subcommand {subcommand!r}", file=sys.stderr)
        return EXIT_USAGE
    ctx = Context(cfg, out, days)
    os.makedirs(out, exist_ok=True)
    try:
        line = _COMMANDS[subcommand](ctx)
    except UsageError as exc:
        print(f"illiqnet {subcommand}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageDependencyError as exc:
        print(f"illiqnet {subcommand}: error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    print(line)
    if ctx.failures:
        print(f"illiqnet {subcommand}: {len(ctx.failures)} problem(s): "
              + ", ".join(sorted({d for d, _ in ctx.failures})), file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key = value config file")
    common.add_argument("--days", metavar="RANGE", help="days to process: dates or indices, A:B ranges, comma lists")
    common.add_argument("--workers", type=int, metavar="N", help="worker threads (overrides config)")
    common.add_argument("--seed", type=int, metavar="N", help="random seed (overrides config)")
    common.add_argument("--out", metavar="DIR", help="output directory (default: $ILLIQNET_OUT or ./illiqnet-out)")
    p = argparse.ArgumentParser(prog="illiqnet", description="Illiquidity networks and crash warnings from order-book quotes.")
    sub = p.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")
    helps = {
        "synth": "generate a synthetic market with planted crashes",
        "ingest": "parse and validate quote files",
        "illiq": "aggregate quotes into minute illiquidity series",
        "net": "pairwise NMI, threshold and daily networks",
        "dynamics": "link evolution and group degree proportions",
        "cascade": "failures, peaks, before-peak scores, distance profile",
        "warn": "daily non-randomness and warning signal",
        "evaluate": "score warnings against the crash calendar",
        "report": "bundle tables and SVG charts",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
        over = {k: v for k, v in (("workers", args.workers), ("seed", args.seed)) if v is not None}
        cfg = replace(cfg, **over)
    except (ConfigError, OSError) as exc:
        print(f"illiqnet: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = args.out or os.environ.get("ILLIQNET_OUT") or "illiqnet-out"
    return run(args.subcommand, cfg, out, args.days)


if __name__ == "__main__":
    sys.exit(main())
