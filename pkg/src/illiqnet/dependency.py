"""Pairwise normalized mutual information, percolation threshold and daily networks.

Each stock's minute illiquidity is discretized into ``B`` equal-frequency
bins (liquidity-loss minutes go to the top bin).  Mutual information is the
plug-in estimate in nats and is normalized by ``sqrt(H(X) H(Y))``.

The joint entropy is accumulated through a histogram of cell counts
(count-of-counts) so that the summation order depends only on the multiset
of joint counts.  That makes ``nmi(x, y) == nmi(y, x)`` bit for bit and keeps
results identical whatever the evaluation order or worker count.
"""

from __future__ import annotations

import csv
import json
import math
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .illiquidity import IlliquiditySeries, LiquidityState

DEFAULT_BINS = 16
DEFAULT_STEP = 0.01
GCC_DROP_FRACTION = 0.01
MATRIX_MAGIC = b"ILQM"
MATRIX_VERSION = 1


class ThresholdFallbackWarning(UserWarning):
    """No GCC drop above the 1% rule before the largest weight."""


# --- discretization ----------------------------------------------------------

@dataclass
class DiscreteSeries:
    stock_id: str
    symbols: np.ndarray
    n_bins: int = DEFAULT_BINS
    constant: bool = False

    def __post_init__(self):
        self.symbols = np.ascontiguousarray(self.symbols, dtype=np.uint8)
        if len(self.symbols) and int(self.symbols.max()) >= self.n_bins:
            raise ValueError("symbol outside the bin range")
        self.constant = bool(len(self.symbols) == 0 or np.all(self.symbols == self.symbols[0]))


def impute_missing(series: IlliquiditySeries) -> np.ndarray:
    """Values with Missing slots linearly interpolated from Quoted neighbours.

    Loss-state slots stay NaN; ends are filled with the nearest Quoted value.
    """
    vals = series.values.copy()
    quoted = series.quoted
    missing = series.states == LiquidityState.MISSING
    if missing.any() and quoted.any():
        x = np.flatnonzero(quoted)
        vals[missing] = np.interp(np.flatnonzero(missing), x, series.values[quoted])
    return vals


def equal_frequency_bins(values: np.ndarray, n_bins: int) -> np.ndarray:
    """Rank-based bins; a run of tied values takes the bin of its first rank."""
    n = len(values)
    out = np.zeros(n, dtype=np.int64)
    if n == 0:
        return out
    order = np.argsort(values, kind="stable")
    sv = values[order]
    run_start = np.r_[True, sv[1:] != sv[:-1]]
    first_rank = np.maximum.accumulate(np.where(run_start, np.arange(n), 0))
    out[order] = (first_rank * n_bins) // n
    return out


def discretize(series: IlliquiditySeries, n_bins: int = DEFAULT_BINS) -> DiscreteSeries:
    """Equal-frequency symbols of one stock-day; loss states map to ``n_bins - 1``."""
    if n_bins < 2 or n_bins > 256:
        raise ValueError("bin count must lie in [2, 256]")
    vals = impute_missing(series)
    loss = np.isin(series.states, (LiquidityState.NO_ASK, LiquidityState.NO_BID, LiquidityState.NO_QUOTE))
    valued = ~loss & ~np.isnan(vals)
    if not valued.any() and not loss.any():
        raise ValueError(f"{series.stock_id}: no usable slot to discretize")
    sym = np.full(len(vals), n_bins - 1, dtype=np.int64)
    sym[valued] = equal_frequency_bins(vals[valued], n_bins)
    return DiscreteSeries(series.stock_id, sym, n_bins)


# --- numba kernels -----------------------------------------------------------

def _clogc_table(n: int) -> np.ndarray:
    c = np.arange(n + 1, dtype=np.float64)
    out = np.zeros(n + 1)
    out[1:] = c[1:] * np.log(c[1:])
    return out


@numba.njit(cache=True, nogil=True)
def _sum_clogc(cells, cc, clogc):
    # cells are reset to zero; cc is the count-of-counts scratch buffer
    top = 0
    for k in range(cells.shape[0]):
        c = cells[k]
        if c:
            cc[c] += 1
            if c > top:
                top = c
            cells[k] = 0
    s = 0.0
    for c in range(1, top + 1):
        if cc[c]:
            s += cc[c] * clogc[c]
            cc[c] = 0
    return s


@numba.njit(cache=True, nogil=True)
def _entropy(x, n_bins, clogc):
    n = x.shape[0]
    cells = np.zeros(n_bins, dtype=np.int64)
    cc = np.zeros(n + 1, dtype=np.int64)
    for t in range(n):
        cells[x[t]] += 1
    return math.log(n) - _sum_clogc(cells, cc, clogc) / n


@numba.njit(cache=True, nogil=True)
def _nmi_pair(x, y, hx, hy, n_bins, clogc, cells, cc):
    if hx <= 0.0 or hy <= 0.0:
        return 0.0
    n = x.shape[0]
    for t in range(n):
        cells[x[t] * n_bins + y[t]] += 1
    hxy = math.log(n) - _sum_clogc(cells, cc, clogc) / n
    mi = hx + hy - hxy
    v = mi / math.sqrt(hx * hy)
    if v < 0.0:
        return 0.0
    if v > 1.0:
        return 1.0
    return v


@numba.njit(cache=True, nogil=True)
def _nmi_rows(symbols, ent, rows, n_bins, clogc, out):
    n = symbols.shape[1]
    cells = np.zeros(n_bins * n_bins, dtype=np.int64)
    cc = np.zeros(n + 1, dtype=np.int64)
    for r in range(rows.shape[0]):
        i = rows[r]
        for j in range(i):
            v = _nmi_pair(symbols[i], symbols[j], ent[i], ent[j], n_bins, clogc, cells, cc)
            out[i, j] = v
            out[j, i] = v


# --- NMI ---------------------------------------------------------------------

def _as_symbols(x) -> tuple[np.ndarray, int]:
    if isinstance(x, DiscreteSeries):
        return x.symbols, x.n_bins
    arr = np.ascontiguousarray(x, dtype=np.int64)
    if arr.ndim != 1 or (len(arr) and arr.min() < 0):
        raise ValueError("symbols must be a 1-d array of non-negative integers")
    return arr.astype(np.uint8) if len(arr) and arr.max() < 256 else arr, int(arr.max()) + 1 if len(arr) else 1


def entropy(x) -> float:
    sym, b = _as_symbols(x)
    return float(_entropy(sym, b, _clogc_table(len(sym))))


def nmi(x, y) -> float:
    """Normalized mutual information of two equal-length symbol series.

    Zero-entropy inputs give 0, except a constant series paired with an
    identical copy of itself, which gives 1.
    """
    sx, bx = _as_symbols(x)
    sy, by = _as_symbols(y)
    if len(sx) != len(sy):
        raise ValueError("series differ in length")
    if len(sx) == 0:
        raise ValueError("empty series")
    b = max(bx, by)
    sx = sx.astype(np.int64)
    sy = sy.astype(np.int64)
    clogc = _clogc_table(len(sx))
    hx = _entropy(sx, b, clogc)
    hy = _entropy(sy, b, clogc)
    if (hx == 0.0 or hy == 0.0) and np.array_equal(sx, sy):
        return 1.0
    cells = np.zeros(b * b, dtype=np.int64)
    cc = np.zeros(len(sx) + 1, dtype=np.int64)
    return float(_nmi_pair(sx, sy, hx, hy, b, clogc, cells, cc))


@dataclass
class DependencyMatrix:
    date: str
    stocks: list
    nmi: np.ndarray

    @property
    def n(self) -> int:
        return len(self.stocks)

    def upper(self) -> np.ndarray:
        iu = np.triu_indices(self.n, 1)
        return self.nmi[iu]


def _row_chunks(n: int, n_chunks: int) -> list[np.ndarray]:
    """Contiguous row ranges with roughly equal pair counts (row i costs i)."""
    n_chunks = max(1, min(n_chunks, n))
    cum = np.arange(n) * (np.arange(n) - 1) // 2
    total = n * (n - 1) // 2
    bounds = np.searchsorted(cum, np.linspace(0, total, n_chunks + 1)[1:-1])
    edges = np.unique(np.r_[0, bounds, n])
    return [np.arange(a, b, dtype=np.int64) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def pairwise_nmi(series: Sequence[DiscreteSeries], date: str = "", workers: int = 1) -> DependencyMatrix:
    """NMI for all unordered pairs, computed by ``workers`` threads.

    Each row of the lower triangle is an independent task writing disjoint
    cells, so the result does not depend on ``workers``.
    """
    if len(series) < 2:
        raise ValueError("need at least two stocks")
    n_bins = series[0].n_bins
    if any(s.n_bins != n_bins for s in series):
        raise ValueError("all series must share one bin count")
    length = len(series[0].symbols)
    if any(len(s.symbols) != length for s in series):
        raise ValueError("series differ in length")
    symbols = np.ascontiguousarray(np.vstack([s.symbols for s in series]))
    clogc = _clogc_table(length)
    ent = np.array([_entropy(symbols[i], n_bins, clogc) for i in range(len(series))])
    n = len(series)
    out = np.zeros((n, n))
    workers = max(1, int(workers))
    chunks = _row_chunks(n, 8 * workers)
    if workers == 1:
        for rows in chunks:
            _nmi_rows(symbols, ent, rows, n_bins, clogc, out)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_nmi_rows, symbols, ent, rows, n_bins, clogc, out) for rows in chunks]
            for f in futures:
                f.result()
    np.fill_diagonal(out, 1.0)
    return DependencyMatrix(date, [s.stock_id for s in series], out)


def nmi_stats(matrix: DependencyMatrix) -> tuple[float, float]:
    """Mean and population standard deviation over the unique off-diagonal pairs."""
    u = matrix.upper()
    if u.size == 0:
        raise ValueError("need at least one pair")
    return float(u.mean()), float(u.std())


# --- connectivity ------------------------------------------------------------

class UnionFind:
    """Disjoint sets with union by size and path halving."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, a: int) -> int:
        parent = self.parent
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return True

    def component_sizes(self) -> list[int]:
        return sorted((self.size[i] for i in range(len(self.parent)) if self.find(i) == i), reverse=True)


@numba.njit(cache=True)
def _find(parent, a):
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


@numba.njit(cache=True)
def _gcc_sweep(n, ei, ej, w_desc, candidates):
    """GCC size after keeping edges with weight >= each candidate (ascending candidates)."""
    parent = np.arange(n)
    size = np.ones(n, dtype=np.int64)
    best = 1 if n > 0 else 0
    out = np.zeros(candidates.shape[0], dtype=np.int64)
    e = 0
    m = w_desc.shape[0]
    for k in range(candidates.shape[0] - 1, -1, -1):
        c = candidates[k]
        while e < m and w_desc[e] >= c:
            ra = _find(parent, ei[e])
            rb = _find(parent, ej[e])
            if ra != rb:
                if size[ra] < size[rb]:
                    ra, rb = rb, ra
                parent[rb] = ra
                size[ra] += size[rb]
                if size[ra] > best:
                    best = size[ra]
            e += 1
        out[k] = best
    return out


def gcc_sweep(matrix: DependencyMatrix, step: float = DEFAULT_STEP) -> tuple[np.ndarray, np.ndarray]:
    """Candidate thresholds ``0, step, 2 step, ...`` up to the largest weight and GCC sizes."""
    if step <= 0:
        raise ValueError("threshold step must be positive")
    n = matrix.n
    iu, ju = np.triu_indices(n, 1)
    w = matrix.nmi[iu, ju]
    wmax = float(w.max()) if w.size else 0.0
    k_max = int(math.floor(wmax / step + 1e-9))
    candidates = np.array([round(k * step, 12) for k in range(k_max + 1)])
    order = np.argsort(-w, kind="stable")
    sizes = _gcc_sweep(n, iu[order].astype(np.int64), ju[order].astype(np.int64),
                       np.ascontiguousarray(w[order]), candidates)
    return candidates, sizes


def select_threshold(matrix: DependencyMatrix, step: float = DEFAULT_STEP) -> float:
    """Smallest candidate at which the GCC shrinks by more than 1% of all stocks.

    Falls back to the candidate with the largest single-step drop (with a
    :class:`ThresholdFallbackWarning`) when no step qualifies.
    """
    candidates, sizes = gcc_sweep(matrix, step)
    drops = sizes[:-1] - sizes[1:]
    hit = np.flatnonzero(drops > GCC_DROP_FRACTION * matrix.n)
    if hit.size:
        return float(candidates[hit[0] + 1])
    warnings.warn(
        f"{matrix.date}: no GCC drop above {GCC_DROP_FRACTION:.0%} before the maximum weight; "
        "using the largest single-step drop",
        ThresholdFallbackWarning,
        stacklevel=2,
    )
    if drops.size == 0:
        return float(candidates[0])
    return float(candidates[int(np.argmax(drops)) + 1])


@dataclass
class GCCStats:
    ratio: float
    gcc_size: int
    second_size: int
    n_stocks: int


@dataclass
class IlliquidityNetwork:
    """Thresholded NMI graph of one day.

    ``stocks`` lists every candidate stock of the day; ``nodes`` only the
    ones left with at least one edge.
    """

    date: str
    threshold: float
    stocks: list
    edges: list  # (a, b, weight) with a < b in ``stocks`` order
    meta: dict | None = None
    _adj: dict = field(default=None, init=False, repr=False)

    @property
    def adjacency(self) -> dict:
        if self._adj is None:
            adj = {}
            for a, b, _ in self.edges:
                adj.setdefault(a, set()).add(b)
                adj.setdefault(b, set()).add(a)
            self._adj = adj
        return self._adj

    @property
    def nodes(self) -> list:
        adj = self.adjacency
        return [s for s in self.stocks if s in adj]

    @property
    def isolated(self) -> list:
        adj = self.adjacency
        return [s for s in self.stocks if s not in adj]

    def __contains__(self, stock_id) -> bool:
        return stock_id in self.adjacency

    def has_edge(self, a, b) -> bool:
        return b in self.adjacency.get(a, ())

    def edge_set(self) -> set:
        return {(a, b) if a < b else (b, a) for a, b, _ in self.edges}

    def degrees(self) -> dict:
        return {s: len(nb) for s, nb in self.adjacency.items()}


def build_network(matrix: DependencyMatrix, threshold: float, meta: dict | None = None) -> IlliquidityNetwork:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    iu, ju = np.triu_indices(matrix.n, 1)
    w = matrix.nmi[iu, ju]
    keep = w >= threshold
    st = matrix.stocks
    edges = [(st[i], st[j], float(x)) for i, j, x in zip(iu[keep], ju[keep], w[keep])]
    return IlliquidityNetwork(matrix.date, float(threshold), list(st), edges, meta)


def gcc_ratio(network: IlliquidityNetwork) -> GCCStats:
    """Share of all the day's stocks inside the largest connected component."""
    index = {s: i for i, s in enumerate(network.stocks)}
    uf = UnionFind(len(index))
    for a, b, _ in network.edges:
        uf.union(index[a], index[b])
    sizes = uf.component_sizes() if index else [0]
    second = sizes[1] if len(sizes) > 1 else 0
    n = len(index)
    return GCCStats(sizes[0] / n if n else 0.0, sizes[0], second, n)


# --- persistence -------------------------------------------------------------

_MAT_HEAD = struct.Struct("<4sHI10s16s")


def write_matrix(matrix: DependencyMatrix, path, config_hash: str = "") -> None:
    """Binary export: header, stock ids, then the strict lower triangle as float32."""
    n = matrix.n
    with open(path, "wb") as fh:
        fh.write(_MAT_HEAD.pack(MATRIX_MAGIC, MATRIX_VERSION, n, matrix.date.encode("ascii")[:10],
                                config_hash.encode("ascii")[:16]))
        for s in matrix.stocks:
            b = s.encode("utf-8")
            fh.write(struct.pack("<H", len(b)) + b)
        il, jl = np.tril_indices(n, -1)
        fh.write(matrix.nmi[il, jl].astype("<f4").tobytes())


def read_matrix(path) -> tuple[DependencyMatrix, str]:
    with open(path, "rb") as fh:
        data = fh.read()
    magic, version, n, date, chash = _MAT_HEAD.unpack_from(data, 0)
    if magic != MATRIX_MAGIC:
        raise ValueError("not an NMI matrix file")
    if version != MATRIX_VERSION:
        raise ValueError(f"unsupported matrix version {version}")
    pos = _MAT_HEAD.size
    stocks = []
    for _ in range(n):
        (ln,) = struct.unpack_from("<H", data, pos)
        pos += 2
        stocks.append(data[pos:pos + ln].decode("utf-8"))
        pos += ln
    tri = np.frombuffer(data, dtype="<f4", count=n * (n - 1) // 2, offset=pos).astype(float)
    out = np.eye(n)
    il, jl = np.tril_indices(n, -1)
    out[il, jl] = tri
    out[jl, il] = tri
    return DependencyMatrix(date.rstrip(b"\0").decode("ascii"), stocks, out), chash.rstrip(b"\0").decode("ascii")


def write_network(network: IlliquidityNetwork, csv_path, json_path, config_hash: str = "", extra: dict | None = None) -> None:
    """Edge list ``date,a,b,weight`` plus a JSON sidecar with day-level facts."""
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "a", "b", "weight"])
        for a, b, x in network.edges:
            w.writerow([network.date, a, b, repr(x)])
    g = gcc_ratio(network)
    side = {
        "date": network.date,
        "threshold": network.threshold,
        "node_count": len(network.nodes),
        "stock_count": len(network.stocks),
        "edge_count": len(network.edges),
        "gcc_ratio": g.ratio,
        "gcc_size": g.gcc_size,
        "second_component": g.second_size,
        "stocks": list(network.stocks),
        "config_hash": config_hash,
    }
    if extra:
        side.update(extra)
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(side, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_network(csv_path, json_path) -> IlliquidityNetwork:
    with open(json_path, encoding="utf-8") as fh:
        side = json.load(fh)
    edges = []
    with open(csv_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(ln for ln in fh if not ln.startswith("#")):
            edges.append((row["a"], row["b"], float(row["weight"])))
    return IlliquidityNetwork(side["date"], float(side["threshold"]), side["stocks"], edges)
