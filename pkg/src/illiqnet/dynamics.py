"""Day-over-day link turnover and degree-weighted group proportions."""

from __future__ import annotations

import csv
from dataclasses import dataclass

from .dependency import IlliquidityNetwork

GROUPINGS = ("sector", "cap_style")


class NotInNetworkError(KeyError):
    pass


@dataclass(frozen=True)
class LinkEvolution:
    date_a: str
    date_b: str
    new_links: int
    removed_links: int
    unchanged_links: int

    @property
    def unchanged_ratio(self) -> float | None:
        # relative to the earlier day's links
        den = self.unchanged_links + self.removed_links
        return self.unchanged_links / den if den else None


@dataclass(frozen=True)
class GroupScore:
    group_id: str
    date: str
    grouping: str
    n_ij: int
    n_j: int
    N_ij: int
    N_j: int

    @property
    def R(self) -> float:
        if self.n_j == 0:
            return 0.0
        return (self.n_ij / self.n_j) / (self.N_ij / self.N_j)


def link_evolution(net_a: IlliquidityNetwork, net_b: IlliquidityNetwork) -> LinkEvolution:
    a, b = net_a.edge_set(), net_b.edge_set()
    return LinkEvolution(net_a.date, net_b.date, len(b - a), len(a - b), len(a & b))


def degree(network: IlliquidityNetwork, stock_id: str) -> int:
    try:
        return len(network.adjacency[stock_id])
    except KeyError:
        raise NotInNetworkError(stock_id) from None


def group_of(meta, grouping: str) -> str:
    if grouping not in GROUPINGS:
        raise ValueError(f"grouping must be one of {GROUPINGS}")
    return getattr(meta, grouping)


def group_proportion(network: IlliquidityNetwork, grouping: str = "sector", meta: dict | None = None) -> list[GroupScore]:
    """Degree share over node share for every group present in the network.

    ``n_ij`` sums the degrees of group-``i`` nodes, ``n_j`` is twice the edge
    count, ``N_ij``/``N_j`` count group-``i`` nodes and all nodes.  Nodes
    without metadata are left out of both counts.
    """
    meta = meta if meta is not None else network.meta
    if meta is None:
        raise ValueError("group_proportion needs stock metadata")
    deg = network.degrees()
    labelled = {s: group_of(meta[s], grouping) for s in deg if s in meta}
    node_count: dict[str, int] = {}
    deg_sum: dict[str, int] = {}
    for s, g in labelled.items():
        node_count[g] = node_count.get(g, 0) + 1
        deg_sum[g] = deg_sum.get(g, 0) + deg[s]
    n_j = sum(deg_sum.values())
    N_j = len(labelled)
    return [
        GroupScore(g, network.date, grouping, deg_sum[g], n_j, node_count[g], N_j)
        for g in sorted(node_count)
    ]


def write_scores_csv(path, scores, config_hash: str = "") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "grouping", "group", "R", "n_ij", "n_j", "N_ij", "N_j"])
        for s in scores:
            w.writerow([s.date, s.grouping, s.group_id, repr(s.R), s.n_ij, s.n_j, s.N_ij, s.N_j])


def write_evolution_csv(path, rows, config_hash: str = "") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date_a", "date_b", "new_links", "removed_links", "unchanged_links", "unchanged_ratio"])
        for r in rows:
            ratio = "" if r.unchanged_ratio is None else repr(r.unchanged_ratio)
            w.writerow([r.date_a, r.date_b, r.new_links, r.removed_links, r.unchanged_links, ratio])
