"""Two-level routing between GPUs, plus the direct peer-to-peer baseline.

GPUs are clustered into groups with the same capacity-bounded greedy fill
used for neuron placement, one level up: the items are GPUs, the item
weight is the GPU's total neuron weight, and the affinity between two GPUs
is their aggregated traffic. GPUs inside a group talk directly (level 1).
Traffic toward another group is handed to a bridge GPU inside the source
group, which forwards it straight to the destination GPU (level 2), so an
inter-group path has exactly one intermediate hop. One bridge is elected
per ordered group pair, heaviest pairs first, always onto the group member
carrying the least forwarding load so far.

Routing tables are exchanged in the RTAB text format::

    RTAB 1 <n_gpus> <n_groups>
    B <source_group> <dest_group> <bridge_gpu>     one line per bridge
    P <src> <dst> [<bridge>]                       one line per demand,
                                                   ascending (src, dst)

Group membership is not part of the file, so a loaded table can be driven
through the latency model but cannot re-derive level-2 accounting; build
the table in-process when that split is needed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .accum import binned_sums
from .errors import MissingBridgeError, ParseError
from .greedy import adjacency_from_dense, greedy_fill
from .traffic import GpuTrafficGraph


@dataclass(eq=False)
class GroupAssignment:
    """Total assignment of GPUs to groups; every group is nonempty."""

    n_groups: int
    membership: np.ndarray

    @property
    def n_gpus(self) -> int:
        return int(self.membership.size)

    def members(self, group: int) -> np.ndarray:
        return np.flatnonzero(self.membership == group)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GroupAssignment):
            return NotImplemented
        return self.n_groups == other.n_groups and np.array_equal(
            self.membership, other.membership
        )


@dataclass(eq=False)
class RoutingTable:
    """One path per ordered demand: direct, or via a bridge in the source group.

    Demands are stored columnar: ``via[k] == -1`` means the direct path
    ``(src, dst)``, otherwise the path is ``(src, via, dst)``. ``membership``
    travels with tables built in-process but is not persisted to RTAB files
    and is excluded from equality.
    """

    n_gpus: int
    n_groups: int
    src: np.ndarray
    dst: np.ndarray
    via: np.ndarray
    bridges: dict[tuple[int, int], int]
    membership: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_demands(self) -> int:
        return int(self.src.size)

    def path(self, src: int, dst: int) -> tuple[int, ...]:
        index = self._index()
        k = index.get((src, dst))
        if k is None:
            raise KeyError(f"no demand ({src}, {dst}) in routing table")
        v = int(self.via[k])
        return (src, dst) if v < 0 else (src, v, dst)

    def iter_paths(self):
        for s, d, v in zip(self.src.tolist(), self.dst.tolist(), self.via.tolist()):
            yield (s, d) if v < 0 else (s, v, d)

    def _index(self) -> dict[tuple[int, int], int]:
        cached = getattr(self, "_index_cache", None)
        if cached is None:
            cached = {
                (s, d): k
                for k, (s, d) in enumerate(zip(self.src.tolist(), self.dst.tolist()))
            }
            object.__setattr__(self, "_index_cache", cached)
        return cached

    def __eq__(self, other) -> bool:
        if not isinstance(other, RoutingTable):
            return NotImplemented
        return (
            self.n_gpus == other.n_gpus
            and self.n_groups == other.n_groups
            and np.array_equal(self.src, other.src)
            and np.array_equal(self.dst, other.dst)
            and np.array_equal(self.via, other.via)
            and self.bridges == other.bridges
        )


@dataclass(eq=False)
class ConnectionStats:
    """Distinct first-hop successors each GPU must open a connection to."""

    out_degree: np.ndarray
    mean: float
    max: int
    histogram: np.ndarray  # frequency per bucket of width bucket_width
    bucket_width: int


def group_gpus(gt: GpuTrafficGraph, n_groups: int) -> GroupAssignment:
    """Cluster GPUs into traffic-cohesive, weight-balanced groups."""
    if not 1 <= n_groups <= gt.n_gpus:
        raise ValueError(f"n_groups must be in [1, {gt.n_gpus}], got {n_groups}")
    indptr, indices, values = adjacency_from_dense(gt.pg)
    membership = greedy_fill(gt.wg, indptr, indices, values, n_groups)
    return GroupAssignment(n_groups, membership)


def _demand_pairs(gt: GpuTrafficGraph) -> tuple[np.ndarray, np.ndarray]:
    """All ordered (src, dst) with positive traffic, ascending (src, dst)."""
    off = gt.pg.copy()
    np.fill_diagonal(off, 0.0)
    rows, cols = np.nonzero(off > 0.0)
    return rows.astype(np.int64), cols.astype(np.int64)


def select_bridges(
    gt: GpuTrafficGraph, groups: GroupAssignment
) -> dict[tuple[int, int], int]:
    """Elect one bridge GPU per ordered group pair with positive traffic.

    Pairs are processed in descending traffic order (ties: ascending pair),
    each landing on the source-group member with the least forwarding load
    accumulated so far (ties: lowest GPU index).
    """
    if groups.n_gpus != gt.n_gpus:
        raise ValueError(
            f"grouping covers {groups.n_gpus} GPUs, traffic graph has {gt.n_gpus}"
        )
    memb = groups.membership
    g = groups.n_groups
    members = [np.flatnonzero(memb == k) for k in range(g)]
    for k, mk in enumerate(members):
        if mk.size == 0:
            raise ValueError(f"group {k} is empty")

    rows, cols = _demand_pairs(gt)
    inter = memb[rows] != memb[cols]
    totals = np.zeros((g, g), dtype=np.float64)
    np.add.at(totals, (memb[rows[inter]], memb[cols[inter]]), gt.pg[rows[inter], cols[inter]])

    pairs = [(a, b) for a in range(g) for b in range(g) if a != b and totals[a, b] > 0.0]
    pairs.sort(key=lambda ab: (-totals[ab[0], ab[1]], ab[0], ab[1]))

    load = np.zeros(gt.n_gpus, dtype=np.float64)
    bridges: dict[tuple[int, int], int] = {}
    for a, b in pairs:
        cand = members[a]
        pick = int(cand[np.argmin(load[cand])])
        bridges[(a, b)] = pick
        load[pick] += totals[a, b]
    return bridges


def build_routing_table(
    gt: GpuTrafficGraph,
    groups: GroupAssignment,
    bridges: dict[tuple[int, int], int],
) -> RoutingTable:
    """One path per positive ordered demand.

    Intra-group demands go direct. Inter-group demands route through the
    source group's bridge for the destination group; when the source GPU
    is that bridge itself the path degenerates to direct.
    """
    if groups.n_gpus != gt.n_gpus:
        raise ValueError(
            f"grouping covers {groups.n_gpus} GPUs, traffic graph has {gt.n_gpus}"
        )
    g = groups.n_groups
    memb = groups.membership
    bridge_matrix = np.full((g, g), -1, dtype=np.int64)
    for (a, b), gpu in bridges.items():
        if not (0 <= a < g and 0 <= b < g and a != b):
            raise ValueError(f"bridge key ({a}, {b}) is not a valid group pair")
        if memb[gpu] != a:
            raise ValueError(
                f"bridge {gpu} for group pair ({a}, {b}) is not a member of group {a}"
            )
        bridge_matrix[a, b] = gpu

    rows, cols = _demand_pairs(gt)
    ga, gb = memb[rows], memb[cols]
    via = np.full(rows.size, -1, dtype=np.int64)
    inter = ga != gb
    if inter.any():
        chosen = bridge_matrix[ga[inter], gb[inter]]
        if (chosen < 0).any():
            k = int(np.flatnonzero(chosen < 0)[0])
            a, b = int(ga[inter][k]), int(gb[inter][k])
            raise MissingBridgeError(f"no bridge assigned for group pair ({a}, {b})")
        via[inter] = chosen
        via[via == rows] = -1  # the source is its own bridge
    return RoutingTable(
        n_gpus=gt.n_gpus,
        n_groups=g,
        src=rows,
        dst=cols,
        via=via,
        bridges=dict(bridges),
        membership=memb.copy(),
    )


def route_p2p(gt: GpuTrafficGraph) -> RoutingTable:
    """Direct path for every positive demand; every GPU is its own group."""
    rows, cols = _demand_pairs(gt)
    return RoutingTable(
        n_gpus=gt.n_gpus,
        n_groups=gt.n_gpus,
        src=rows,
        dst=cols,
        via=np.full(rows.size, -1, dtype=np.int64),
        bridges={},
        membership=np.arange(gt.n_gpus, dtype=np.int64),
    )


def connection_stats(rt: RoutingTable, bucket_width: int = 16) -> ConnectionStats:
    """Count the distinct first-hop successors of each GPU across all paths."""
    if bucket_width < 1:
        raise ValueError(f"bucket_width must be >= 1, got {bucket_width}")
    n = rt.n_gpus
    first_hop = np.where(rt.via >= 0, rt.via, rt.dst)
    pairs = rt.src * n + first_hop
    bridged = rt.via >= 0
    forwarded = rt.via[bridged] * n + rt.dst[bridged]
    combined = np.concatenate([pairs, forwarded])
    if combined.size:
        distinct = np.unique(combined)
        out_degree = np.bincount(distinct // n, minlength=n)
    else:
        out_degree = np.zeros(n, dtype=np.int64)
    histogram = np.bincount(out_degree // bucket_width)
    return ConnectionStats(
        out_degree=out_degree,
        mean=float(out_degree.mean()),
        max=int(out_degree.max()),
        histogram=histogram,
        bucket_width=bucket_width,
    )


def level2_traffic(gt: GpuTrafficGraph, rt: RoutingTable) -> np.ndarray:
    """Traffic each GPU pushes toward other groups, as source or as bridge."""
    if rt.n_gpus != gt.n_gpus:
        raise ValueError(
            f"routing table covers {rt.n_gpus} GPUs, traffic graph has {gt.n_gpus}"
        )
    if rt.membership is None:
        raise ValueError(
            "routing table carries no group membership (tables loaded from "
            "RTAB files cannot split level-2 traffic); rebuild it in-process"
        )
    memb = rt.membership
    inter = memb[rt.src] != memb[rt.dst]
    src = rt.src[inter]
    dst = rt.dst[inter]
    via = rt.via[inter]
    vol = gt.pg[src, dst]
    bridged = via >= 0
    keys = np.concatenate([src, via[bridged]])
    vals = np.concatenate([vol, vol[bridged]])
    return binned_sums(keys, vals, gt.n_gpus)


def save_routing_table(rt: RoutingTable, destination) -> None:
    lines = [f"RTAB 1 {rt.n_gpus} {rt.n_groups}"]
    for (a, b), gpu in sorted(rt.bridges.items()):
        lines.append(f"B {a} {b} {gpu}")
    for s, d, v in zip(rt.src.tolist(), rt.dst.tolist(), rt.via.tolist()):
        lines.append(f"P {s} {d}" if v < 0 else f"P {s} {d} {v}")
    with open(destination, "w", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def load_routing_table(source) -> RoutingTable:
    with open(source, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", 1)
    header = lines[0].split()
    if len(header) != 4 or header[0] != "RTAB" or header[1] != "1":
        raise ParseError(f"malformed header {lines[0]!r}", 1)
    try:
        n, g = int(header[2]), int(header[3])
    except ValueError:
        raise ParseError(f"malformed header {lines[0]!r}", 1) from None
    if n < 1 or not 1 <= g <= n:
        raise ParseError(f"invalid counts in header {lines[0]!r}", 1)

    bridges: dict[tuple[int, int], int] = {}
    src: list[int] = []
    dst: list[int] = []
    via: list[int] = []
    in_paths = False
    prev = (-1, -1)
    for k, raw in enumerate(lines[1:], start=2):
        parts = raw.split()
        if not parts:
            raise ParseError("blank line", k)
        if parts[0] == "B":
            if in_paths:
                raise ParseError("bridge line after path section", k)
            if len(parts) != 4:
                raise ParseError(f"malformed bridge line {raw!r}", k)
            try:
                a, b, gpu = int(parts[1]), int(parts[2]), int(parts[3])
            except ValueError:
                raise ParseError(f"malformed bridge line {raw!r}", k) from None
            if not (0 <= a < g and 0 <= b < g and a != b):
                raise ParseError(f"bridge group pair ({a}, {b}) out of range", k)
            if not 0 <= gpu < n:
                raise ParseError(f"bridge GPU {gpu} out of range [0, {n})", k)
            if (a, b) in bridges:
                raise ParseError(f"duplicate bridge for group pair ({a}, {b})", k)
            bridges[(a, b)] = gpu
        elif parts[0] == "P":
            in_paths = True
            if len(parts) not in (3, 4):
                raise ParseError(f"malformed path line {raw!r}", k)
            try:
                hops = [int(x) for x in parts[1:]]
            except ValueError:
                raise ParseError(f"malformed path line {raw!r}", k) from None
            if any(not 0 <= x < n for x in hops):
                raise ParseError(f"GPU index out of range in {raw!r}", k)
            s, d = hops[0], hops[1]
            if s == d:
                raise ParseError(f"self-demand ({s}, {d})", k)
            if (s, d) <= prev:
                raise ParseError(f"path ({s}, {d}) not in ascending (src, dst) order", k)
            prev = (s, d)
            v = hops[2] if len(hops) == 3 else -1
            if v >= 0 and v in (s, d):
                raise ParseError(f"degenerate bridge hop in {raw!r}", k)
            src.append(s)
            dst.append(d)
            via.append(v)
        else:
            raise ParseError(f"unknown record type {parts[0]!r}", k)
    return RoutingTable(
        n_gpus=n,
        n_groups=g,
        src=np.asarray(src, dtype=np.int64),
        dst=np.asarray(dst, dtype=np.int64),
        via=np.asarray(via, dtype=np.int64),
        bridges=bridges,
        membership=None,
    )


def write_connection_csv(stats: ConnectionStats, destination) -> None:
    with open(destination, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin_start", "bin_end", "count"])
        for k, count in enumerate(stats.histogram.tolist()):
            lo = k * stats.bucket_width
            writer.writerow([lo, lo + stats.bucket_width, count])


def write_connection_summary(stats: ConnectionStats, destination) -> None:
    payload = {
        "mean_out_degree": stats.mean,
        "max_out_degree": stats.max,
        "n_gpus": int(stats.out_degree.size),
        "bucket_width": stats.bucket_width,
    }
    with open(destination, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
