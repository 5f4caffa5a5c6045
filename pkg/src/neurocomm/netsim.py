"""Analytic communication-latency model over a two-tier physical fabric.

The fabric is a fixed hierarchy: GPUs pack onto nodes in index order, nodes
pack onto switches in index order. Each node owns one shared internal bus
and one uplink into its switch; switches are joined pairwise by trunks, so
a physical route crosses at most one trunk. The model is congestion-driven:
every logical hop of every routed demand deposits its volume on each
physical link along the hop's route, and a step's transfer time is the
worst demand's sum of per-link costs ``alpha + load / bandwidth``. On top
of that, each distinct connection a GPU opens costs a fixed setup time;
connections open in parallel across GPUs but serially per GPU.

Channel noise scales every demand volume linearly: it stands for the
fraction of the model active per step, so loads (and with them the step
time) grow monotonically with it.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .errors import SpecificationError
from .model import NeuronGraph
from .partition import PartitionMap
from .routing import RoutingTable, connection_stats
from .traffic import GpuTrafficGraph, aggregate


@dataclass(frozen=True)
class TopologySpec:
    """Shape and speed of the physical fabric.

    Bandwidths are in traffic volume units per second; the intra-node bus
    is the faster, PCIe-class tier and the uplinks/trunks the slower,
    switch-fabric tier. ``per_hop_latency`` is the fixed cost of pushing a
    hop through one physical link; ``connection_setup_cost`` is charged per
    distinct connection a GPU opens during a step.
    """

    gpus_per_node: int = 4
    nodes_per_switch: int = 8
    intra_node_bandwidth: float = 4096.0
    inter_node_bandwidth: float = 1024.0
    per_hop_latency: float = 0.001
    connection_setup_cost: float = 0.001


@dataclass(eq=False)
class PhysicalTopology:
    """Concrete GPU/node/switch placement plus link bandwidth lookup."""

    n_gpus: int
    spec: TopologySpec
    gpu_node: np.ndarray
    node_switch: np.ndarray
    n_nodes: int
    n_switches: int

    def route_links(self, u: int, v: int) -> tuple[str, ...]:
        """Physical links carrying a logical hop from GPU ``u`` to GPU ``v``."""
        nu = int(self.gpu_node[u])
        nv = int(self.gpu_node[v])
        if nu == nv:
            return (f"bus:{nu}",)
        su = int(self.node_switch[nu])
        sv = int(self.node_switch[nv])
        if su == sv:
            return (f"bus:{nu}", f"uplink:{nu}", f"uplink:{nv}", f"bus:{nv}")
        lo, hi = (su, sv) if su < sv else (sv, su)
        return (
            f"bus:{nu}",
            f"uplink:{nu}",
            f"trunk:{lo}-{hi}",
            f"uplink:{nv}",
            f"bus:{nv}",
        )

    def bandwidth(self, link: str) -> float:
        if link.startswith("bus:"):
            return self.spec.intra_node_bandwidth
        return self.spec.inter_node_bandwidth


@dataclass(frozen=True)
class StepLatencyReport:
    """Modeled communication time of one simulation step at one noise level."""

    noise: float
    step_time: float
    max_link_utilization: float
    bottleneck_link: str
    setup_time: float


def _check_spec(spec: TopologySpec) -> None:
    if spec.gpus_per_node < 1:
        raise SpecificationError(f"gpus_per_node must be >= 1, got {spec.gpus_per_node}")
    if spec.nodes_per_switch < 1:
        raise SpecificationError(
            f"nodes_per_switch must be >= 1, got {spec.nodes_per_switch}"
        )
    for name in (
        "intra_node_bandwidth",
        "inter_node_bandwidth",
        "per_hop_latency",
        "connection_setup_cost",
    ):
        value = getattr(spec, name)
        if not (math.isfinite(value) and value > 0.0):
            raise SpecificationError(f"{name} must be > 0, got {value}")


def build_topology(spec: TopologySpec, n_gpus: int) -> PhysicalTopology:
    """Pack GPUs onto nodes and nodes onto switches in index order."""
    _check_spec(spec)
    if n_gpus < 1:
        raise ValueError(f"n_gpus must be >= 1, got {n_gpus}")
    gpu_node = np.arange(n_gpus, dtype=np.int64) // spec.gpus_per_node
    n_nodes = int(gpu_node[-1]) + 1
    node_switch = np.arange(n_nodes, dtype=np.int64) // spec.nodes_per_switch
    n_switches = int(node_switch[-1]) + 1
    return PhysicalTopology(n_gpus, spec, gpu_node, node_switch, n_nodes, n_switches)


def load_topology_spec(source) -> TopologySpec:
    with open(source, encoding="utf-8") as fh:
        payload = json.load(fh)
    if not isinstance(payload, dict):
        raise SpecificationError("topology spec must be a JSON object")
    known = {
        "gpus_per_node": int,
        "nodes_per_switch": int,
        "intra_node_bandwidth": float,
        "inter_node_bandwidth": float,
        "per_hop_latency": float,
        "connection_setup_cost": float,
    }
    unknown = sorted(set(payload) - set(known))
    if unknown:
        raise SpecificationError(f"unknown topology spec keys: {', '.join(unknown)}")
    kwargs = {}
    for key, value in payload.items():
        caster = known[key]
        if caster is int and not float(value).is_integer():
            raise SpecificationError(f"{key} must be an integer, got {value}")
        kwargs[key] = caster(value)
    spec = TopologySpec(**kwargs)
    _check_spec(spec)
    return spec


def save_topology_spec(spec: TopologySpec, destination) -> None:
    payload = {
        "gpus_per_node": spec.gpus_per_node,
        "nodes_per_switch": spec.nodes_per_switch,
        "intra_node_bandwidth": spec.intra_node_bandwidth,
        "inter_node_bandwidth": spec.inter_node_bandwidth,
        "per_hop_latency": spec.per_hop_latency,
        "connection_setup_cost": spec.connection_setup_cost,
    }
    with open(destination, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _check_noise(noise: float) -> None:
    if not 0.0 < noise <= 1.0:
        raise ValueError(f"noise must be in (0, 1], got {noise}")


def map_flows(
    rt: RoutingTable, gt: GpuTrafficGraph, topo: PhysicalTopology, noise: float
) -> dict[str, float]:
    """Per-link load: every logical hop deposits its volume on its route.

    A demand routed ``(s, b, d)`` loads the physical route of hop ``(s, b)``
    and then the route of hop ``(b, d)``; volumes scale linearly with
    ``noise``. Per-link totals are fsum-accumulated, so they are exact
    regardless of demand order.
    """
    _check_noise(noise)
    if rt.n_gpus != gt.n_gpus:
        raise ValueError(
            f"routing table covers {rt.n_gpus} GPUs, traffic graph has {gt.n_gpus}"
        )
    if rt.n_gpus > topo.n_gpus:
        raise ValueError(
            f"routing table covers {rt.n_gpus} GPUs, topology has {topo.n_gpus}"
        )
    parts: dict[str, list[float]] = {}
    pg = gt.pg
    for s, d, v in zip(rt.src.tolist(), rt.dst.tolist(), rt.via.tolist()):
        vol = noise * float(pg[s, d])
        hops = ((s, d),) if v < 0 else ((s, v), (v, d))
        for u, w in hops:
            for link in topo.route_links(u, w):
                parts.setdefault(link, []).append(vol)
    return {link: math.fsum(vals) for link, vals in sorted(parts.items())}


def step_latency(
    loads: dict[str, float],
    rt: RoutingTable,
    topo: PhysicalTopology,
    noise: float = 1.0,
) -> StepLatencyReport:
    """Setup term plus the congestion-weighted transfer term.

    ``setup = connection_setup_cost * max out-degree`` (GPUs open their
    connections in parallel with each other, serially per GPU) and
    ``transfer`` is the maximum over demands of the summed per-link costs
    ``alpha + load / bandwidth`` along the demand's full physical route,
    counting a link once per traversal.
    """
    stats = connection_stats(rt)
    setup = topo.spec.connection_setup_cost * float(stats.out_degree.max())
    alpha = topo.spec.per_hop_latency
    transfer = 0.0
    for s, d, v in zip(rt.src.tolist(), rt.dst.tolist(), rt.via.tolist()):
        hops = ((s, d),) if v < 0 else ((s, v), (v, d))
        t = 0.0
        for u, w in hops:
            for link in topo.route_links(u, w):
                t += alpha + loads[link] / topo.bandwidth(link)
        if t > transfer:
            transfer = t
    max_util = 0.0
    bottleneck = ""
    for link in sorted(loads):
        util = loads[link] / topo.bandwidth(link)
        if util > max_util:
            max_util = util
            bottleneck = link
    return StepLatencyReport(
        noise=noise,
        step_time=setup + transfer,
        max_link_utilization=max_util,
        bottleneck_link=bottleneck,
        setup_time=setup,
    )


DEFAULT_NOISE_LEVELS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6)


def sweep_noise(
    graph: NeuronGraph,
    partitioner: Callable[[NeuronGraph], PartitionMap],
    router: Callable[[GpuTrafficGraph], RoutingTable],
    topo_spec: TopologySpec,
    noises: Iterable[float] = DEFAULT_NOISE_LEVELS,
) -> list[StepLatencyReport]:
    """Run the pipeline once, then evaluate the latency model per noise level."""
    noises = list(noises)
    if not noises:
        raise ValueError("at least one noise level is required")
    for nu in noises:
        _check_noise(nu)
    pm = partitioner(graph)
    gt = aggregate(graph, pm)
    rt = router(gt)
    topo = build_topology(topo_spec, gt.n_gpus)
    reports = []
    for nu in noises:
        loads = map_flows(rt, gt, topo, nu)
        reports.append(step_latency(loads, rt, topo, noise=nu))
    return reports


def write_sweep_csv(reports: Iterable[StepLatencyReport], destination) -> None:
    with open(destination, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["noise", "step_time_s", "setup_time_s", "max_link_utilization", "bottleneck_link"]
        )
        for r in reports:
            writer.writerow(
                [
                    repr(r.noise),
                    repr(r.step_time),
                    repr(r.setup_time),
                    repr(r.max_link_utilization),
                    r.bottleneck_link,
                ]
            )


def read_sweep_csv(source) -> list[StepLatencyReport]:
    with open(source, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != "noise":
            raise ValueError(f"unexpected sweep CSV header in {source}")
        out = []
        for row in reader:
            out.append(
                StepLatencyReport(
                    noise=float(row[0]),
                    step_time=float(row[1]),
                    setup_time=float(row[2]),
                    max_link_utilization=float(row[3]),
                    bottleneck_link=row[4],
                )
            )
    return out
