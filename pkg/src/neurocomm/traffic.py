"""GPU-level traffic aggregation and the metrics reported on it.

Aggregation collapses a partitioned neuron graph onto its GPUs: cell
``pg[a][b]`` holds the total expected traffic between GPUs ``a`` and ``b``
(the diagonal holds intra-GPU traffic), and ``wg[a]`` the total neuron
weight placed on GPU ``a``. All sums are fsum-accumulated, so results do
not depend on edge order.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .accum import binned_sums, keyed_sums

if TYPE_CHECKING:
    from .model import NeuronGraph
    from .partition import PartitionMap


@dataclass(eq=False)
class GpuTrafficGraph:
    """Dense symmetric GPU traffic matrix plus per-GPU weight totals."""

    n_gpus: int
    pg: np.ndarray  # (N, N), diagonal = intra-GPU traffic
    wg: np.ndarray  # (N,)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GpuTrafficGraph):
            return NotImplemented
        return (
            self.n_gpus == other.n_gpus
            and np.array_equal(self.pg, other.pg)
            and np.array_equal(self.wg, other.wg)
        )


@dataclass(eq=False)
class TrafficReport:
    """Per-GPU outbound traffic with summary statistics."""

    per_gpu_send: np.ndarray
    peak: float
    mean: float
    stddev: float  # population standard deviation

    @property
    def n_gpus(self) -> int:
        return int(self.per_gpu_send.size)


def report_from_vector(values) -> TrafficReport:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return TrafficReport(v, 0.0, 0.0, 0.0)
    return TrafficReport(v, float(v.max()), float(v.mean()), float(v.std()))


def aggregate(graph: NeuronGraph, pm: PartitionMap) -> GpuTrafficGraph:
    """Collapse neuron-level traffic onto the GPUs of a partition map."""
    if pm.assignment.size != graph.n_neurons:
        raise ValueError(
            f"partition map covers {pm.assignment.size} neurons, graph has {graph.n_neurons}"
        )
    n = pm.n_gpus
    a = pm.assignment[graph.edge_i]
    b = pm.assignment[graph.edge_j]
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    contrib = graph.edge_p * graph.weights[graph.edge_i] * graph.weights[graph.edge_j]
    uk, sums = keyed_sums(lo * n + hi, contrib)
    pg = np.zeros((n, n), dtype=np.float64)
    ra, rb = uk // n, uk % n
    pg[ra, rb] = sums
    pg[rb, ra] = sums
    wg = binned_sums(pm.assignment, graph.weights, n)
    return GpuTrafficGraph(n, pg, wg)


def per_gpu_send_traffic(gt: GpuTrafficGraph) -> TrafficReport:
    """Total off-GPU traffic originated by each GPU (off-diagonal row sums)."""
    n = gt.n_gpus
    send = np.empty(n, dtype=np.float64)
    for a in range(n):
        row = gt.pg[a].copy()
        row[a] = 0.0
        send[a] = math.fsum(row)
    return report_from_vector(send)


def peak_reduction(baseline: TrafficReport, candidate: TrafficReport) -> float:
    """Signed percent drop of the candidate's peak below the baseline's."""
    if baseline.n_gpus != candidate.n_gpus:
        raise ValueError(
            f"reports cover different GPU counts: {baseline.n_gpus} vs {candidate.n_gpus}"
        )
    if baseline.peak == 0.0:
        raise ValueError("baseline peak is zero; reduction is undefined")
    return 100.0 * (baseline.peak - candidate.peak) / baseline.peak


def write_traffic_csv(report: TrafficReport, destination, value_column: str = "send_traffic") -> None:
    with open(destination, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["gpu", value_column])
        for gpu, value in enumerate(report.per_gpu_send.tolist()):
            writer.writerow([gpu, repr(value)])


def read_traffic_csv(source) -> TrafficReport:
    with open(source, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) != 2 or header[0] != "gpu":
            raise ValueError(f"unexpected traffic CSV header in {source}")
        values = [float(row[1]) for row in reader]
    return report_from_vector(values)


def write_traffic_summary(report: TrafficReport, destination) -> None:
    payload = {
        "peak": report.peak,
        "mean": report.mean,
        "stddev": report.stddev,
        "n_gpus": report.n_gpus,
    }
    with open(destination, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
