"""Shared fixtures and independent oracles for the test suite.

The oracles here deliberately avoid the library's own accumulation paths:
cut values are plain Python sums over edge tuples and the exhaustive
minimizer enumerates assignments directly, so they can catch errors in the
code under test instead of mirroring them.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from neurocomm.model import NeuronGraph
from neurocomm.traffic import GpuTrafficGraph


def make_graph(n_neurons, weights, edges) -> NeuronGraph:
    edges = sorted(edges)
    ei = np.array([e[0] for e in edges], dtype=np.int64)
    ej = np.array([e[1] for e in edges], dtype=np.int64)
    ep = np.array([e[2] for e in edges], dtype=np.float64)
    return NeuronGraph(n_neurons, np.asarray(weights, dtype=np.float64), ei, ej, ep)


def make_gt(n_gpus, off_diagonal, wg=None, diagonal=None) -> GpuTrafficGraph:
    pg = np.zeros((n_gpus, n_gpus))
    for (a, b), value in off_diagonal.items():
        pg[a, b] = pg[b, a] = value
    if diagonal is not None:
        for a, value in diagonal.items():
            pg[a, a] = value
    if wg is None:
        wg = np.ones(n_gpus)
    return GpuTrafficGraph(n_gpus, pg, np.asarray(wg, dtype=np.float64))


@pytest.fixture
def g4() -> NeuronGraph:
    """Two tight pairs {0,1} and {2,3} with weak cross links."""
    return make_graph(
        4,
        [1.0, 1.0, 1.0, 1.0],
        [(0, 1, 0.9), (2, 3, 0.9), (0, 2, 0.1), (0, 3, 0.1), (1, 2, 0.1), (1, 3, 0.1)],
    )


def brute_cut(graph: NeuronGraph, assignment) -> float:
    """Cross-GPU traffic by direct edge enumeration (plain Python sum)."""
    w = graph.weights.tolist()
    total = 0.0
    for i, j, p in graph.edge_list():
        if assignment[i] != assignment[j]:
            total += p * w[i] * w[j]
    return total


def min_cut_exhaustive(graph: NeuronGraph, n_gpus: int, weight_bound: float) -> float:
    """Minimum cut over every assignment whose buckets all respect the bound.

    The first neuron is pinned to GPU 0; both the cut and the bound are
    invariant under GPU relabeling, so no minimum is lost.
    """
    m = graph.n_neurons
    w = graph.weights.tolist()
    best = float("inf")
    for tail in itertools.product(range(n_gpus), repeat=m - 1):
        assignment = (0,) + tail
        buckets = [0.0] * n_gpus
        for i, g in enumerate(assignment):
            buckets[g] += w[i]
        if max(buckets) > weight_bound:
            continue
        cut = brute_cut(graph, assignment)
        if cut < best:
            best = cut
    return best


def groups_as_sets(assignment, n_buckets) -> set[frozenset]:
    a = np.asarray(assignment)
    return {
        frozenset(np.flatnonzero(a == g).tolist())
        for g in range(n_buckets)
        if (a == g).any()
    }
