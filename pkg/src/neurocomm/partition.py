"""Neuron-to-GPU placement.

Three placement strategies over the same contract (every neuron lands on
exactly one GPU):

* ``partition_greedy`` — capacity-bounded greedy fill that keeps strongly
  communicating neurons together while holding every GPU near the average
  weight; this is the scheme the rest of the pipeline is built around.
* ``partition_random`` — uniform random placement with near-equal neuron
  counts per GPU; the classic baseline.
* ``partition_genetic`` — a genetic-algorithm baseline that minimizes the
  peak per-GPU outbound traffic under the same balance bound.

Placements are exchanged in the PMAP text format::

    PMAP 1 <n_neurons> <n_gpus>
    <gpu>                          one line per neuron
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import traffic
from .accum import binned_sums
from .errors import ParseError
from .greedy import adjacency_from_edges, greedy_fill
from .model import NeuronGraph


@dataclass(frozen=True)
class PartitionConfig:
    """Knobs of the greedy placement.

    ``max_iterations`` is accepted for interface stability: the fill is a
    deterministic pure function, so repeating it cannot change the result
    and one pass is always final. ``balance_slack`` lets a GPU overshoot
    the average weight by the given fraction before it stops accepting
    neurons. The only tie-break rule implemented is ``lowest-index``.
    """

    max_iterations: int = 1
    balance_slack: float = 0.0
    tie_break: str = "lowest-index"


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 64
    generations: int = 200
    tournament_size: int = 3
    crossover_rate: float = 0.9
    mutation_rate: float | None = None  # default 1 / n_neurons
    seed: int = 0


@dataclass(eq=False)
class PartitionMap:
    """Total assignment of neurons to GPUs."""

    n_gpus: int
    assignment: np.ndarray

    @property
    def n_neurons(self) -> int:
        return int(self.assignment.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PartitionMap):
            return NotImplemented
        return self.n_gpus == other.n_gpus and np.array_equal(
            self.assignment, other.assignment
        )


def _check_args(graph: NeuronGraph, n_gpus: int) -> None:
    if not 1 <= n_gpus <= graph.n_neurons:
        raise ValueError(
            f"n_gpus must be in [1, {graph.n_neurons}], got {n_gpus}"
        )


def _check_partition_config(cfg: PartitionConfig) -> None:
    if cfg.max_iterations < 1:
        raise ValueError(f"max_iterations must be >= 1, got {cfg.max_iterations}")
    if not 0.0 <= cfg.balance_slack < 1.0:
        raise ValueError(f"balance_slack must be in [0, 1), got {cfg.balance_slack}")
    if cfg.tie_break != "lowest-index":
        raise ValueError(f"unknown tie_break rule {cfg.tie_break!r}")


def partition_greedy(
    graph: NeuronGraph, n_gpus: int, cfg: PartitionConfig | None = None
) -> PartitionMap:
    """Greedy traffic-cohesive placement under the per-GPU weight bound.

    Affinity of a candidate neuron to a partially filled GPU is the total
    expected traffic between the candidate and the GPU's current members,
    i.e. the marginal cross-GPU traffic avoided by co-locating them.
    """
    cfg = cfg or PartitionConfig()
    _check_partition_config(cfg)
    _check_args(graph, n_gpus)
    contrib = graph.edge_p * graph.weights[graph.edge_i] * graph.weights[graph.edge_j]
    indptr, indices, values = adjacency_from_edges(
        graph.n_neurons, graph.edge_i, graph.edge_j, contrib
    )
    assignment = greedy_fill(
        graph.weights, indptr, indices, values, n_gpus, cfg.balance_slack
    )
    return PartitionMap(n_gpus, assignment)


def partition_random(graph: NeuronGraph, n_gpus: int, seed: int = 0) -> PartitionMap:
    """Uniform random placement with per-GPU counts differing by at most 1."""
    _check_args(graph, n_gpus)
    rng = np.random.default_rng(seed)
    base, extra = divmod(graph.n_neurons, n_gpus)
    slots = np.repeat(np.arange(n_gpus, dtype=np.int64), base)
    if extra:
        slots = np.concatenate(
            [slots, rng.choice(n_gpus, size=extra, replace=False).astype(np.int64)]
        )
    rng.shuffle(slots)
    return PartitionMap(n_gpus, slots)


def gpu_weights(graph: NeuronGraph, pm: PartitionMap) -> np.ndarray:
    """Total neuron weight per GPU (fsum-exact)."""
    if pm.assignment.size != graph.n_neurons:
        raise ValueError(
            f"partition map covers {pm.assignment.size} neurons, graph has {graph.n_neurons}"
        )
    return binned_sums(pm.assignment, graph.weights, pm.n_gpus)


def cross_traffic(graph: NeuronGraph, pm: PartitionMap) -> float:
    """Total expected traffic between neurons placed on different GPUs.

    Delegates to GPU-level aggregation and sums the off-diagonal cells, so
    this value agrees exactly with what the traffic reports show.
    """
    gt = traffic.aggregate(graph, pm)
    iu = np.triu_indices(gt.n_gpus, k=1)
    return math.fsum(gt.pg[iu])


def _check_ga_config(cfg: GaConfig, n_neurons: int) -> None:
    if cfg.population_size < 2:
        raise ValueError(f"population_size must be >= 2, got {cfg.population_size}")
    if cfg.generations < 1:
        raise ValueError(f"generations must be >= 1, got {cfg.generations}")
    if not 1 <= cfg.tournament_size <= cfg.population_size:
        raise ValueError(
            f"tournament_size must be in [1, population_size], got {cfg.tournament_size}"
        )
    if not 0.0 <= cfg.crossover_rate <= 1.0:
        raise ValueError(f"crossover_rate must be in [0, 1], got {cfg.crossover_rate}")
    mut = cfg.mutation_rate
    if mut is not None and not 0.0 <= mut <= 1.0:
        raise ValueError(f"mutation_rate must be in [0, 1], got {mut}")


def _repair_balance(
    assignment: np.ndarray, weights: np.ndarray, n_gpus: int, bound: float
) -> None:
    """Move neurons off overloaded GPUs until every GPU respects ``bound``.

    Each move takes the heaviest neuron of the heaviest GPU onto the
    lightest GPU, which strictly shrinks the total excess, so this always
    terminates. Ties resolve to the lowest index throughout.
    """
    while True:
        wg = binned_sums(assignment, weights, n_gpus)
        hi = int(np.argmax(wg))
        if wg[hi] <= bound:
            return
        lo = int(np.argmin(wg))
        members = np.flatnonzero(assignment == hi)
        mover = int(members[np.argmax(weights[members])])
        assignment[mover] = lo


def partition_genetic(
    graph: NeuronGraph, n_gpus: int, cfg: GaConfig | None = None
) -> PartitionMap:
    """Genetic-algorithm baseline minimizing peak per-GPU outbound traffic.

    Chromosome = assignment vector; tournament selection, uniform
    crossover, per-gene mutation, then a repair pass that restores the
    balance bound. Deterministic in ``cfg.seed``.
    """
    cfg = cfg or GaConfig()
    _check_args(graph, n_gpus)
    _check_ga_config(cfg, graph.n_neurons)
    m = graph.n_neurons
    if n_gpus == 1:
        return PartitionMap(1, np.zeros(m, dtype=np.int64))

    rng = np.random.default_rng(cfg.seed)
    mutation_rate = cfg.mutation_rate if cfg.mutation_rate is not None else 1.0 / m
    weights = graph.weights
    bound = math.fsum(weights) / n_gpus + float(weights.max())

    # converged populations re-evaluate the same chromosomes over and over
    fitness_cache: dict[bytes, float] = {}

    def fitness(assignment: np.ndarray) -> float:
        key = assignment.tobytes()
        cached = fitness_cache.get(key)
        if cached is not None:
            return cached
        gt = traffic.aggregate(graph, PartitionMap(n_gpus, assignment))
        peak = traffic.per_gpu_send_traffic(gt).peak
        if len(fitness_cache) < 65536:
            fitness_cache[key] = peak
        return peak

    def random_balanced() -> np.ndarray:
        base, extra = divmod(m, n_gpus)
        slots = np.repeat(np.arange(n_gpus, dtype=np.int64), base)
        if extra:
            slots = np.concatenate(
                [slots, rng.choice(n_gpus, size=extra, replace=False).astype(np.int64)]
            )
        rng.shuffle(slots)
        _repair_balance(slots, weights, n_gpus, bound)
        return slots

    population = [random_balanced() for _ in range(cfg.population_size)]
    scores = [fitness(ind) for ind in population]
    best_idx = int(np.argmin(scores))
    best = population[best_idx].copy()
    best_score = scores[best_idx]

    def tournament() -> np.ndarray:
        picks = rng.integers(0, cfg.population_size, cfg.tournament_size)
        winner = min(picks.tolist(), key=lambda k: (scores[k], k))
        return population[winner]

    for _ in range(cfg.generations):
        if best_score == 0.0:
            break  # peak traffic cannot drop below zero
        next_population = [best.copy()]
        while len(next_population) < cfg.population_size:
            p1 = tournament()
            p2 = tournament()
            if rng.random() < cfg.crossover_rate:
                child = np.where(rng.random(m) < 0.5, p1, p2)
            else:
                child = p1.copy()
            mutate = rng.random(m) < mutation_rate
            n_mut = int(mutate.sum())
            if n_mut:
                child[mutate] = rng.integers(0, n_gpus, n_mut)
            _repair_balance(child, weights, n_gpus, bound)
            next_population.append(child)
        population = next_population
        scores = [fitness(ind) for ind in population]
        gen_best = int(np.argmin(scores))
        if scores[gen_best] < best_score:
            best_score = scores[gen_best]
            best = population[gen_best].copy()
    return PartitionMap(n_gpus, best)


def save_partition_map(pm: PartitionMap, destination) -> None:
    lines = [f"PMAP 1 {pm.n_neurons} {pm.n_gpus}"]
    lines.extend(str(g) for g in pm.assignment.tolist())
    with open(destination, "w", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def load_partition_map(source) -> PartitionMap:
    with open(source, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", 1)
    header = lines[0].split()
    if len(header) != 4 or header[0] != "PMAP" or header[1] != "1":
        raise ParseError(f"malformed header {lines[0]!r}", 1)
    try:
        m, n = int(header[2]), int(header[3])
    except ValueError:
        raise ParseError(f"malformed header {lines[0]!r}", 1) from None
    if m < 1 or n < 1:
        raise ParseError(f"invalid counts in header {lines[0]!r}", 1)
    if len(lines) != 1 + m:
        raise ParseError(
            "unexpected end of file" if len(lines) < 1 + m else "unexpected trailing content",
            min(len(lines), 1 + m) + 1,
        )
    assignment = np.empty(m, dtype=np.int64)
    for k in range(m):
        try:
            g = int(lines[1 + k])
        except ValueError:
            raise ParseError(f"malformed GPU index {lines[1 + k]!r}", 2 + k) from None
        if not 0 <= g < n:
            raise ParseError(f"GPU index {g} out of range [0, {n})", 2 + k)
        assignment[k] = g
    return PartitionMap(n, assignment)
