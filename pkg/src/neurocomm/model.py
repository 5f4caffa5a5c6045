"""Synthetic brain-model graphs: generation, validation, and file I/O.

A model graph stores one weight per neuron plus a sparse set of symmetric
connection probabilities. The weight of a neuron acts as its traffic
multiplier: the expected traffic between connected neurons ``i`` and ``j``
is ``p * w[i] * w[j]``.

Graphs are generated with a planted-partition scheme: neurons are split
into near-equal contiguous communities, each intra-community pair becomes
an edge independently with probability ``p_in`` and each inter-community
pair with probability ``p_out``. Realized intra-community edges draw their
connection probability from a high range and inter-community edges from a
low one, so traffic inside a community dominates traffic between them.

Graphs are exchanged in the NNG text format (LF line endings)::

    NNG 1 <n_neurons> <n_edges>
    <weight>                       one line per neuron
    <i> <j> <p>                    one line per edge, i < j, ascending (i, j)

Floats are written as their shortest round-trippable decimal, so a
save/load cycle reproduces every value bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, SpecificationError

# Connection-probability ranges for realized edges. Intra-community edges
# are kept strong so that community structure carries most of the traffic.
INTRA_P_RANGE = (0.5, 1.0)
INTER_P_RANGE = (0.05, 0.5)


@dataclass(frozen=True)
class ModelSpec:
    """Parameters of the planted-partition generator."""

    n_neurons: int
    n_communities: int
    p_in: float
    p_out: float
    weight_low: float = 1.0
    weight_high: float = 1.0
    seed: int = 0


@dataclass(eq=False)
class NeuronGraph:
    """Neuron weights plus sparse symmetric connection probabilities.

    Edges are stored columnar as ``(edge_i, edge_j, edge_p)`` with
    ``i < j``; absent pairs have connection probability zero. Equality
    compares the edge *set*, so storage order does not matter.
    """

    n_neurons: int
    weights: np.ndarray
    edge_i: np.ndarray
    edge_j: np.ndarray
    edge_p: np.ndarray

    @property
    def n_edges(self) -> int:
        return int(self.edge_i.size)

    def edge_list(self) -> list[tuple[int, int, float]]:
        return list(
            zip(self.edge_i.tolist(), self.edge_j.tolist(), self.edge_p.tolist())
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, NeuronGraph):
            return NotImplemented
        if self.n_neurons != other.n_neurons:
            return False
        if not np.array_equal(self.weights, other.weights):
            return False
        if self.n_edges != other.n_edges:
            return False
        a = _canonical_edge_order(self)
        b = _canonical_edge_order(other)
        return (
            np.array_equal(self.edge_i[a], other.edge_i[b])
            and np.array_equal(self.edge_j[a], other.edge_j[b])
            and np.array_equal(self.edge_p[a], other.edge_p[b])
        )


@dataclass
class ValidationReport:
    """Every invariant violation found in a graph; empty means valid."""

    issues: list[str]

    @property
    def ok(self) -> bool:
        return not self.issues


def _canonical_edge_order(graph: NeuronGraph) -> np.ndarray:
    return np.lexsort((graph.edge_j, graph.edge_i))


def _validate_spec(spec: ModelSpec) -> None:
    if spec.n_neurons < 1:
        raise SpecificationError(f"n_neurons must be >= 1, got {spec.n_neurons}")
    if spec.n_communities < 1:
        raise SpecificationError(
            f"n_communities must be >= 1, got {spec.n_communities}"
        )
    if spec.n_communities > spec.n_neurons:
        raise SpecificationError(
            f"n_communities must be <= n_neurons, got {spec.n_communities} > {spec.n_neurons}"
        )
    if not 0.0 <= spec.p_out <= spec.p_in <= 1.0:
        raise SpecificationError(
            f"edge probabilities must satisfy 0 <= p_out <= p_in <= 1, "
            f"got p_in={spec.p_in}, p_out={spec.p_out}"
        )
    if not (spec.weight_low > 0.0 and math.isfinite(spec.weight_low)):
        raise SpecificationError(f"weight_low must be > 0, got {spec.weight_low}")
    if not (spec.weight_high > 0.0 and math.isfinite(spec.weight_high)):
        raise SpecificationError(f"weight_high must be > 0, got {spec.weight_high}")
    if spec.weight_low > spec.weight_high:
        raise SpecificationError(
            f"weight_low must be <= weight_high, got {spec.weight_low} > {spec.weight_high}"
        )
    if not 0 <= spec.seed < 2**64:
        raise SpecificationError(f"seed must fit in 64 unsigned bits, got {spec.seed}")


def _validate_p_range(rng: tuple[float, float], name: str) -> None:
    lo, hi = rng
    if not (0.0 < lo <= hi <= 1.0):
        raise SpecificationError(
            f"{name} must satisfy 0 < low <= high <= 1, got ({lo}, {hi})"
        )


def community_sizes(n_neurons: int, n_communities: int) -> np.ndarray:
    """Near-equal community sizes; the remainder spreads one per community."""
    base, extra = divmod(n_neurons, n_communities)
    sizes = np.full(n_communities, base, dtype=np.int64)
    sizes[:extra] += 1
    return sizes


def _bernoulli_indices(n_trials: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Indices of successes among n_trials independent Bernoulli(p) draws.

    Uses geometric gap sampling, so the cost is proportional to the number
    of successes rather than the number of trials.
    """
    if n_trials == 0 or p <= 0.0:
        return np.empty(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(n_trials, dtype=np.int64)
    log1m = math.log1p(-p)
    out: list[np.ndarray] = []
    base = 0
    while base < n_trials:
        mean = (n_trials - base) * p
        size = max(32, int(mean + 6.0 * math.sqrt(mean) + 16.0))
        u = rng.random(size)
        gaps = np.floor(np.log1p(-u) / log1m).astype(np.int64) + 1
        positions = base - 1 + np.cumsum(gaps)
        inside = positions < n_trials
        if bool(inside.all()):
            out.append(positions)
            base = int(positions[-1]) + 1
            continue
        out.append(positions[inside])
        break
    return np.concatenate(out) if out else np.empty(0, dtype=np.int64)


def _decode_pairs(t: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Map linear indices onto pairs (i, j), i < j, in ascending (i, j) order."""
    tt = t.astype(np.float64)
    edge = 2 * size - 1
    i = np.floor((edge - np.sqrt(edge * edge - 8.0 * tt)) / 2.0).astype(np.int64)
    # one-step corrections for sqrt rounding
    off = i * (2 * size - i - 1) // 2
    i = np.where(off > t, i - 1, i)
    off = i * (2 * size - i - 1) // 2
    nxt = (i + 1) * (2 * size - i - 2) // 2
    i = np.where(nxt <= t, i + 1, i)
    off = i * (2 * size - i - 1) // 2
    j = t - off + i + 1
    return i, j


def generate_synthetic(
    spec: ModelSpec,
    *,
    intra_p_range: tuple[float, float] = INTRA_P_RANGE,
    inter_p_range: tuple[float, float] = INTER_P_RANGE,
) -> NeuronGraph:
    """Generate a planted-partition graph, fully determined by ``spec.seed``.

    The random stream is consumed in a fixed order (weights, then the
    intra-community blocks in community order, then the inter-community
    blocks in ascending pair order), so identical specs produce
    bit-identical graphs.
    """
    _validate_spec(spec)
    _validate_p_range(intra_p_range, "intra_p_range")
    _validate_p_range(inter_p_range, "inter_p_range")
    rng = np.random.default_rng(spec.seed)
    m, c = spec.n_neurons, spec.n_communities
    weights = rng.uniform(spec.weight_low, spec.weight_high, m)
    sizes = community_sizes(m, c)
    starts = np.concatenate(([0], np.cumsum(sizes)))

    ei_parts: list[np.ndarray] = []
    ej_parts: list[np.ndarray] = []
    ep_parts: list[np.ndarray] = []
    for k in range(c):
        s = int(sizes[k])
        t = _bernoulli_indices(s * (s - 1) // 2, spec.p_in, rng)
        if t.size:
            bi, bj = _decode_pairs(t, s)
            ei_parts.append(bi + starts[k])
            ej_parts.append(bj + starts[k])
            ep_parts.append(rng.uniform(intra_p_range[0], intra_p_range[1], t.size))
    for a in range(c):
        for b in range(a + 1, c):
            sb = int(sizes[b])
            t = _bernoulli_indices(int(sizes[a]) * sb, spec.p_out, rng)
            if t.size:
                ei_parts.append(starts[a] + t // sb)
                ej_parts.append(starts[b] + t % sb)
                ep_parts.append(
                    rng.uniform(inter_p_range[0], inter_p_range[1], t.size)
                )

    if ei_parts:
        ei = np.concatenate(ei_parts)
        ej = np.concatenate(ej_parts)
        ep = np.concatenate(ep_parts)
        order = np.lexsort((ej, ei))
        ei, ej, ep = ei[order], ej[order], ep[order]
    else:
        ei = np.empty(0, dtype=np.int64)
        ej = np.empty(0, dtype=np.int64)
        ep = np.empty(0, dtype=np.float64)
    return NeuronGraph(m, weights, ei, ej, ep)


def validate(graph: NeuronGraph) -> ValidationReport:
    """List every invariant violation; violations are data, not failures."""
    issues: list[str] = []
    m = graph.n_neurons
    w = np.asarray(graph.weights, dtype=np.float64)
    if w.size != m:
        issues.append(f"weight vector has {w.size} entries for {m} neurons")
    bad_w = np.flatnonzero(~(np.isfinite(w) & (w > 0.0)))
    for i in bad_w.tolist():
        issues.append(f"neuron {i}: weight {w[i]!r} is not strictly positive and finite")

    ei, ej, ep = graph.edge_i, graph.edge_j, graph.edge_p
    if not (ei.size == ej.size == ep.size):
        issues.append("edge columns have mismatched lengths")
        return ValidationReport(issues)
    bad_idx = np.flatnonzero((ei < 0) | (ei >= ej) | (ej >= m))
    for k in bad_idx.tolist():
        issues.append(
            f"edge ({int(ei[k])}, {int(ej[k])}): indices must satisfy 0 <= i < j < {m}"
        )
    bad_p = np.flatnonzero(~(np.isfinite(ep) & (ep > 0.0) & (ep <= 1.0)))
    for k in bad_p.tolist():
        issues.append(
            f"edge ({int(ei[k])}, {int(ej[k])}): probability {ep[k]!r} outside (0, 1]"
        )
    if ei.size:
        keys = ei.astype(np.int64) * max(m, 1) + ej.astype(np.int64)
        uniq, counts = np.unique(keys, return_counts=True)
        for key in uniq[counts > 1].tolist():
            issues.append(f"duplicate edge ({key // max(m, 1)}, {key % max(m, 1)})")
    return ValidationReport(issues)


def _fmt(x: float) -> str:
    return repr(float(x))


def save_graph(graph: NeuronGraph, destination) -> None:
    """Write ``graph`` in NNG format; edges are emitted in ascending order."""
    order = _canonical_edge_order(graph)
    lines = [f"NNG 1 {graph.n_neurons} {graph.n_edges}"]
    lines.extend(_fmt(x) for x in graph.weights.tolist())
    ei = graph.edge_i[order].tolist()
    ej = graph.edge_j[order].tolist()
    ep = graph.edge_p[order].tolist()
    lines.extend(f"{i} {j} {_fmt(p)}" for i, j, p in zip(ei, ej, ep))
    with open(destination, "w", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def load_graph(source) -> NeuronGraph:
    """Read an NNG file, enforcing the format's structural guarantees."""
    with open(source, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", 1)
    header = lines[0].split()
    if len(header) != 4 or header[0] != "NNG":
        raise ParseError(f"malformed header {lines[0]!r}", 1)
    if header[1] != "1":
        raise ParseError(f"unsupported format version {header[1]!r}", 1)
    try:
        m, e = int(header[2]), int(header[3])
    except ValueError:
        raise ParseError(f"malformed header {lines[0]!r}", 1) from None
    if m < 1 or e < 0:
        raise ParseError(f"invalid counts in header {lines[0]!r}", 1)
    expected = 1 + m + e
    if len(lines) < expected:
        raise ParseError("unexpected end of file", len(lines) + 1)
    if len(lines) > expected:
        raise ParseError("unexpected trailing content", expected + 1)

    weights = np.empty(m, dtype=np.float64)
    for i in range(m):
        line_no = 2 + i
        try:
            w = float(lines[1 + i])
        except ValueError:
            raise ParseError(f"malformed weight {lines[1 + i]!r}", line_no) from None
        if not (math.isfinite(w) and w > 0.0):
            raise ParseError(f"weight {w!r} is not strictly positive", line_no)
        weights[i] = w

    ei = np.empty(e, dtype=np.int64)
    ej = np.empty(e, dtype=np.int64)
    ep = np.empty(e, dtype=np.float64)
    prev = (-1, -1)
    for k in range(e):
        line_no = 2 + m + k
        parts = lines[1 + m + k].split()
        if len(parts) != 3:
            raise ParseError(f"malformed edge line {lines[1 + m + k]!r}", line_no)
        try:
            i, j, p = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError(f"malformed edge line {lines[1 + m + k]!r}", line_no) from None
        if not (0 <= i < j < m):
            raise ParseError(f"edge ({i}, {j}) out of range for {m} neurons", line_no)
        if not (math.isfinite(p) and 0.0 < p <= 1.0):
            raise ParseError(f"edge probability {p!r} outside (0, 1]", line_no)
        if (i, j) == prev:
            raise ParseError(f"duplicate edge ({i}, {j})", line_no)
        if (i, j) < prev:
            raise ParseError(f"edge ({i}, {j}) not in ascending (i, j) order", line_no)
        prev = (i, j)
        ei[k], ej[k], ep[k] = i, j, p
    return NeuronGraph(m, weights, ei, ej, ep)
