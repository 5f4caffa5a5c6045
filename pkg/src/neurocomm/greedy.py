"""Capacity-bounded greedy bucket filling.

One routine serves two levels of the pipeline: it assigns neurons to GPUs
and, applied one level up, GPUs to groups. Items carry a weight, pairwise
affinities say how strongly two items want to be co-located, and buckets
are filled one at a time toward a shared capacity target of
``total_weight / n_buckets``.

Filling rule for every bucket except the last:

* seed with the heaviest unassigned item (ties: lowest index);
* repeatedly pick the unassigned item with the highest affinity to the
  bucket's current members (ties: heavier item, then lowest index; if all
  affinities are zero, the heaviest unassigned item);
* stop as soon as adding the picked item would push the bucket weight
  above ``capacity * (1 + balance_slack)``; the seed is exempt.

The last bucket absorbs every remaining item. A bucket also closes early
rather than starve the buckets after it, so no bucket is ever left empty.
The selection order is total, which makes the fill a pure function of its
inputs.
"""

from __future__ import annotations

import heapq
import math

import numpy as np


def adjacency_from_edges(
    n_items: int, idx_a: np.ndarray, idx_b: np.ndarray, values: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Symmetric CSR adjacency from undirected weighted pairs."""
    rows = np.concatenate([idx_a, idx_b])
    cols = np.concatenate([idx_b, idx_a])
    vals = np.concatenate([values, values])
    order = np.argsort(rows, kind="stable")
    indptr = np.zeros(n_items + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_items), out=indptr[1:])
    return indptr, cols[order], vals[order]


def adjacency_from_dense(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """CSR over the positive off-diagonal entries of a dense symmetric matrix."""
    m = np.array(matrix, dtype=np.float64, copy=True)
    np.fill_diagonal(m, 0.0)
    rows, cols = np.nonzero(m > 0.0)
    indptr = np.zeros(m.shape[0] + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=m.shape[0]), out=indptr[1:])
    return indptr, cols.astype(np.int64), m[rows, cols]


def greedy_fill(
    weights: np.ndarray,
    indptr: np.ndarray,
    indices: np.ndarray,
    values: np.ndarray,
    n_buckets: int,
    balance_slack: float = 0.0,
) -> np.ndarray:
    """Assign every item to a bucket; returns an int64 vector of bucket ids."""
    weights = np.asarray(weights, dtype=np.float64)
    m = int(weights.size)
    if not 1 <= n_buckets <= m:
        raise ValueError(f"n_buckets must be in [1, {m}], got {n_buckets}")
    if not 0.0 <= balance_slack < 1.0:
        raise ValueError(f"balance_slack must be in [0, 1), got {balance_slack}")
    capacity = (math.fsum(weights) / n_buckets) * (1.0 + balance_slack)

    assignment = np.full(m, -1, dtype=np.int64)
    free = np.ones(m, dtype=bool)
    order = np.lexsort((np.arange(m), -weights)).tolist()  # weight desc, index asc
    ptr = 0
    score = np.zeros(m, dtype=np.float64)
    neg_w = (-weights).tolist()
    unassigned = m

    for bucket in range(n_buckets - 1):
        needed_later = n_buckets - 1 - bucket
        score.fill(0.0)
        heap: list[tuple[float, float, int]] = []
        bucket_weight = 0.0
        seeded = False
        while unassigned > needed_later:
            cand = -1
            while heap:
                neg_s, _, idx = heap[0]
                if free[idx] and score[idx] == -neg_s:
                    cand = idx
                    break
                heapq.heappop(heap)
            if cand < 0:
                while not free[order[ptr]]:
                    ptr += 1
                cand = order[ptr]
            w = float(weights[cand])
            if seeded and bucket_weight + w > capacity:
                break
            assignment[cand] = bucket
            free[cand] = False
            unassigned -= 1
            seeded = True
            bucket_weight += w
            lo, hi = int(indptr[cand]), int(indptr[cand + 1])
            if lo != hi:
                nbrs = indices[lo:hi]
                mask = free[nbrs]
                if mask.any():
                    nbrs = nbrs[mask]
                    score[nbrs] += values[lo:hi][mask]
                    for v, s in zip(nbrs.tolist(), score[nbrs].tolist()):
                        heapq.heappush(heap, (-s, neg_w[v], v))

    assignment[free] = n_buckets - 1
    return assignment
