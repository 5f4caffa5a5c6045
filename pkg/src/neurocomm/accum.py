"""Order-stable floating-point accumulation.

Traffic aggregation and link-load mapping sum many small contributions into
shared cells. Plain left-to-right addition would make results depend on edge
order, so every reduction here goes through ``math.fsum``, whose output is
the correctly rounded true sum and therefore independent of input order.
"""

from __future__ import annotations

import math

import numpy as np


def exact_sum(values) -> float:
    """Correctly rounded sum of a float iterable (order independent)."""
    return math.fsum(values)


def keyed_sums(keys: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sum ``values`` per distinct integer key.

    Returns ``(unique_keys, sums)`` with keys ascending. Each per-key sum is
    an fsum over that key's contributions, so reordering the input never
    changes the result.
    """
    keys = np.asarray(keys)
    values = np.asarray(values, dtype=np.float64)
    if keys.size == 0:
        return keys[:0], values[:0]
    order = np.argsort(keys, kind="stable")
    ks = keys[order]
    vs = values[order]
    cuts = np.flatnonzero(ks[1:] != ks[:-1]) + 1
    starts = np.concatenate(([0], cuts))
    ends = np.concatenate((cuts, [ks.size]))
    sums = np.empty(starts.size, dtype=np.float64)
    for n, (s, e) in enumerate(zip(starts.tolist(), ends.tolist())):
        sums[n] = math.fsum(vs[s:e])
    return ks[starts], sums


def binned_sums(keys, values, n_bins: int) -> np.ndarray:
    """Dense variant of :func:`keyed_sums` for keys in ``[0, n_bins)``."""
    out = np.zeros(n_bins, dtype=np.float64)
    uk, sums = keyed_sums(np.asarray(keys), values)
    out[uk] = sums
    return out
