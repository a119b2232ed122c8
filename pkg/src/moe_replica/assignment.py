"""Balanced, interleaved assignment of per-layer replica slots to GPUs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class CapacityMatrix:
    """``A[l, g]``: extra slots GPU g holds for layer l."""

    A: np.ndarray

    @property
    def column_totals(self) -> np.ndarray:
        return self.A.sum(axis=0)

    @property
    def num_layers(self) -> int:
        return self.A.shape[0]

    @property
    def num_gpus(self) -> int:
        return self.A.shape[1]


def min_cutoff(values, rank: int) -> int:
    """The ``rank``-th smallest entry of ``values`` (1-based, duplicates counted)."""
    values = sorted(int(v) for v in values)
    if not 1 <= rank <= len(values):
        raise ValueError(f"rank {rank} out of range for {len(values)} values")
    return values[rank - 1]


def interleave_select(indices, k: int) -> list:
    """Pick ``k`` entries of ``indices`` spread as evenly as possible.

    For ``k > 1`` both endpoints are included and position ``i`` is
    ``round(i * (n - 1) / (k - 1))`` with halves rounded up.
    """
    indices = list(indices)
    n = len(indices)
    if not 1 <= k <= n:
        raise ValueError(f"cannot select {k} of {n} indices")
    if k == 1:
        return [indices[0]]
    picked = []
    used = set()
    for i in range(k):
        pos = (2 * i * (n - 1) + (k - 1)) // (2 * (k - 1))
        while pos in used:
            pos += 1
        used.add(pos)
        picked.append(indices[pos])
    return picked


def assign_capacities(num_layers: int, num_gpus: int, replicas, node_of=None) -> CapacityMatrix:
    """Spread each layer's replicas over GPUs so per-layer and per-GPU slot counts
    differ by at most one.

    Every GPU first gets ``replicas[l] // D`` slots.  Remainders are handled
    layer by layer: GPUs whose running total is below the remainder-th smallest
    total always get a slot, and the rest are picked among the GPUs tied at that
    cutoff with :func:`interleave_select` (id order).

    ``node_of`` is accepted for interface symmetry but not read: node spreading
    follows from GPUs of a node having contiguous ids.
    """
    replicas = [int(v) for v in replicas]
    if len(replicas) != num_layers:
        raise ValueError(f"got {len(replicas)} replica counts for {num_layers} layers")
    if num_gpus < 1:
        raise ValueError("need at least one GPU")
    if any(v < 0 for v in replicas):
        raise ValueError("replica counts must be non-negative")

    A = np.zeros((num_layers, num_gpus), dtype=np.int64)
    for l, v in enumerate(replicas):
        A[l, :] = v // num_gpus
    totals = A.sum(axis=0)
    for l, v in enumerate(replicas):
        rem = v % num_gpus
        if rem == 0:
            continue
        cutoff = min_cutoff(totals, rem)
        below = [g for g in range(num_gpus) if totals[g] < cutoff]
        need = rem - len(below)
        chosen = below
        if need > 0:
            tied = [g for g in range(num_gpus) if totals[g] == cutoff]
            chosen = below + interleave_select(tied, need)
        for g in chosen:
            A[l, g] += 1
            totals[g] += 1
    A.setflags(write=False)
    return CapacityMatrix(A)
