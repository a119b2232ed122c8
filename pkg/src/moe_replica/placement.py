"""Per-layer hot-expert replication and capacity-aware greedy placement."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np


class PlacementInfeasibleError(RuntimeError):
    def __init__(self, message: str, layer: int | None = None):
        self.layer = layer
        if layer is not None:
            message = f"layer {layer}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class LayerPlacement:
    """Copies per logical expert and the ordered expert ids hosted on each GPU.

    ``fallback`` is set when the distinct-GPU constraint had to be relaxed.
    """

    copy_counts: tuple[int, ...]
    slots: tuple[tuple[int, ...], ...]
    fallback: bool = field(default=False, compare=False)

    @property
    def num_experts(self) -> int:
        return len(self.copy_counts)

    @property
    def num_gpus(self) -> int:
        return len(self.slots)

    def gpus_of(self, expert: int) -> list[int]:
        return [g for g, hosted in enumerate(self.slots) for e in hosted if e == expert]


def replicate_hot(layer_loads, r_layer: int, max_copies: int | None = None) -> list[int]:
    """Hand out ``r_layer`` extra copies, one at a time, to the expert with the
    highest per-copy load (ties: lowest expert id).

    With ``max_copies`` set (normally the GPU count), experts already at the cap
    are skipped, since more copies than GPUs cannot sit on distinct devices.
    """
    loads = [int(v) for v in np.asarray(layer_loads).ravel()]
    if r_layer < 0:
        raise ValueError(f"replica count must be >= 0, got {r_layer}")
    n = len(loads)
    if max_copies is not None and n * max_copies < n + r_layer:
        raise ValueError(
            f"{r_layer} replicas exceed the {n * (max_copies - 1)} possible "
            f"with at most {max_copies} copies per expert"
        )
    copies = [1] * n
    # max-heap on per-copy load; comparing load*other_copies avoids float ties
    heap = [_HeapKey(loads[e], 1, e) for e in range(n)]
    heapq.heapify(heap)
    for _ in range(r_layer):
        while True:
            top = heapq.heappop(heap)
            if max_copies is None or copies[top.expert] < max_copies:
                break
        copies[top.expert] += 1
        heapq.heappush(heap, _HeapKey(loads[top.expert], copies[top.expert], top.expert))
    return copies


class _HeapKey:
    __slots__ = ("load", "copies", "expert")

    def __init__(self, load, copies, expert):
        self.load, self.copies, self.expert = load, copies, expert

    def __lt__(self, other):
        # "smaller" = higher per-copy load, then lower id
        lhs = self.load * other.copies
        rhs = other.load * self.copies
        if lhs != rhs:
            return lhs > rhs
        return self.expert < other.expert


def greedy_place(
    layer_loads,
    copy_counts,
    capacities,
    node_of=None,
    *,
    layer: int | None = None,
    allow_fallback: bool = True,
) -> LayerPlacement:
    """Place every physical copy on a GPU, heaviest copy first.

    Copies carry ``load[e] / copy_counts[e]`` and are visited in descending
    per-copy load (ties: lower expert id, then lower copy index).  Each goes to
    the least-loaded GPU that still has a free slot and does not already host
    the same logical expert; ties go to the GPU with the most free slots, then
    the least-loaded node, then the lowest GPU id.  Preferring free slots keeps
    the outcome tied to the shape of ``capacities`` rather than to which GPU
    ids carry the extra slots.  A GPU is skipped when taking the copy would
    leave some replicated expert without enough distinct GPUs for its
    remaining copies.  If that rule dead-ends, the layer is re-placed allowing same-GPU
    duplicates and the result is flagged with ``fallback=True``.
    """
    loads = np.asarray(layer_loads, dtype=np.float64).ravel()
    copy_counts = [int(c) for c in copy_counts]
    capacities = [int(c) for c in capacities]
    num_gpus = len(capacities)
    if len(copy_counts) != len(loads):
        raise ValueError("copy_counts and layer_loads differ in length")
    if any(c < 1 for c in copy_counts):
        raise ValueError("every expert needs at least one copy")
    if any(c < 0 for c in capacities):
        raise ValueError("capacities must be non-negative")
    if sum(capacities) != sum(copy_counts):
        raise ValueError(
            f"capacity total {sum(capacities)} != copy total {sum(copy_counts)}"
        )
    if node_of is None:
        node_of = [0] * num_gpus
    node_of = [int(n) for n in node_of]
    if len(node_of) != num_gpus:
        raise ValueError("node_of must give a node for every GPU")

    copies = []
    for e, c in enumerate(copy_counts):
        per_copy = loads[e] / c
        copies.extend((per_copy, e, i) for i in range(c))
    copies.sort(key=lambda t: (-t[0], t[1], t[2]))

    try:
        slots = _assign(copies, capacities, node_of, distinct=True)
        fallback = False
    except PlacementInfeasibleError:
        if not allow_fallback:
            raise PlacementInfeasibleError(
                "copies cannot be spread over distinct GPUs", layer=layer
            ) from None
        slots = _assign(copies, capacities, node_of, distinct=False)
        fallback = True
    return LayerPlacement(
        tuple(copy_counts), tuple(tuple(s) for s in slots), fallback=fallback
    )


def _assign(copies, capacities, node_of, distinct):
    num_gpus = len(capacities)
    num_nodes = max(node_of) + 1
    gpu_load = [0.0] * num_gpus
    node_load = [0.0] * num_nodes
    slots = [[] for _ in range(num_gpus)]
    hosted = [set() for _ in range(num_gpus)]
    # copies still to place, per replicated expert
    pending = {}
    for _, e, _ in copies:
        pending[e] = pending.get(e, 0) + 1
    pending = {e: n for e, n in pending.items() if n > 1}

    def leaves_room(g, e):
        # after putting e on g, can every replicated expert still find
        # enough distinct GPUs with a free slot?
        for other, need in pending.items():
            if other == e:
                need -= 1
            if need == 0:
                continue
            room = 0
            for h in range(num_gpus):
                free = capacities[h] - len(slots[h]) - (h == g)
                if free > 0 and other not in hosted[h] and not (h == g and other == e):
                    room += 1
            if room < need:
                return False
        return True

    for per_copy, e, _ in copies:
        candidates = []
        for g in range(num_gpus):
            if len(slots[g]) >= capacities[g]:
                continue
            if distinct and e in hosted[g]:
                continue
            key = (gpu_load[g], len(slots[g]) - capacities[g], node_load[node_of[g]], g)
            candidates.append((key, g))
        if not candidates:
            raise PlacementInfeasibleError(f"no free GPU for a copy of expert {e}")
        candidates.sort()
        best = candidates[0][1]
        if distinct and pending:
            best = next((g for _, g in candidates if leaves_room(g, e)), best)
        slots[best].append(e)
        hosted[best].add(e)
        gpu_load[best] += per_copy
        node_load[node_of[best]] += per_copy
        if e in pending:
            pending[e] -= 1
            if pending[e] == 0:
                del pending[e]
    return slots


def even_capacities(total: int, num_gpus: int) -> list[int]:
    """``total`` slots over ``num_gpus`` GPUs, remainder on the lowest ids."""
    base, rem = divmod(total, num_gpus)
    return [base + (1 if g < rem else 0) for g in range(num_gpus)]


def default_node_map(num_gpus: int, num_nodes: int) -> list[int]:
    """Contiguous GPU-to-node mapping: GPU g lives on node ``g * N // D``."""
    if num_nodes < 1 or num_gpus % num_nodes:
        raise ValueError(f"GPU count {num_gpus} is not divisible by node count {num_nodes}")
    return [g * num_nodes // num_gpus for g in range(num_gpus)]
