"""Replay-based estimate of how much each layer gains from a given replica count."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ._parallel import ordered_map
from .metrics import batch_balancedness, share_matrix
from .placement import LayerPlacement, default_node_map, even_capacities, greedy_place, replicate_hot
from .trace import LoadTrace, aggregate


def candidate_counts(num_gpus: int) -> list[int]:
    """Powers of two below ``num_gpus``, then ``num_gpus`` itself."""
    if num_gpus < 1:
        raise ValueError(f"GPU count must be >= 1, got {num_gpus}")
    out = []
    p = 1
    while p < num_gpus:
        out.append(p)
        p *= 2
    out.append(num_gpus)
    return out


@dataclass(frozen=True, eq=False)
class BenefitMatrix:
    """Balancedness gain over placement-only, per layer and candidate replica count.

    ``gains[l, k]`` is the gain of layer ``l`` with ``candidates[k]`` replicas.
    """

    candidates: tuple[int, ...]
    gains: np.ndarray
    baseline: np.ndarray

    def __post_init__(self):
        gains = np.asarray(self.gains, dtype=np.float64)
        if gains.ndim != 2 or gains.shape[1] != len(self.candidates):
            raise ValueError(
                f"gains shape {gains.shape} does not match {len(self.candidates)} candidates"
            )
        if any(b <= a for a, b in zip(self.candidates, self.candidates[1:])):
            raise ValueError("candidates must be strictly increasing")
        if self.candidates and self.candidates[0] < 1:
            raise ValueError("candidate replica counts must be positive")
        object.__setattr__(self, "candidates", tuple(int(c) for c in self.candidates))
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "baseline", np.asarray(self.baseline, dtype=np.float64))

    @classmethod
    def from_gains(cls, candidates, gains, baseline=None):
        gains = np.asarray(gains, dtype=np.float64)
        if baseline is None:
            baseline = np.zeros(gains.shape[0])
        return cls(tuple(candidates), gains, baseline)

    @property
    def num_layers(self) -> int:
        return self.gains.shape[0]

    def gain(self, layer: int, count: int) -> float:
        if count == 0:
            return 0.0
        return float(self.gains[layer, self.candidates.index(count)])

    def to_dict(self) -> dict:
        return {
            "candidates": list(self.candidates),
            "baseline": self.baseline.tolist(),
            "gains": self.gains.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> "BenefitMatrix":
        return cls(tuple(doc["candidates"]), np.array(doc["gains"], dtype=np.float64), np.array(doc["baseline"]))


def estimation_placement(layer_loads, replicas: int, num_gpus: int, node_of) -> LayerPlacement:
    """Placement used when scoring a replica count: hot-expert replication plus
    greedy placement over ``E + replicas`` slots spread evenly (low ids first)."""
    num_experts = len(layer_loads)
    copies = replicate_hot(layer_loads, replicas, max_copies=num_gpus)
    caps = even_capacities(num_experts + replicas, num_gpus)
    return greedy_place(layer_loads, copies, caps, node_of)


def replay_layer(trace: LoadTrace, layer: int, placement: LayerPlacement) -> float:
    return float(batch_balancedness(trace.counts[:, layer, :], share_matrix(placement)).mean())


def estimate_benefits(trace: LoadTrace, num_gpus: int, num_nodes: int = 1, candidates=None) -> BenefitMatrix:
    """Replay every batch through the placement each candidate replica count
    would produce and report the gain over the zero-replica placement."""
    node_of = default_node_map(num_gpus, num_nodes)
    if candidates is None:
        candidates = candidate_counts(num_gpus)
    candidates = list(candidates)
    summed = aggregate(trace).sums
    counts = [0] + candidates

    def score(layer):
        return [
            replay_layer(trace, layer, estimation_placement(summed[layer], r, num_gpus, node_of))
            for r in counts
        ]

    scores = np.array(ordered_map(score, range(trace.num_layers)), dtype=np.float64)
    baseline = scores[:, 0]
    gains = scores[:, 1:] - baseline[:, None]
    return BenefitMatrix(tuple(candidates), gains, baseline)
