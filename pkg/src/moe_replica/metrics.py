"""Per-GPU load replay and the balancedness metric (mean load / max load)."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .placement import LayerPlacement


class InvalidPlanError(ValueError):
    pass


def gpu_loads(slice_counts, layer_plan: LayerPlacement, num_gpus: int | None = None) -> np.ndarray:
    """Per-GPU load of one layer for one batch.

    Each expert's tokens are split evenly (real division) over its copies.
    """
    counts = np.asarray(slice_counts, dtype=np.float64).ravel()
    if num_gpus is None:
        num_gpus = layer_plan.num_gpus
    if len(counts) != layer_plan.num_experts:
        raise InvalidPlanError(
            f"slice has {len(counts)} experts, plan has {layer_plan.num_experts}"
        )
    if len(layer_plan.slots) != num_gpus:
        raise InvalidPlanError(f"plan covers {len(layer_plan.slots)} GPUs, expected {num_gpus}")
    hosted = np.zeros(layer_plan.num_experts, dtype=np.int64)
    for hosted_here in layer_plan.slots:
        for e in hosted_here:
            hosted[e] += 1
    missing = np.flatnonzero(hosted == 0)
    if missing.size:
        raise InvalidPlanError(f"expert {int(missing[0])} has zero copies")
    loads = np.zeros(num_gpus)
    for g, hosted_here in enumerate(layer_plan.slots):
        for e in hosted_here:
            loads[g] += counts[e] / hosted[e]
    return loads


def balancedness(loads) -> float:
    """``mean(loads) / max(loads)``; an all-zero vector counts as perfectly balanced."""
    loads = np.asarray(loads, dtype=np.float64)
    if loads.size == 0:
        raise ValueError("empty load vector")
    if np.any(loads < 0):
        raise ValueError("loads must be non-negative")
    peak = loads.max()
    if peak == 0:
        return 1.0
    return float(loads.mean() / peak)


def batch_balancedness(slices: np.ndarray, share: np.ndarray) -> np.ndarray:
    """Balancedness of every batch slice (rows of ``slices``, shape ``B x E``)
    under an ``E x D`` share matrix."""
    loads = np.asarray(slices, dtype=np.float64) @ share
    peak = loads.max(axis=1)
    out = np.ones(len(loads))
    nz = peak > 0
    out[nz] = loads[nz].mean(axis=1) / peak[nz]
    return out


def layer_balancedness(slices: np.ndarray, placement: LayerPlacement) -> float:
    """Batch-averaged balancedness of one layer (mean of per-batch values)."""
    share = share_matrix(placement)
    return float(batch_balancedness(slices, share).mean())


def share_matrix(placement: LayerPlacement) -> np.ndarray:
    hosted = np.zeros(placement.num_experts, dtype=np.int64)
    for hosted_here in placement.slots:
        for e in hosted_here:
            hosted[e] += 1
    missing = np.flatnonzero(hosted == 0)
    if missing.size:
        raise InvalidPlanError(f"expert {int(missing[0])} has zero copies")
    share = np.zeros((placement.num_experts, placement.num_gpus))
    for g, hosted_here in enumerate(placement.slots):
        for e in hosted_here:
            share[e, g] += 1.0 / hosted[e]
    return share


@dataclass(frozen=True)
class BalancednessReport:
    baseline: np.ndarray
    plan: np.ndarray

    @property
    def gain(self) -> np.ndarray:
        return self.plan - self.baseline

    @property
    def num_layers(self) -> int:
        return len(self.plan)

    @property
    def aggregate(self) -> float:
        return float(np.mean(self.plan))

    @property
    def aggregate_baseline(self) -> float:
        return float(np.mean(self.baseline))

    @property
    def aggregate_gain(self) -> float:
        return self.aggregate - self.aggregate_baseline

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["layer", "baseline", "plan", "gain"])
        for layer, (b, p, g) in enumerate(zip(self.baseline, self.plan, self.gain)):
            writer.writerow([layer, repr(float(b)), repr(float(p)), repr(float(g))])
        writer.writerow(
            ["aggregate", repr(self.aggregate_baseline), repr(self.aggregate), repr(self.aggregate_gain)]
        )
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "per_layer": [
                {"layer": l, "baseline": float(b), "plan": float(p), "gain": float(g)}
                for l, (b, p, g) in enumerate(zip(self.baseline, self.plan, self.gain))
            ],
            "aggregate": {
                "baseline": self.aggregate_baseline,
                "plan": self.aggregate,
                "gain": self.aggregate_gain,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def replay(trace, plan) -> np.ndarray:
    """Per-layer batch-averaged balancedness of ``plan`` on ``trace``."""
    if (trace.num_layers, trace.num_experts) != (plan.num_layers, plan.num_experts):
        raise ValueError(
            f"plan is for L={plan.num_layers}, E={plan.num_experts}; "
            f"trace has L={trace.num_layers}, E={trace.num_experts}"
        )
    return np.array(
        [
            layer_balancedness(trace.counts[:, l, :], plan.layers[l])
            for l in range(trace.num_layers)
        ]
    )


def evaluate_plan(trace, plan, baseline_plan=None) -> BalancednessReport:
    """Replay ``trace`` through ``plan`` and report per-layer balancedness next to
    a placement-only baseline (built from the same trace unless given)."""
    if baseline_plan is None:
        from .plan import placement_only_plan

        baseline_plan = placement_only_plan(trace, plan.num_gpus, plan.num_nodes)
    return BalancednessReport(baseline=replay(trace, baseline_plan), plan=replay(trace, plan))
