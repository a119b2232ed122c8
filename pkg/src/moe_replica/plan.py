"""End-to-end planner, baseline plans, validation and the plan file format."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from ._parallel import ordered_map
from .allocator import AllocationVector, auto_replication_factor, solve_allocation
from .assignment import assign_capacities
from .benefit import BenefitMatrix, estimate_benefits
from .metrics import BalancednessReport, replay
from .placement import LayerPlacement, PlacementInfeasibleError, default_node_map, greedy_place, replicate_hot
from .trace import LoadTrace, aggregate

PLAN_FORMAT_VERSION = 1


class PlanFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ReplicationPlan:
    """Deployable mapping of every expert copy to a GPU, for every layer."""

    num_gpus: int
    num_nodes: int
    num_layers: int
    num_experts: int
    replication_factor: int
    allocation: tuple[int, ...]
    layers: tuple[LayerPlacement, ...]
    provenance: dict = field(default_factory=dict, compare=False)

    @property
    def total_replicas(self) -> int:
        return sum(self.allocation)

    @property
    def reserved_replica_slots(self) -> int:
        return self.replication_factor * self.num_gpus

    def slots_per_gpu(self) -> np.ndarray:
        return np.array(
            [sum(len(layer.slots[g]) for layer in self.layers) for g in range(self.num_gpus)],
            dtype=np.int64,
        )

    def unused_replica_slots(self) -> list[int]:
        """Per-GPU reserved replica slots the allocation left empty."""
        L, E, D = self.num_layers, self.num_experts, self.num_gpus
        base = base_capacities(L, E, D).sum(axis=0)
        total = layer_capacities(L, E, D, self.allocation).sum(axis=0)
        return [int(max(self.replication_factor - (t - b), 0)) for t, b in zip(total, base)]

    @property
    def fallback_layers(self) -> list[int]:
        return [l for l, layer in enumerate(self.layers) if layer.fallback]

    def to_dict(self) -> dict:
        return {
            "version": PLAN_FORMAT_VERSION,
            "gpus": self.num_gpus,
            "nodes": self.num_nodes,
            "layers": self.num_layers,
            "experts": self.num_experts,
            "replication_factor": self.replication_factor,
            "allocation": [int(v) for v in self.allocation],
            "layer_placements": [
                {
                    "copy_counts": [int(c) for c in layer.copy_counts],
                    "slots": [[int(e) for e in gpu] for gpu in layer.slots],
                }
                for layer in self.layers
            ],
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "ReplicationPlan":
        try:
            if doc["version"] != PLAN_FORMAT_VERSION:
                raise PlanFormatError(f"unsupported plan version {doc['version']!r}")
            provenance = dict(doc.get("provenance") or {})
            fallback = set(provenance.get("fallback_layers", []))
            layers = tuple(
                LayerPlacement(
                    tuple(int(c) for c in lp["copy_counts"]),
                    tuple(tuple(int(e) for e in gpu) for gpu in lp["slots"]),
                    fallback=l in fallback,
                )
                for l, lp in enumerate(doc["layer_placements"])
            )
            return cls(
                num_gpus=int(doc["gpus"]),
                num_nodes=int(doc["nodes"]),
                num_layers=int(doc["layers"]),
                num_experts=int(doc["experts"]),
                replication_factor=int(doc["replication_factor"]),
                allocation=tuple(int(v) for v in doc["allocation"]),
                layers=layers,
                provenance=provenance,
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, PlanFormatError):
                raise
            raise PlanFormatError(f"malformed plan: {exc!r}") from exc

    @classmethod
    def from_json(cls, text: str) -> "ReplicationPlan":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise PlanFormatError(f"plan is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise PlanFormatError("plan must be a JSON object")
        return cls.from_dict(doc)


def save_plan(plan: ReplicationPlan, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(plan.to_json())


def load_plan(path) -> ReplicationPlan:
    with open(path, encoding="utf-8") as fh:
        return ReplicationPlan.from_json(fh.read())


def base_capacities(num_layers: int, num_experts: int, num_gpus: int) -> np.ndarray:
    """Slots for the logical experts themselves: ``E`` per layer spread with the
    same balanced interleaving as replicas, so per-GPU totals stay within one."""
    return assign_capacities(num_layers, num_gpus, [num_experts] * num_layers).A


def layer_capacities(num_layers, num_experts, num_gpus, allocation) -> np.ndarray:
    """Per-layer, per-GPU slot counts for ``E + x[l]`` copies.

    Expert and replica slots are balanced together, so every row stays within
    one of even and per-GPU totals stay within one.  With ``D | E`` this equals
    the even base spread plus the replica-only assignment.
    """
    totals = [num_experts + int(x) for x in allocation]
    return assign_capacities(num_layers, num_gpus, totals).A


def plan_from_allocation(
    trace: LoadTrace,
    num_gpus: int,
    num_nodes: int,
    allocation,
    replication_factor: int,
    *,
    seed: int = 0,
    mode: str = "manual",
) -> ReplicationPlan:
    """Turn per-layer replica counts into a full plan: balanced slot
    assignment, then hot-expert replication and greedy placement per layer."""
    L, E = trace.num_layers, trace.num_experts
    allocation = tuple(int(v) for v in allocation)
    if len(allocation) != L:
        raise ValueError(f"allocation has {len(allocation)} entries for {L} layers")
    node_of = default_node_map(num_gpus, num_nodes)
    caps = layer_capacities(L, E, num_gpus, allocation)
    summed = aggregate(trace).sums

    def place(layer):
        try:
            copies = replicate_hot(summed[layer], allocation[layer], max_copies=num_gpus)
        except ValueError as exc:
            raise PlacementInfeasibleError(str(exc), layer=layer) from None
        return greedy_place(summed[layer], copies, caps[layer], node_of, layer=layer)

    layers = tuple(ordered_map(place, range(L)))
    plan = ReplicationPlan(
        num_gpus=num_gpus,
        num_nodes=num_nodes,
        num_layers=L,
        num_experts=E,
        replication_factor=int(replication_factor),
        allocation=allocation,
        layers=layers,
    )
    provenance = {
        "trace_sha256": trace.digest(),
        "planner_version": __version__,
        "seed": int(seed),
        "mode": mode,
        "unused_replica_slots": plan.unused_replica_slots(),
        "fallback_layers": plan.fallback_layers,
    }
    return replace(plan, provenance=provenance)


def build_plan(
    trace: LoadTrace,
    num_gpus: int,
    num_nodes: int = 1,
    replication_factor: int | None = None,
    *,
    auto_method: str = "dp",
    weighting: str = "none",
    benefits: BenefitMatrix | None = None,
    seed: int = 0,
) -> ReplicationPlan:
    """Full pipeline: estimate benefits, choose R (given, or automatic when
    ``replication_factor`` is None), solve the allocation at budget ``R * D``,
    assign capacities and place experts."""
    if num_nodes < 1 or num_gpus % num_nodes:
        raise ValueError(f"GPU count {num_gpus} is not divisible by node count {num_nodes}")
    if benefits is None:
        benefits = estimate_benefits(trace, num_gpus, num_nodes)
    if replication_factor is None:
        replication_factor = auto_replication_factor(benefits, num_gpus, method=auto_method, weighting=weighting)
        mode = f"auto-{auto_method}"
    else:
        mode = "manual"
    if replication_factor < 0:
        raise ValueError(f"replication factor must be >= 0, got {replication_factor}")
    alloc = solve_allocation(benefits, replication_factor * num_gpus, weighting)
    return plan_from_allocation(
        trace, num_gpus, num_nodes, alloc.x, replication_factor, seed=seed, mode=mode
    )


def uniform_plan(trace: LoadTrace, num_gpus: int, num_nodes: int = 1, *, seed: int = 0) -> ReplicationPlan:
    """Uniform baseline: one replica per layer per GPU (R = L)."""
    L = trace.num_layers
    return plan_from_allocation(
        trace, num_gpus, num_nodes, [num_gpus] * L, L, seed=seed, mode="uniform"
    )


def placement_only_plan(trace: LoadTrace, num_gpus: int, num_nodes: int = 1, *, seed: int = 0) -> ReplicationPlan:
    """Greedy placement of the logical experts with no replicas."""
    return plan_from_allocation(
        trace, num_gpus, num_nodes, [0] * trace.num_layers, 0, seed=seed, mode="placement-only"
    )


def validate_plan(plan: ReplicationPlan) -> list[dict]:
    """Check a plan's structural invariants.  Returns violation records
    (``{"kind", "layer", "gpu", "detail"}``); an empty list means valid."""
    out = []

    def bad(kind, detail, layer=None, gpu=None):
        out.append({"kind": kind, "layer": layer, "gpu": gpu, "detail": detail})

    D, L, E = plan.num_gpus, plan.num_layers, plan.num_experts
    if min(D, L, E, plan.num_nodes) < 1:
        bad("dimension", f"non-positive dimension D={D} N={plan.num_nodes} L={L} E={E}")
        return out
    if D % plan.num_nodes:
        bad("dimension", f"GPU count {D} not divisible by node count {plan.num_nodes}")
    if len(plan.allocation) != L:
        bad("dimension", f"allocation has {len(plan.allocation)} entries, expected {L}")
        return out
    if len(plan.layers) != L:
        bad("dimension", f"{len(plan.layers)} layer placements, expected {L}")
        return out
    if any(v < 0 for v in plan.allocation):
        bad("allocation", "negative replica count")
        return out
    if plan.replication_factor < 0:
        bad("budget", "negative replication factor")
    if plan.total_replicas > plan.replication_factor * D:
        bad(
            "budget",
            f"allocation uses {plan.total_replicas} replicas, budget R*D = {plan.replication_factor * D}",
        )

    caps = layer_capacities(L, E, D, plan.allocation)
    fallback = set(plan.provenance.get("fallback_layers", [])) | set(plan.fallback_layers)
    for l, layer in enumerate(plan.layers):
        if len(layer.copy_counts) != E:
            bad("dimension", f"{len(layer.copy_counts)} copy counts, expected {E}", layer=l)
            continue
        if len(layer.slots) != D:
            bad("dimension", f"slots for {len(layer.slots)} GPUs, expected {D}", layer=l)
            continue
        if any(c < 1 for c in layer.copy_counts):
            bad("copy_counts", "expert with fewer than one copy", layer=l)
        if sum(layer.copy_counts) != E + plan.allocation[l]:
            bad(
                "copy_counts",
                f"copy counts sum to {sum(layer.copy_counts)}, expected E + x = {E + plan.allocation[l]}",
                layer=l,
            )
        seen = [0] * E
        for g, hosted in enumerate(layer.slots):
            if len(hosted) != caps[l][g]:
                bad("capacity", f"{len(hosted)} slots, prescribed {caps[l][g]}", layer=l, gpu=g)
            for e in hosted:
                if not 0 <= e < E:
                    bad("expert_id", f"unknown expert id {e}", layer=l, gpu=g)
                    continue
                seen[e] += 1
            if len(set(hosted)) != len(hosted) and l not in fallback:
                bad("duplicate", "GPU hosts two copies of one expert", layer=l, gpu=g)
        for e in range(E):
            if seen[e] == 0:
                bad("missing_expert", f"missing logical expert {e}", layer=l)
            elif seen[e] != layer.copy_counts[e]:
                bad(
                    "copy_mismatch",
                    f"expert {e} placed {seen[e]} times, copy_counts says {layer.copy_counts[e]}",
                    layer=l,
                )

    per_gpu = plan.slots_per_gpu()
    limit = L * math.ceil(E / D) + plan.replication_factor
    for g in np.flatnonzero(per_gpu > limit):
        bad("memory", f"{per_gpu[g]} slots exceeds L*ceil(E/D)+R = {limit}", gpu=int(g))
    return out


@dataclass(frozen=True)
class PlanComparison:
    first: BalancednessReport
    second: BalancednessReport
    replicas_first: int
    replicas_second: int

    @property
    def memory_ratio(self) -> float:
        """Replica slots of the first plan over those of the second."""
        if self.replicas_second == 0:
            return 1.0 if self.replicas_first == 0 else math.inf
        return self.replicas_first / self.replicas_second

    @property
    def aggregate_delta(self) -> float:
        return self.first.aggregate - self.second.aggregate

    def to_dict(self) -> dict:
        return {
            "first": {"replicas": self.replicas_first, **self.first.to_dict()},
            "second": {"replicas": self.replicas_second, **self.second.to_dict()},
            "aggregate_delta": self.aggregate_delta,
            "per_layer_delta": (self.first.plan - self.second.plan).tolist(),
            "memory_ratio": self.memory_ratio,
        }


def compare_plans(trace: LoadTrace, first: ReplicationPlan, second: ReplicationPlan) -> PlanComparison:
    if (first.num_gpus, first.num_nodes) != (second.num_gpus, second.num_nodes):
        raise ValueError("plans target different clusters")
    baseline = placement_only_plan(trace, first.num_gpus, first.num_nodes)
    base = replay(trace, baseline)
    return PlanComparison(
        BalancednessReport(base, replay(trace, first)),
        BalancednessReport(base, replay(trace, second)),
        first.total_replicas,
        second.total_replicas,
    )


@dataclass(frozen=True)
class SweepResult:
    """One row per per-GPU replication factor."""

    budgets: tuple[int, ...]
    num_gpus: int
    objectives: tuple[float, ...]
    aggregate: tuple[float, ...]
    total_replicas: tuple[int, ...]
    layer_gains: np.ndarray  # budgets x L, replayed gain over placement-only

    def to_csv(self) -> str:
        L = self.layer_gains.shape[1]
        lines = [
            ",".join(
                ["replicas_per_gpu", "budget", "total_replicas", "objective", "aggregate"]
                + [f"gain_layer{l}" for l in range(L)]
            )
        ]
        for i, R in enumerate(self.budgets):
            row = [str(R), str(self.budget_of(i)), str(self.total_replicas[i]),
                   repr(self.objectives[i]), repr(self.aggregate[i])]
            row += [repr(float(v)) for v in self.layer_gains[i]]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"

    def budget_of(self, i: int) -> int:
        return self.budgets[i] * self.num_gpus

    def to_dict(self) -> dict:
        return {
            "replicas_per_gpu": list(self.budgets),
            "budget": [self.budget_of(i) for i in range(len(self.budgets))],
            "total_replicas": list(self.total_replicas),
            "objective": list(self.objectives),
            "aggregate": list(self.aggregate),
            "layer_gains": self.layer_gains.tolist(),
        }


def sweep(
    trace: LoadTrace,
    num_gpus: int,
    num_nodes: int,
    budgets,
    benefits: BenefitMatrix | None = None,
    weighting: str = "none",
) -> SweepResult:
    """Plan and replay at each per-GPU replication factor in ``budgets``."""
    budgets = sorted(set(int(b) for b in budgets))
    if not budgets or budgets[0] < 0:
        raise ValueError("budgets must be non-negative replication factors")
    if benefits is None:
        benefits = estimate_benefits(trace, num_gpus, num_nodes)
    baseline = replay(trace, placement_only_plan(trace, num_gpus, num_nodes))
    objectives, agg, totals, gains = [], [], [], []
    for R in budgets:
        alloc: AllocationVector = solve_allocation(benefits, R * num_gpus, weighting)
        plan = plan_from_allocation(trace, num_gpus, num_nodes, alloc.x, R)
        bal = replay(trace, plan)
        objectives.append(alloc.objective)
        agg.append(float(bal.mean()))
        totals.append(plan.total_replicas)
        gains.append(bal - baseline)
    return SweepResult(
        tuple(budgets), num_gpus, tuple(objectives), tuple(agg), tuple(totals), np.array(gains)
    )
