"""Cost-aware expert replica allocation for Mixture-of-Experts inference."""

__version__ = "0.1.0"

from .trace import LoadTrace, LayerLoadMatrix, generate_zipfian, aggregate, load_trace, save_trace
from .metrics import balancedness, gpu_loads, evaluate_plan, replay, BalancednessReport
from .placement import LayerPlacement, replicate_hot, greedy_place, PlacementInfeasibleError
from .benefit import BenefitMatrix, candidate_counts, estimate_benefits
from .allocator import AllocationVector, solve_allocation, auto_replication_factor
from .assignment import CapacityMatrix, assign_capacities, min_cutoff, interleave_select
from .plan import (
    ReplicationPlan,
    PlanComparison,
    SweepResult,
    build_plan,
    uniform_plan,
    placement_only_plan,
    plan_from_allocation,
    validate_plan,
    compare_plans,
    sweep,
    load_plan,
    save_plan,
)
