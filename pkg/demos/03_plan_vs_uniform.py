"""Spend the same replica budget two ways.

The uniform approach gives every layer the same count.  The planner instead
solves a small knapsack over the measured benefit curves, so the slots go
where they help.

Run: python3 demos/03_plan_vs_uniform.py
"""

from moe_replica import build_plan, compare_plans, generate_zipfian, plan_from_allocation, replay

L, E, D, N = 16, 64, 16, 4
trace = generate_zipfian(L, E, 64, 1.2, 4096, 8, seed=0)

print(" R  replicas  planner  uniform   planner allocation")
for R in (1, 2, 4, 8):
    plan = build_plan(trace, D, N, R)
    per_layer = R * D // L
    uniform = plan_from_allocation(trace, D, N, [per_layer] * L, R)
    print(f"{R:>2}  {plan.total_replicas:>8}  {replay(trace, plan).mean():7.3f}  "
          f"{replay(trace, uniform).mean():7.3f}   {list(plan.allocation)}")

auto = build_plan(trace, D, N)
full = plan_from_allocation(trace, D, N, [D] * L, L)
cmp = compare_plans(trace, auto, full)
print()
print(f"automatic R (best gain per replica) = {auto.replication_factor}: balancedness {cmp.first.aggregate:.3f} "
      f"with {cmp.replicas_first} replicas")
print(f"one replica per layer per GPU: {cmp.second.aggregate:.3f} "
      f"with {cmp.replicas_second} replicas (memory ratio {cmp.memory_ratio:.3f})")
