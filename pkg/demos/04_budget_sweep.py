"""Diminishing returns: sweep the replicas-per-GPU budget and watch the
gain saturate long before every layer is fully replicated.

Run: python3 demos/04_budget_sweep.py
"""

from moe_replica import generate_zipfian, sweep

trace = generate_zipfian(16, 64, 64, 1.2, 4096, 8, seed=0)
result = sweep(trace, num_gpus=16, num_nodes=4, budgets=[0, 1, 2, 4, 8, 16, 32])

print("replicas/GPU  used  objective  balancedness")
for R, used, obj, agg in zip(result.budgets, result.total_replicas, result.objectives, result.aggregate):
    bar = "#" * int(agg * 40)
    print(f"{R:>12}  {used:>4}  {obj:9.3f}  {agg:.3f} {bar}")
