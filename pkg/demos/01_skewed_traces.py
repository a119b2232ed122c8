"""How skewed is a Zipfian routing trace, and what does that do to a
placement with no replicas?

Run: python3 demos/01_skewed_traces.py
"""

import numpy as np

from moe_replica import generate_zipfian, placement_only_plan, replay
from moe_replica.trace import aggregate

GPUS = 8

for s in (0.0, 0.6, 1.2, 1.8):
    trace = generate_zipfian(num_layers=8, num_experts=64, num_batches=32, s=s,
                             tokens_per_batch=2048, topk=8, seed=0)
    sums = aggregate(trace).sums
    hot_ratio = (sums.max(axis=1) / sums.mean(axis=1)).mean()
    bal = replay(trace, placement_only_plan(trace, GPUS)).mean()
    print(f"s={s:.1f}  hottest expert / mean = {hot_ratio:5.1f}x   "
          f"balancedness without replicas = {bal:.3f}")

print()
print("Balancedness is mean GPU load over max GPU load, averaged over batches.")
print("Once one expert carries many times the average load, no arrangement of")
print("single copies can hide it: the GPU holding it sets the pace.")
