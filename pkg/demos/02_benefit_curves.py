"""Per-layer benefit of replication, measured by replaying the trace.

Each layer gets its own curve: balancedness gain over the no-replica
placement at 1, 2, 4, ... replicas.  Skewed layers climb steeply and then
flatten; balanced layers gain nothing and can even lose a little.

Run: python3 demos/02_benefit_curves.py
"""

import numpy as np

from moe_replica import LoadTrace, estimate_benefits

rng = np.random.default_rng(1)
B, E = 32, 16
counts = rng.poisson(40, size=(B, 4, E)).astype(np.int64)
counts[:, 0, 3] += 1200                      # one very hot expert
counts[:, 1, :4] += 150                      # a few warm experts
counts[:, 2, rng.permutation(E)[:8]] += 60   # mild skew
# layer 3 stays flat

trace = LoadTrace(counts)
T = estimate_benefits(trace, num_gpus=8, num_nodes=2)

labels = ["one hot expert", "four warm experts", "mild skew", "flat"]
print("replicas:           " + "".join(f"{c:>8}" for c in T.candidates))
for label, base, row in zip(labels, T.baseline, T.gains):
    print(f"{label:<18} " + "".join(f"{g:+8.3f}" for g in row) + f"   (baseline {base:.3f})")
