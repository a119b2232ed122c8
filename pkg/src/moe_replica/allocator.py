"""Replica budget allocation: a multiple-choice knapsack DP over layers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .benefit import BenefitMatrix, candidate_counts


@dataclass(frozen=True)
class AllocationVector:
    x: tuple[int, ...]
    budget: int
    objective: float

    @property
    def total(self) -> int:
        return sum(self.x)


def solve_allocation(benefits: BenefitMatrix, budget: int, weighting: str = "none") -> AllocationVector:
    """Pick one replica count per layer (0 or a candidate) with total <= budget,
    maximizing the summed balancedness gain.

    ``weighting="replicas"`` scores a choice as ``count * gain`` instead of
    ``gain``.  That favors large per-layer counts and can leave the plan less
    balanced than a uniform split of the same budget.

    O(L * C * K) table over exact replica totals.  A state is only
    overwritten on strict improvement.  The backtrack starts from the
    cheapest total <= budget reaching the optimum.
    """
    budget = int(budget)
    if budget < 0:
        raise ValueError(f"budget must be >= 0, got {budget}")
    cands = benefits.candidates
    gains = benefits.gains
    L = benefits.num_layers
    neg_inf = -math.inf

    dp = [[neg_inf] * (budget + 1) for _ in range(L + 1)]
    choice = [[None] * (budget + 1) for _ in range(L + 1)]
    dp[0][0] = 0.0
    for layer in range(1, L + 1):
        prev, cur, pick = dp[layer - 1], dp[layer], choice[layer]
        row = gains[layer - 1]
        values = [_weight(r, weighting) * float(row[k]) for k, r in enumerate(cands)]
        for c in range(budget + 1):
            cur[c] = prev[c]
            for r, value in zip(cands, values):
                if c >= r and prev[c - r] > neg_inf:
                    cand = prev[c - r] + value
                    if cand > cur[c]:
                        cur[c] = cand
                        pick[c] = r

    # dp[L][c] is the best value with exactly c replicas used; start the
    # backtrack from the smallest c <= budget reaching the best value, so
    # layers with no positive gain never soak up spare budget
    final = dp[L]
    best_value = max(final)
    c = final.index(best_value)
    x = [0] * L
    for layer in range(L, 0, -1):
        r = choice[layer][c]
        if r is not None:
            x[layer - 1] = r
            c -= r
    return AllocationVector(tuple(x), budget, allocation_objective(benefits, x, weighting))


def _weight(count: int, weighting: str) -> int:
    if weighting == "none":
        return 1
    if weighting == "replicas":
        return count
    raise ValueError(f"unknown weighting {weighting!r} (use 'none' or 'replicas')")


def allocation_objective(benefits: BenefitMatrix, x, weighting: str = "none") -> float:
    """Summed (optionally replica-weighted) gain of ``x``, accumulated in layer order."""
    total = 0.0
    for layer, count in enumerate(x):
        if count:
            total += _weight(count, weighting) * benefits.gain(layer, count)
    return total


def auto_replication_factor(
    benefits: BenefitMatrix,
    num_gpus: int,
    method: str = "dp",
    weighting: str = "none",
    rel_tol: float = 1e-12,
) -> int:
    """Replication factor R (replicas per GPU) with the best gain per replica.

    ``method="dp"`` scores each candidate R by the DP objective at budget
    ``R * D`` divided by ``R * D``.  ``method="uniform"`` scores each candidate
    per-layer count k by the summed gain of giving every layer k replicas,
    divided by ``k * L``, and converts the winner to ``ceil(k * L / D)``.
    Scores within ``rel_tol`` count as ties and go to the smaller R.
    """
    if benefits.num_layers == 0:
        raise ValueError("empty benefit matrix")
    if method == "dp":
        best_r, best = None, None
        for R in candidate_counts(num_gpus):
            budget = R * num_gpus
            score = solve_allocation(benefits, budget, weighting).objective / budget
            if best is None or _better(score, best, rel_tol):
                best_r, best = R, score
        return best_r
    if method == "uniform":
        L = benefits.num_layers
        best_k, best = None, None
        for k, count in enumerate(benefits.candidates):
            score = float(np.sum(benefits.gains[:, k])) / (count * L)
            if best is None or _better(score, best, rel_tol):
                best_k, best = count, score
        return max(1, math.ceil(best_k * L / num_gpus))
    raise ValueError(f"unknown method {method!r} (use 'dp' or 'uniform')")


def _better(score: float, best: float, rel_tol: float) -> bool:
    return score > best and not math.isclose(score, best, rel_tol=rel_tol, abs_tol=1e-15)
