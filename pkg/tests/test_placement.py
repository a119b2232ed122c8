from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from moe_replica.benefit import estimation_placement
from moe_replica.metrics import balancedness, gpu_loads, layer_balancedness
from moe_replica.placement import (
    PlacementInfeasibleError,
    default_node_map,
    even_capacities,
    greedy_place,
    replicate_hot,
)


def naive_replicate(loads, r, cap=None):
    copies = [1] * len(loads)
    for _ in range(r):
        eligible = [e for e in range(len(loads)) if cap is None or copies[e] < cap]
        best = max(eligible, key=lambda e: (Fraction(loads[e], copies[e]), -e))
        copies[best] += 1
    return copies


def test_replicate_hot_examples():
    assert replicate_hot([60, 1, 1, 1], 2) == [3, 1, 1, 1]
    assert replicate_hot([5] * 6, 6) == [2] * 6
    assert replicate_hot([9, 3, 1], 0) == [1, 1, 1]


@settings(max_examples=200, deadline=None)
@given(
    loads=st.lists(st.integers(0, 1000), min_size=1, max_size=10),
    r=st.integers(0, 20),
    cap=st.one_of(st.none(), st.integers(1, 6)),
)
def test_replicate_hot_matches_naive(loads, r, cap):
    if cap is not None and len(loads) * cap < len(loads) + r:
        with pytest.raises(ValueError):
            replicate_hot(loads, r, max_copies=cap)
        return
    assert replicate_hot(loads, r, max_copies=cap) == naive_replicate(loads, r, cap)


def test_copy_cap_moves_extra_replica_to_next_expert():
    assert replicate_hot([60, 1, 1, 1, 1, 1, 1, 1], 4, max_copies=4) == [4, 2, 1, 1, 1, 1, 1, 1]


def test_skewed_layer_hot_expert_shares_gpu_with_lightest():
    loads = [1, 9, 1, 1, 1, 1, 1, 1]
    plan = greedy_place(loads, [1] * 8, [2, 2, 2, 2])
    host = [g for g, s in enumerate(plan.slots) if 1 in s][0]
    partner = [e for e in plan.slots[host] if e != 1]
    assert len(partner) == 1 and loads[partner[0]] == 1
    assert balancedness(gpu_loads(loads, plan)) == pytest.approx((16 / 4) / 10)


def test_equal_loads_balance_perfectly():
    plan = greedy_place([3] * 8, [1] * 8, [2] * 4)
    assert balancedness(gpu_loads([3] * 8, plan)) == 1.0


def test_one_slot_per_gpu_is_descending_bijection():
    loads = [4, 9, 1, 7]
    plan = greedy_place(loads, [1] * 4, [1] * 4)
    # heaviest copy goes first to GPU 0, next to GPU 1, ...
    assert [s[0] for s in plan.slots] == [1, 3, 0, 2]


def test_node_breaks_ties_between_equal_gpus():
    # GPU 0 and GPU 2 both empty after the first copy lands on GPU 0... with two
    # nodes the second copy avoids node 0.
    node_of = default_node_map(4, 2)
    plan = greedy_place([5, 5, 0, 0], [1] * 4, [1] * 4, node_of)
    assert plan.slots[0] == (0,)
    assert plan.slots[2] == (1,)


def test_capacity_total_must_match():
    with pytest.raises(ValueError):
        greedy_place([1, 1], [1, 1], [1, 2])


def test_fallback_when_distinct_placement_impossible():
    # expert 0 has 3 copies but only 2 GPUs have room
    plan = greedy_place([9, 1], [3, 1], [2, 2, 0])
    assert plan.fallback
    with pytest.raises(PlacementInfeasibleError, match="layer 3"):
        greedy_place([9, 1], [3, 1], [2, 2, 0], layer=3, allow_fallback=False)


@settings(max_examples=150, deadline=None)
@given(
    loads=st.lists(st.integers(0, 500), min_size=1, max_size=16),
    num_gpus=st.integers(1, 8),
    r=st.integers(0, 16),
)
def test_slot_exactness_and_distinctness(loads, num_gpus, r):
    E = len(loads)
    assume(E + r <= E * num_gpus)
    copies = replicate_hot(loads, r, max_copies=num_gpus)
    caps = even_capacities(E + r, num_gpus)
    plan = greedy_place(loads, copies, caps)
    assert [len(s) for s in plan.slots] == caps
    for e in range(E):
        assert sum(s.count(e) for s in plan.slots) == copies[e]
    if not plan.fallback:
        assert all(len(set(s)) == len(s) for s in plan.slots)


@settings(max_examples=100, deadline=None)
@given(
    cold=st.lists(st.integers(0, 20), min_size=11, max_size=40),
    extra=st.integers(1, 500),
    num_gpus=st.sampled_from([2, 4, 8]),
)
def test_replication_helps_high_skew_layers(cold, extra, num_gpus):
    # max > 10x mean needs more than 10 experts; pick the hot load to cross it
    E = len(cold) + 1
    hot = 10 * sum(cold) // (E - 10) + extra
    loads = np.array([hot] + cold)
    assert loads.max() > 10 * loads.mean()
    slices = loads[None, :]
    node_of = [0] * num_gpus
    without = layer_balancedness(slices, estimation_placement(loads, 0, num_gpus, node_of))
    with_r = layer_balancedness(slices, estimation_placement(loads, num_gpus, num_gpus, node_of))
    assert with_r >= without


def test_equal_load_ties_prefer_free_slots():
    # first copy lands on the GPU with the most room, not on GPU 0
    placed = greedy_place([4, 4, 4, 4, 4], [1] * 5, [2, 3])
    assert placed.slots[1][0] == 0
    assert sorted(len(s) for s in placed.slots) == [2, 3]


def test_lookahead_keeps_replicas_on_distinct_gpus():
    # the two half copies of expert 0 are the lightest items; without
    # lookahead both would be left for the GPU with the extra slot
    placed = greedy_place([2, 2, 2, 2, 2], [2, 1, 1, 1, 1], [4, 2], allow_fallback=False)
    assert not placed.fallback
    assert all(len(set(s)) == len(s) for s in placed.slots)
