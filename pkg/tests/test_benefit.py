import numpy as np
import pytest

from moe_replica.benefit import BenefitMatrix, candidate_counts, estimate_benefits
from moe_replica.metrics import evaluate_plan
from moe_replica.plan import placement_only_plan
from moe_replica.trace import LoadTrace, generate_zipfian


@pytest.mark.parametrize(
    "D, expected",
    [(1, [1]), (2, [1, 2]), (4, [1, 2, 4]), (6, [1, 2, 4, 6]), (8, [1, 2, 4, 8]), (64, [1, 2, 4, 8, 16, 32, 64])],
)
def test_candidate_counts(D, expected):
    assert candidate_counts(D) == expected


def test_candidate_counts_rejects_zero():
    with pytest.raises(ValueError):
        candidate_counts(0)


def test_uniform_trace_gains_near_zero():
    trace = generate_zipfian(4, 64, 32, 0.0, 4096, 8, seed=1)
    T = estimate_benefits(trace, 4)
    assert np.abs(T.gains).max() < 0.05


@pytest.mark.parametrize("E, D", [(16, 4), (64, 16), (64, 4)])
def test_single_replica_capacity_skew_bound(E, D):
    # with D | E, the GPU holding the extra slot hosts E/D + 1 distinct experts,
    # at most one of them a half copy, so a constant layer cannot stay balanced
    trace = LoadTrace(np.full((4, 1, E), 10, dtype=np.int64))
    T = estimate_benefits(trace, D)
    per_gpu = E / D
    assert T.gains[0, 0] == pytest.approx(per_gpu / (per_gpu + 0.5) - 1)
    assert T.gains[0, -1] == pytest.approx(0.0)


def test_hot_layer_gains_grow(hot_trace):
    T = estimate_benefits(hot_trace, 4, candidates=[1, 2, 3, 4])
    g = T.gains[0]
    assert g[0] > 0
    assert g[0] < g[1] < g[2]
    # past three replicas the hot expert is already spread everywhere
    assert g[3] == pytest.approx(g[2], abs=1e-9)


def test_baseline_matches_placement_only_replay(toy4_trace):
    T = estimate_benefits(toy4_trace, 4)
    report = evaluate_plan(toy4_trace, placement_only_plan(toy4_trace, 4))
    np.testing.assert_allclose(T.baseline, report.plan, rtol=0, atol=1e-12)


def test_toy4_gain_shape(toy4_trace):
    T = estimate_benefits(toy4_trace, 4)
    assert T.candidates == (1, 2, 4)
    # the heavily skewed layer benefits most at every count
    assert (T.gains[2] >= T.gains[[0, 1, 3]].max(axis=0)).all()
    # the uniform layer never benefits
    assert T.gains[3].max() <= 1e-12


def test_thread_count_does_not_change_result(monkeypatch):
    trace = generate_zipfian(6, 16, 8, 1.2, 512, 2, seed=3)
    monkeypatch.setenv("MOE_REPLICA_THREADS", "1")
    one = estimate_benefits(trace, 4, 2)
    monkeypatch.setenv("MOE_REPLICA_THREADS", "4")
    four = estimate_benefits(trace, 4, 2)
    np.testing.assert_array_equal(one.gains, four.gains)
    np.testing.assert_array_equal(one.baseline, four.baseline)


def test_matrix_round_trip():
    T = BenefitMatrix.from_gains([1, 2], [[0.1, 0.2], [-0.05, 0.0]], baseline=[0.5, 0.9])
    back = BenefitMatrix.from_dict(T.to_dict())
    assert back.candidates == T.candidates
    np.testing.assert_array_equal(back.gains, T.gains)
    np.testing.assert_array_equal(back.baseline, T.baseline)
    assert back.gain(0, 0) == 0.0
    assert back.gain(1, 2) == 0.0


@pytest.mark.parametrize(
    "cands, gains",
    [([1, 2], [[0.1]]), ([2, 1], [[0.1, 0.2]]), ([0, 1], [[0.1, 0.2]])],
)
def test_matrix_validation(cands, gains):
    with pytest.raises(ValueError):
        BenefitMatrix.from_gains(cands, gains)
