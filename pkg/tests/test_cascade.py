import pytest

from roadrank.cascade import CascadeTrace, FailureSimConfig, ground_truth_table, importance_score, simulate_cascade
from roadrank.network import generate_random_dataset


def test_config_invariants():
    with pytest.raises(ValueError):
        FailureSimConfig(gamma=0.0)
    with pytest.raises(ValueError):
        FailureSimConfig(speed_factor=1.0)
    with pytest.raises(ValueError):
        FailureSimConfig(horizon_T=0)


def test_trace_disjointness_enforced():
    with pytest.raises(ValueError):
        CascadeTrace("s", (1, 1), (frozenset({"a"}), frozenset({"a"})))


def test_upstream_propagation_on_demo(demo_bundle):
    # blocking the 250-vehicle branch overloads its upstream neighbors one hop
    # per step: first v10, then v09 (which carries both 500-OD paths)
    trace = simulate_cascade(demo_bundle, "v11", FailureSimConfig())
    assert trace.failed_set_per_step[0] == frozenset({"v10"})
    assert trace.failed_set_per_step[1] == frozenset({"v09"})
    assert "v11" not in {s for group in trace.failed_set_per_step for s in group}


def test_demo_cascade_does_not_cross_od_components(demo_bundle):
    trace = simulate_cascade(demo_bundle, "v11", FailureSimConfig())
    touched = {s for group in trace.failed_set_per_step for s in group}
    assert touched <= {"v05", "v06", "v07", "v08", "v09", "v10"}


def test_segment_on_no_path_has_empty_cascade():
    bundle = generate_random_dataset(12, 1, 1, seed=4)
    on_path = {s for p in bundle.paths for s in p.segments}
    off = sorted(set(bundle.network.segments) - on_path)[0]
    trace = simulate_cascade(bundle, off, FailureSimConfig())
    assert all(n == 0 for n in trace.failed_per_step)
    assert importance_score(trace, 0.9) == 0.0


def test_horizon_one_trace_length(demo_bundle):
    trace = simulate_cascade(demo_bundle, "v11", FailureSimConfig(horizon_T=1))
    assert len(trace.failed_per_step) == 1


def test_unknown_seed_segment(demo_bundle):
    with pytest.raises(KeyError):
        simulate_cascade(demo_bundle, "v99", FailureSimConfig())


def test_importance_score_hand_case():
    trace = CascadeTrace("s", (2, 1), (frozenset({"a", "b"}), frozenset({"c"})))
    assert importance_score(trace, 0.9) == pytest.approx(2.61, abs=1e-12)


def test_importance_score_gamma_one_counts_plainly():
    trace = CascadeTrace("s", (1, 1, 1), (frozenset({"a"}), frozenset({"b"}), frozenset({"c"})))
    assert importance_score(trace, 1.0) == 3.0


def test_importance_score_zero_trace():
    trace = CascadeTrace("s", (0,), (frozenset(),))
    assert importance_score(trace, 0.9) == 0.0


def test_gamma_monotonicity_random_traces():
    import random

    rng = random.Random(0)
    for _ in range(100):
        steps = rng.randint(1, 6)
        counts = [rng.randint(0, 3) for _ in range(steps)]
        if not any(counts):
            counts[rng.randrange(steps)] = 1
        sets, used = [], 0
        for c in counts:
            sets.append(frozenset(f"x{used + i}" for i in range(c)))
            used += c
        trace = CascadeTrace("s", tuple(counts), tuple(sets))
        lo, hi = importance_score(trace, 0.4), importance_score(trace, 0.9)
        assert lo < hi


def test_ground_truth_table_shape_and_determinism(demo_bundle):
    cfg = FailureSimConfig()
    t1 = ground_truth_table(demo_bundle, cfg)
    t2 = ground_truth_table(demo_bundle, cfg)
    assert t1 == t2
    assert set(t1) == set(demo_bundle.network.segments)
    assert all(v >= 0 for v in t1.values())


def test_demo_v09_at_least_as_important_as_v02(demo_bundle):
    table = ground_truth_table(demo_bundle, FailureSimConfig())
    assert table["v09"] >= table["v02"]
