import math
import random

import numpy as np
import pytest

from roadrank.metrics import (
    RankingPair,
    diff,
    emd,
    emd_distributions,
    kendall_tau,
    kendall_tau_bruteforce,
    make_pair,
    metrics_report,
    ndcg_at_k,
    positions_from_scores,
)


def pair_from_orders(ids, gt_order, pred_order):
    """Positions built from explicit orderings (first = rank 1)."""
    gt_pos = {s: i + 1 for i, s in enumerate(gt_order)}
    pred_pos = {s: i + 1 for i, s in enumerate(pred_order)}
    n = len(ids)
    return RankingPair(
        ids=tuple(ids),
        gt_positions=tuple(gt_pos[s] for s in ids),
        pred_positions=tuple(pred_pos[s] for s in ids),
        gt_scores=tuple(float(n - gt_pos[s]) for s in ids),
        pred_scores=tuple(float(n - pred_pos[s]) for s in ids),
    )


def random_pair(rng, n):
    ids = [f"s{i:03d}" for i in range(n)]
    gt = ids[:]
    pred = ids[:]
    rng.shuffle(gt)
    rng.shuffle(pred)
    return pair_from_orders(ids, gt, pred)


def test_positions_tie_break_is_lexicographic():
    # equal scores: "s10" precedes "s2" because ids compare as strings
    pos = positions_from_scores(("s2", "s10"), (1.0, 1.0))
    assert pos == (2, 1)


def test_pair_requires_permutations():
    with pytest.raises(ValueError):
        RankingPair(("a", "b"), (1, 1), (1, 2), (0.0, 0.0), (0.0, 0.0))


# ---------------------------------------------------------------------------
# ndcg


def test_ndcg_perfect_prediction():
    p = pair_from_orders("abc", list("abc"), list("abc"))
    for k in (1, 2, 3):
        assert ndcg_at_k(p, k) == 1.0


def test_ndcg_hand_case():
    p = pair_from_orders("abc", list("abc"), list("bac"))
    dcg = (2**1 - 1) / math.log2(2) + (2**2 - 1) / math.log2(3) + 0.0
    idcg = (2**2 - 1) / math.log2(2) + (2**1 - 1) / math.log2(3) + 0.0
    assert ndcg_at_k(p, 3) == pytest.approx(dcg / idcg, abs=1e-12)
    assert ndcg_at_k(p, 3) == pytest.approx(0.7967, abs=1e-4)


def test_ndcg_single_item():
    p = pair_from_orders("a", ["a"], ["a"])
    assert ndcg_at_k(p, 1) == 1.0


def test_ndcg_k_range():
    p = pair_from_orders("abc", list("abc"), list("abc"))
    with pytest.raises(ValueError):
        ndcg_at_k(p, 0)
    with pytest.raises(ValueError):
        ndcg_at_k(p, 4)


# ---------------------------------------------------------------------------
# emd


def test_emd_identical_distributions():
    assert emd_distributions([0.2, 0.3, 0.5], [0.2, 0.3, 0.5]) == 0.0


def test_emd_two_point_swap():
    assert emd_distributions([1.0, 0.0], [0.0, 1.0]) == 1.0


def test_emd_cumulative_case():
    assert emd_distributions([0.5, 0.5, 0.0], [0.0, 0.5, 0.5]) == pytest.approx(1.0)


def test_emd_axioms_on_random_triples():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(2, 8))
        p, q, r = (rng.dirichlet(np.ones(n)) for _ in range(3))
        dpq, dqp = emd_distributions(p, q), emd_distributions(q, p)
        assert dpq == pytest.approx(dqp, abs=1e-12)  # symmetry
        assert emd_distributions(p, p) == 0.0  # identity
        assert dpq <= emd_distributions(p, r) + emd_distributions(r, q) + 1e-12  # triangle
        if dpq < 1e-15:
            assert np.abs(np.asarray(p) - np.asarray(q)).max() < 1e-12


def test_emd_pair_uses_id_ordered_support():
    p = make_pair(["b", "a"], [1.0, 2.0], [1.0, 2.0])
    assert emd(p) == 0.0
    q = make_pair(["b", "a"], [1.0, 2.0], [2.0, 1.0])
    assert emd(q) > 0.0


def test_emd_handles_dead_end_sentinels():
    p = make_pair(["a", "b", "c"], [3.0, 1.0, 0.0], [0.5, float("-inf"), float("-inf")])
    assert math.isfinite(emd(p))


# ---------------------------------------------------------------------------
# diff


def test_diff_zero_for_equal_orders():
    p = pair_from_orders("abcd", list("abcd"), list("abcd"))
    assert diff(p) == 0.0


def test_diff_adjacent_swap():
    p = pair_from_orders("abcd", list("abcd"), list("bacd"))
    assert diff(p) == pytest.approx(0.25)


def test_diff_full_reversal():
    p = pair_from_orders("abcd", list("abcd"), list("dcba"))
    assert diff(p) == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# kendall tau


def test_tau_identity_and_reversal():
    rng = random.Random(0)
    for n in (2, 5, 30):
        ids = [f"s{i:03d}" for i in range(n)]
        order = ids[:]
        rng.shuffle(order)
        assert kendall_tau(pair_from_orders(ids, order, order)) == 1.0
        assert kendall_tau(pair_from_orders(ids, order, order[::-1])) == -1.0


def test_tau_hand_case():
    p = pair_from_orders("abc", list("abc"), list("acb"))
    assert kendall_tau(p) == pytest.approx(1.0 / 3.0)


def test_tau_merge_equals_bruteforce():
    rng = random.Random(1)
    for _ in range(300):
        n = rng.randint(2, 60)
        p = random_pair(rng, n)
        assert kendall_tau(p) == pytest.approx(kendall_tau_bruteforce(p), abs=1e-12)


# ---------------------------------------------------------------------------
# shared invariances


def test_position_metrics_invariant_under_monotone_transforms():
    rng = np.random.default_rng(2)
    ids = [f"s{i:03d}" for i in range(12)]
    gt = rng.normal(size=12)
    pred = rng.normal(size=12)
    base = make_pair(ids, gt, pred)
    warped = make_pair(ids, gt, np.exp(pred * 0.5) + 3)
    assert base.pred_positions == warped.pred_positions
    assert ndcg_at_k(base) == ndcg_at_k(warped)
    assert diff(base) == diff(warped)
    assert kendall_tau(base) == kendall_tau(warped)


def test_report_schema():
    p = random_pair(random.Random(3), 9)
    rep = metrics_report(p)
    assert set(rep) == {"ndcg_at_k", "emd", "diff", "kendall_tau", "n", "k"}
    assert rep["n"] == 9 and rep["k"] == 9
