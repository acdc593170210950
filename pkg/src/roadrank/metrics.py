"""Ranking evaluation metrics.

All four metrics consume a :class:`RankingPair`: two rank-position
permutations over the same id set (1 = most important) plus the underlying
scores. Positions are always derived by descending score with ascending-id
tie-breaking, so both position vectors are tie-free permutations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RankingPair:
    ids: tuple[str, ...]
    gt_positions: tuple[int, ...]
    pred_positions: tuple[int, ...]
    gt_scores: tuple[float, ...]
    pred_scores: tuple[float, ...]

    def __post_init__(self):
        n = len(self.ids)
        want = set(range(1, n + 1))
        if set(self.gt_positions) != want or set(self.pred_positions) != want:
            raise ValueError("position vectors must both be permutations of 1..n")


def positions_from_scores(ids, scores) -> tuple[int, ...]:
    """Rank positions 1..n by descending score, ties broken by ascending id."""
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    pos = [0] * len(ids)
    for rank, i in enumerate(order, start=1):
        pos[i] = rank
    return tuple(pos)


def make_pair(ids, gt_scores, pred_scores) -> RankingPair:
    ids = tuple(ids)
    gt_scores = tuple(float(x) for x in gt_scores)
    pred_scores = tuple(float(x) for x in pred_scores)
    return RankingPair(
        ids=ids,
        gt_positions=positions_from_scores(ids, gt_scores),
        pred_positions=positions_from_scores(ids, pred_scores),
        gt_scores=gt_scores,
        pred_scores=pred_scores,
    )


def ndcg_at_k(pair: RankingPair, k: int | None = None) -> float:
    """Exponential-gain NDCG with relevance ``n - gt_position`` and log2 discount.

    Gains grow as 2**(n-1), so this is meant for list sizes well under 1000.
    """
    n = len(pair.ids)
    k = n if k is None else k
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}]")
    rel = {i: n - pair.gt_positions[i] for i in range(n)}
    by_pred = sorted(range(n), key=lambda i: pair.pred_positions[i])
    by_gt = sorted(range(n), key=lambda i: pair.gt_positions[i])
    dcg = sum((2.0 ** rel[i] - 1.0) / math.log2(j + 1) for j, i in enumerate(by_pred[:k], start=1))
    idcg = sum((2.0 ** rel[i] - 1.0) / math.log2(j + 1) for j, i in enumerate(by_gt[:k], start=1))
    return dcg / idcg if idcg > 0 else 1.0


def _standardized_softmax(scores) -> np.ndarray:
    """Softmax over standardized scores; -inf sentinels keep zero mass."""
    x = np.asarray(scores, dtype=float)
    finite = np.isfinite(x)
    if not finite.any():
        return np.full(x.shape, 1.0 / len(x))
    z = np.full(x.shape, -np.inf)
    f = x[finite]
    std = f.std()
    z[finite] = 0.0 if std < 1e-12 else (f - f.mean()) / std
    e = np.exp(z - z[finite].max())
    return e / e.sum()


def emd_distributions(p, q) -> float:
    """Discrete 1-D Wasserstein-1 between two distributions on a shared ordered support."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("distributions must share a support")
    return float(np.abs(np.cumsum(p - q)).sum())


def emd(pair: RankingPair) -> float:
    """Wasserstein-1 between softmaxed standardized score vectors, supported on
    the ascending-id ordering of the segments."""
    order = sorted(range(len(pair.ids)), key=lambda i: pair.ids[i])
    p = _standardized_softmax([pair.gt_scores[i] for i in order])
    q = _standardized_softmax([pair.pred_scores[i] for i in order])
    return emd_distributions(p, q)


def diff(pair: RankingPair) -> float:
    """Mean absolute rank displacement normalized by floor(n^2 / 2)."""
    n = len(pair.ids)
    if n < 2:
        raise ValueError("diff needs at least 2 items")
    total = sum(abs(g - p) for g, p in zip(pair.gt_positions, pair.pred_positions))
    return total / (n * n // 2)


def _merge_count_inversions(a: list[int]) -> int:
    if len(a) <= 1:
        return 0
    mid = len(a) // 2
    left, right = a[:mid], a[mid:]
    inv = _merge_count_inversions(left) + _merge_count_inversions(right)
    i = j = 0
    merged = []
    while i < len(left) and j < len(right):
        if left[i] <= right[j]:
            merged.append(left[i])
            i += 1
        else:
            merged.append(right[j])
            j += 1
            inv += len(left) - i
    merged.extend(left[i:])
    merged.extend(right[j:])
    a[:] = merged
    return inv


def kendall_tau(pair: RankingPair) -> float:
    """(concordant - discordant) / (n(n-1)/2) via inversion counting in O(n log n)."""
    n = len(pair.ids)
    if n < 2:
        raise ValueError("kendall_tau needs at least 2 items")
    by_gt = sorted(range(n), key=lambda i: pair.gt_positions[i])
    seq = [pair.pred_positions[i] for i in by_gt]
    discordant = _merge_count_inversions(seq)
    pairs = n * (n - 1) // 2
    return (pairs - 2 * discordant) / pairs


def kendall_tau_bruteforce(pair: RankingPair) -> float:
    """O(n^2) pair enumeration; the independent oracle for kendall_tau."""
    n = len(pair.ids)
    c = d = 0
    for i in range(n):
        for j in range(i + 1, n):
            g = pair.gt_positions[i] - pair.gt_positions[j]
            p = pair.pred_positions[i] - pair.pred_positions[j]
            if g * p > 0:
                c += 1
            else:
                d += 1
    return (c - d) / (0.5 * n * (n - 1))


def metrics_report(pair: RankingPair, k: int | None = None) -> dict:
    n = len(pair.ids)
    k_eff = n if k is None else k
    return {
        "ndcg_at_k": ndcg_at_k(pair, k_eff),
        "emd": emd(pair),
        "diff": diff(pair),
        "kendall_tau": kendall_tau(pair),
        "n": n,
        "k": k_eff,
    }
