"""Markov-chain view of the joint walk, for verification.

The analysis collapses each attribute-mediated two-step move into a single
entity-to-entity transition, so the chain lives on OD + path + segment nodes.
Its transition matrix mixes the (row-renormalized) depth-first trip-graph
kernel with the per-type two-step attribute kernel; rows whose trip-graph part
is empty fall back to a restart spread uniformly over OD nodes.

OD nodes receive trip-graph mass from nowhere - they are start-only states.
Irreducibility is therefore assessed on the chain with designated start
states set aside: the remaining support must be one strongly connected class
and every start state must reach it. Without designated start states the
check is plain strong connectivity of the support digraph.
"""

from __future__ import annotations

import math

import numpy as np

from .tripgraph import AttributeGuidedGraph, NormalizedKernels, TripGraph

DENSE_NODE_CAP = 2000


class ChainSizeError(ValueError):
    """Node count exceeds the dense-matrix cap."""


class ConvergenceError(RuntimeError):
    """Power iteration hit the iteration cap; the chain is likely not ergodic."""


def propagation_operator(ag: AttributeGuidedGraph, i: int) -> np.ndarray:
    """Unnormalized attribute-mediated influence of entity ``i`` on every entity:
    sum over attributes k of ``a_bar[k, i] * (1 - |a_bar[k, j] - a_bar[k, i]|)``."""
    a = ag.a_bar
    return (a[:, i : i + 1] * (1.0 - np.abs(a - a[:, i : i + 1]))).sum(axis=0)


def ag_two_step_matrix(ag: AttributeGuidedGraph) -> np.ndarray:
    """Entity -> entity transition with both factors normalized as the walk
    samples them (attribute draw over the entity's attribute column, entity
    draw over the similarity row; zero attribute columns mean a uniform draw)."""
    a = ag.a_bar
    n_attr, n_ent = a.shape
    col = a.sum(axis=0)
    p_attr = np.where(col > 0, a / np.where(col > 0, col, 1.0), 1.0 / n_attr)
    out = np.zeros((n_ent, n_ent))
    for k in range(n_attr):
        sim = 1.0 - np.abs(a[k][None, :] - a[k][:, None])  # sim[i, j]
        sim /= sim.sum(axis=1, keepdims=True)  # row sums are >= 1, never zero
        out += p_attr[k][:, None] * sim
    return out


def depth_first_matrix(tg: TripGraph, kernels: NormalizedKernels, epsilon: float) -> np.ndarray:
    """Raw depth-first kernel over all nodes (rows may sum to 0, epsilon-partial, or 1)."""
    n_o, n_p, n_l = len(tg.od_nodes), len(tg.path_nodes), len(tg.segment_nodes)
    n = n_o + n_p + n_l
    P = np.zeros((n, n))
    P[:n_o, n_o : n_o + n_p] = tg.m_op
    P[n_o : n_o + n_p, n_o + n_p :] = kernels.m_pl_row
    P[n_o + n_p :, n_o : n_o + n_p] = (1.0 - epsilon) * kernels.m_pl_col.T
    P[n_o + n_p :, n_o + n_p :] = epsilon * kernels.m_ll_row
    return P


def joint_transition_matrix(
    tg: TripGraph,
    kernels: NormalizedKernels,
    ags: dict[str, AttributeGuidedGraph],
    alpha: float,
    epsilon: float = 0.5,
    node_cap: int = DENSE_NODE_CAP,
) -> np.ndarray:
    """Dense entity-level transition matrix of the alpha-mixed walk."""
    n_o, n_p, n_l = len(tg.od_nodes), len(tg.path_nodes), len(tg.segment_nodes)
    n = n_o + n_p + n_l
    if n > node_cap:
        raise ChainSizeError(f"{n} nodes exceeds the dense-matrix cap of {node_cap}")

    P_tg = depth_first_matrix(tg, kernels, epsilon)
    sums = P_tg.sum(axis=1, keepdims=True)
    P_tg = np.divide(P_tg, sums, out=P_tg, where=sums > 0)
    dead = np.asarray(sums).ravel() == 0
    if dead.any():
        if n_o == 0:
            raise ValueError("dead-end rows exist but there are no OD nodes to restart at")
        P_tg[dead] = 0.0
        P_tg[dead, :n_o] = 1.0 / n_o

    P = alpha * P_tg
    P[:n_o, :n_o] += (1.0 - alpha) * ag_two_step_matrix(ags["od"])
    P[n_o : n_o + n_p, n_o : n_o + n_p] += (1.0 - alpha) * ag_two_step_matrix(ags["path"])
    P[n_o + n_p :, n_o + n_p :] += (1.0 - alpha) * ag_two_step_matrix(ags["segment"])
    return P


def stationary_distribution(
    P: np.ndarray,
    tol: float = 1e-10,
    start: np.ndarray | None = None,
    max_iter: int = 1_000_000,
) -> np.ndarray:
    """Power iteration until the L1 step change drops below ``tol``.

    The returned vector satisfies ``pi @ P = pi`` within ``10 * tol``;
    exceeding ``max_iter`` raises :class:`ConvergenceError`.
    """
    n = P.shape[0]
    x = np.full(n, 1.0 / n) if start is None else np.asarray(start, dtype=float) / np.sum(start)
    for _ in range(max_iter):
        nxt = x @ P
        if np.abs(nxt - x).sum() < tol:
            x = nxt
            break
        x = nxt
    else:
        raise ConvergenceError(f"power iteration did not converge within {max_iter} iterations")
    residual = np.abs(x @ P - x).sum()
    if residual > 10 * tol:
        raise ConvergenceError(f"fixed-point residual {residual:.3e} exceeds {10 * tol:.3e}")
    return x


def _reachable(adj: list[list[int]], roots) -> set[int]:
    seen = set(roots)
    stack = list(roots)
    while stack:
        for v in adj[stack.pop()]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


def ergodicity_check(P: np.ndarray, transient_start_states: tuple[int, ...] = ()) -> dict:
    """Irreducibility and aperiodicity of the support digraph of ``P``.

    ``transient_start_states`` are states that by construction have no
    in-edges (walk start states); they are excluded from the strong
    connectivity requirement but must each reach the remaining core.
    Aperiodicity is the gcd of cycle lengths through an arbitrary core state,
    obtained from BFS levels on the core support graph.
    """
    n = P.shape[0]
    support = P > 0
    adj = [list(np.nonzero(support[i])[0]) for i in range(n)]
    starts = set(int(s) for s in transient_start_states)
    core = [i for i in range(n) if i not in starts]
    if not core:
        return {"irreducible": False, "aperiodic": False, "period": 0, "core_size": 0}

    core_set = set(core)
    core_adj = [[v for v in adj[i] if v in core_set] for i in range(n)]
    radj = [[] for _ in range(n)]
    for u in core:
        for v in core_adj[u]:
            radj[v].append(u)

    root = core[0]
    fwd = _reachable(core_adj, [root]) & core_set
    bwd = _reachable(radj, [root]) & core_set
    irreducible = len(fwd) == len(core) and len(bwd) == len(core)
    starts_ok = all(len(_reachable(adj, [s]) & core_set) > 0 for s in starts)
    irreducible = irreducible and starts_ok

    period = 0
    if irreducible:
        level = {root: 0}
        frontier = [root]
        while frontier:
            nxt = []
            for u in frontier:
                for v in core_adj[u]:
                    if v not in level:
                        level[v] = level[u] + 1
                        nxt.append(v)
            frontier = nxt
        g = 0
        for u in core:
            for v in core_adj[u]:
                g = math.gcd(g, level[u] + 1 - level[v])
        period = abs(g)

    return {
        "irreducible": bool(irreducible),
        "aperiodic": bool(irreducible and period == 1),
        "period": period,
        "core_size": len(core),
        "start_states_reach_core": bool(starts_ok),
    }
