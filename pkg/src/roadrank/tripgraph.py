"""Heterogeneous trip graph and attribute-guided graphs.

The trip graph links three node sets (OD, path, segment) through
- ``m_op``: OD -> path traffic shares (rows are the per-OD share vectors),
- ``m_pl``: path -> segment membership (0/1 incidence),
- ``m_ll``: segment -> segment influence, where each ordered in-path pair
  (i upstream of j) contributes ``decay_base ** -c`` with c = number of
  segments strictly between them on that path.

An attribute-guided graph is a bipartite graph from entities of one type to
that type's attribute nodes; edge weights are the min-max normalized
attribute values, so every weight lies in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import DatasetBundle, assigned_volumes, effective_capacities

ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class TripGraph:
    od_nodes: tuple[str, ...]
    path_nodes: tuple[str, ...]
    segment_nodes: tuple[str, ...]
    m_op: np.ndarray  # |V^o| x |V^p|, rows = path shares
    m_pl: np.ndarray  # |V^p| x |V^l|, 0/1 incidence
    m_ll: np.ndarray  # |V^l| x |V^l|, decayed upstream influence
    decay_base: float

    @property
    def n_nodes(self) -> int:
        return len(self.od_nodes) + len(self.path_nodes) + len(self.segment_nodes)


@dataclass(frozen=True)
class AttributeGuidedGraph:
    node_type: str  # 'od' | 'path' | 'segment'
    entity_nodes: tuple[str, ...]
    attribute_nodes: tuple[str, ...]
    a_bar: np.ndarray  # |U| x |V|: normalized attribute values in [0, 1]


@dataclass(frozen=True)
class NormalizedKernels:
    m_pl_row: np.ndarray  # rows sum to 1 (uniform over member segments)
    m_pl_col: np.ndarray  # columns sum to 1 (distribution over containing paths)
    m_ll_row: np.ndarray  # rows sum to 1 where nonzero
    dead_end_segments: tuple[str, ...]  # segments on no path: all-zero walk rows
    dead_end_ods: tuple[str, ...]  # ODs without any path


def build_trip_graph(bundle: DatasetBundle, decay_base: float = 2.0) -> TripGraph:
    """Assemble the three adjacency components from a validated bundle."""
    if decay_base <= 1.0:
        raise ValueError("decay_base must be > 1")
    od_nodes = tuple(od.id for od in bundle.od_flows)
    path_nodes = tuple(p.id for p in bundle.paths)
    segment_nodes = tuple(bundle.network.segments)
    od_ix = {k: i for i, k in enumerate(od_nodes)}
    path_ix = {k: i for i, k in enumerate(path_nodes)}
    seg_ix = {k: i for i, k in enumerate(segment_nodes)}

    m_op = np.zeros((len(od_nodes), len(path_nodes)))
    m_pl = np.zeros((len(path_nodes), len(segment_nodes)))
    m_ll = np.zeros((len(segment_nodes), len(segment_nodes)))

    for p in bundle.paths:
        pi = path_ix[p.id]
        m_op[od_ix[p.od_id], pi] = p.share
        idx = [seg_ix[s] for s in p.segments]
        m_pl[pi, idx] = 1.0
        for a in range(len(idx)):
            for b in range(a + 1, len(idx)):
                m_ll[idx[a], idx[b]] += decay_base ** -(b - a - 1)

    return TripGraph(od_nodes, path_nodes, segment_nodes, m_op, m_pl, m_ll, float(decay_base))


def normalize_kernels(tg: TripGraph) -> NormalizedKernels:
    """Row-normalize m_pl and m_ll, column-normalize m_pl; all-zero rows and
    columns are left at zero and recorded in the dead-end registry."""
    row_sums = tg.m_pl.sum(axis=1, keepdims=True)
    m_pl_row = np.divide(tg.m_pl, row_sums, out=np.zeros_like(tg.m_pl), where=row_sums > 0)

    col_sums = tg.m_pl.sum(axis=0, keepdims=True)
    m_pl_col = np.divide(tg.m_pl, col_sums, out=np.zeros_like(tg.m_pl), where=col_sums > 0)

    ll_sums = tg.m_ll.sum(axis=1, keepdims=True)
    m_ll_row = np.divide(tg.m_ll, ll_sums, out=np.zeros_like(tg.m_ll), where=ll_sums > 0)

    on_no_path = np.asarray(col_sums).ravel() == 0
    dead_segments = tuple(s for s, dead in zip(tg.segment_nodes, on_no_path) if dead)
    od_mass = tg.m_op.sum(axis=1)
    dead_ods = tuple(o for o, m in zip(tg.od_nodes, od_mass) if m == 0)
    return NormalizedKernels(m_pl_row, m_pl_col, m_ll_row, dead_segments, dead_ods)


def build_attribute_graph(node_type: str, entity_ids, attribute_names, raw: np.ndarray) -> AttributeGuidedGraph:
    """Min-max normalize each attribute row of ``raw`` (shape |U| x |V|) to [0, 1].

    Constant rows carry no contrast and map to 0.5 everywhere. An empty
    attribute set is rejected: walk transitions through the graph would be
    undefined.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape != (len(attribute_names), len(entity_ids)):
        raise ValueError(f"raw table must have shape (n_attributes, n_entities), got {raw.shape}")
    if len(attribute_names) == 0:
        raise ValueError(f"attribute-guided graph for type {node_type!r} needs at least one attribute")
    if not np.all(np.isfinite(raw)):
        raise ValueError("raw attribute table contains non-finite values")

    lo = raw.min(axis=1, keepdims=True)
    hi = raw.max(axis=1, keepdims=True)
    span = hi - lo
    a_bar = np.where(span > 0, (raw - lo) / np.where(span > 0, span, 1.0), 0.5)
    return AttributeGuidedGraph(node_type, tuple(entity_ids), tuple(attribute_names), a_bar)


OD_ATTR_NAMES = ("volume", "path_count", "shortest_path_length")
PATH_ATTR_NAMES = ("length_in_segments", "total_length", "assigned_volume")


def derive_type_attributes(bundle: DatasetBundle):
    """Raw attribute tables (|U| x |V|, pre-normalization) for the three node types.

    OD: volume, number of assigned paths, segment count of the shortest one.
    Path: segment count, total physical length, assigned vehicle volume.
    Segment: the network schema with capacity resolved and volume assigned.
    """
    by_od = bundle.paths_by_od()
    od_rows = []
    for od in bundle.od_flows:
        plist = by_od.get(od.id, [])
        spl = min((len(p.segments) for p in plist), default=0)
        od_rows.append((od.volume, float(len(plist)), float(spl)))
    od_table = np.array(od_rows, dtype=float).T if od_rows else np.zeros((3, 0))

    od_volume = {od.id: od.volume for od in bundle.od_flows}
    lengths = {s: bundle.network.attrs[s].length for s in bundle.network.segments}
    path_rows = [
        (float(len(p.segments)), sum(lengths[s] for s in p.segments), od_volume[p.od_id] * p.share)
        for p in bundle.paths
    ]
    path_table = np.array(path_rows, dtype=float).T if path_rows else np.zeros((3, 0))

    loads = assigned_volumes(bundle)
    caps = effective_capacities(bundle)
    seg_rows = []
    for s in bundle.network.segments:
        at = bundle.network.attrs[s]
        seg_rows.append((float(at.lane_count), at.speed_limit, caps[s], at.length, loads[s]))
    seg_table = np.array(seg_rows, dtype=float).T if seg_rows else np.zeros((5, 0))

    return {
        "od": (OD_ATTR_NAMES, od_table),
        "path": (PATH_ATTR_NAMES, path_table),
        "segment": (("lane_count", "speed_limit", "capacity", "length", "assigned_volume"), seg_table),
    }


def build_attribute_graphs(bundle: DatasetBundle, tg: TripGraph) -> dict[str, AttributeGuidedGraph]:
    """One attribute-guided graph per node type, aligned with the trip graph node order."""
    tables = derive_type_attributes(bundle)
    return {
        "od": build_attribute_graph("od", tg.od_nodes, *_ordered(tables["od"])),
        "path": build_attribute_graph("path", tg.path_nodes, *_ordered(tables["path"])),
        "segment": build_attribute_graph("segment", tg.segment_nodes, *_ordered(tables["segment"])),
    }


def _ordered(table):
    names, raw = table
    return names, raw


def check_trip_graph(tg: TripGraph) -> list[str]:
    """Internal consistency audit used by the verification command."""
    problems = []
    for i, row in enumerate(tg.m_op):
        mass = row.sum()
        if mass > 0 and abs(mass - 1.0) > ROW_SUM_TOL:
            problems.append(f"m_op row {tg.od_nodes[i]} sums to {mass}")
    if not np.all((tg.m_pl == 0) | (tg.m_pl == 1)):
        problems.append("m_pl contains values other than 0/1")
    if np.any(tg.m_ll < 0):
        problems.append("m_ll contains negative entries")
    return problems
