"""Road network data model: segments, OD flows, assigned paths.

Segments are the graph nodes; a directed edge (a, b) means traffic can move
from segment a onto segment b (intersections are implicit in edges). An OD
flow carries a vehicle volume between two segments, split across one or more
loop-free paths whose shares sum to one.

Datasets live on disk as three JSON files (``network.json``, ``od.json``,
``paths.json``) and in memory as a :class:`DatasetBundle`.
"""

from __future__ import annotations

import heapq
import json
import math
import random
import warnings
from dataclasses import dataclass
from pathlib import Path as FsPath

SHARE_TOL = 1e-9

SEGMENT_ATTR_NAMES = ("lane_count", "speed_limit", "capacity", "length", "assigned_volume")

# headroom applied when a loaded dataset omits capacity: the unperturbed
# network must start uncongested
CAPACITY_FALLBACK_RATIO = 1.2


class DatasetError(ValueError):
    """Base class for dataset construction/ingestion failures."""


class DatasetParseError(DatasetError):
    """Malformed file or record; message names the file and offending field."""


class DatasetReferenceError(DatasetError):
    """A record references an id that was never declared."""


class DatasetInvariantError(DatasetError):
    """Structurally parseable data that violates a model invariant."""


@dataclass(frozen=True)
class SegmentAttrs:
    lane_count: int
    speed_limit: float
    capacity: float | None  # None: not observed, resolved via effective_capacities()
    length: float


@dataclass(frozen=True)
class OdFlow:
    id: str
    origin: str
    destination: str
    volume: float


@dataclass(frozen=True)
class TripPath:
    id: str
    od_id: str
    segments: tuple[str, ...]
    share: float


@dataclass(frozen=True)
class RoadNetwork:
    segments: tuple[str, ...]  # declaration order; also the canonical node order
    edges: frozenset[tuple[str, str]]
    attrs: dict[str, SegmentAttrs]

    def index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.segments)}


@dataclass(frozen=True)
class DatasetBundle:
    network: RoadNetwork
    od_flows: tuple[OdFlow, ...]
    paths: tuple[TripPath, ...]
    rng_seed: int = 0

    def paths_by_od(self) -> dict[str, list[TripPath]]:
        out: dict[str, list[TripPath]] = {od.id: [] for od in self.od_flows}
        for p in self.paths:
            out.setdefault(p.od_id, []).append(p)
        return out


def assigned_volumes(bundle: DatasetBundle) -> dict[str, float]:
    """Per-segment traffic volume: sum over containing paths of od volume x share."""
    od_volume = {od.id: od.volume for od in bundle.od_flows}
    out = {s: 0.0 for s in bundle.network.segments}
    for p in bundle.paths:
        flow = od_volume[p.od_id] * p.share
        for s in p.segments:
            out[s] += flow
    return out


def effective_capacities(bundle: DatasetBundle) -> dict[str, float]:
    """Capacity per segment, substituting a headroom multiple of assigned volume
    where the dataset did not declare one (so the unloaded network is uncongested)."""
    loads = assigned_volumes(bundle)
    out = {}
    for s in bundle.network.segments:
        cap = bundle.network.attrs[s].capacity
        if cap is None:
            cap = CAPACITY_FALLBACK_RATIO * max(loads[s], 1.0)
        out[s] = cap
    return out


# ---------------------------------------------------------------------------
# Validation


def validate_bundle(bundle: DatasetBundle) -> list[str]:
    """Check every model invariant; returns human-readable violations (empty = valid)."""
    v: list[str] = []
    net = bundle.network
    seg_set = set(net.segments)

    if len(seg_set) != len(net.segments):
        v.append("network: duplicate segment ids")
    for a, b in net.edges:
        if a not in seg_set or b not in seg_set:
            v.append(f"edge ({a}, {b}): undeclared endpoint")
    for s in net.segments:
        at = net.attrs.get(s)
        if at is None:
            v.append(f"segment {s}: missing attributes")
            continue
        vals = [at.lane_count, at.speed_limit, at.length] + ([at.capacity] if at.capacity is not None else [])
        if not all(math.isfinite(float(x)) for x in vals):
            v.append(f"segment {s}: non-finite attribute value")
        if at.capacity is not None and at.capacity <= 0:
            v.append(f"segment {s}: capacity must be > 0")
        if at.speed_limit <= 0:
            v.append(f"segment {s}: speed_limit must be > 0")
        if at.length <= 0:
            v.append(f"segment {s}: length must be > 0")

    od_ids = set()
    for od in bundle.od_flows:
        if od.id in od_ids:
            v.append(f"od {od.id}: duplicate id")
        od_ids.add(od.id)
        if od.origin == od.destination:
            v.append(f"od {od.id}: origin equals destination")
        if od.volume < 0 or not math.isfinite(od.volume):
            v.append(f"od {od.id}: volume must be finite and >= 0")
        for end in (od.origin, od.destination):
            if end not in seg_set:
                v.append(f"od {od.id}: unknown segment {end}")

    share_sums: dict[str, float] = {}
    path_ids = set()
    for p in bundle.paths:
        if p.id in path_ids:
            v.append(f"path {p.id}: duplicate id")
        path_ids.add(p.id)
        if p.od_id not in od_ids:
            v.append(f"path {p.id}: unknown od {p.od_id}")
            continue
        od = next(o for o in bundle.od_flows if o.id == p.od_id)
        if not p.segments:
            v.append(f"path {p.id}: empty segment sequence")
            continue
        unknown = [s for s in p.segments if s not in seg_set]
        if unknown:
            v.append(f"path {p.id}: unknown segment {unknown[0]}")
            continue
        if len(set(p.segments)) != len(p.segments):
            v.append(f"path {p.id}: revisits a segment (paths must be loop-free)")
        if p.segments[0] != od.origin:
            v.append(f"path {p.id}: first segment {p.segments[0]} is not od origin {od.origin}")
        if p.segments[-1] != od.destination:
            v.append(f"path {p.id}: last segment {p.segments[-1]} is not od destination {od.destination}")
        for a, b in zip(p.segments, p.segments[1:]):
            if (a, b) not in net.edges:
                v.append(f"path {p.id}: segments {a} -> {b} not connected by a directed edge")
        if not (0.0 <= p.share <= 1.0):
            v.append(f"path {p.id}: share {p.share} outside [0, 1]")
        share_sums[p.od_id] = share_sums.get(p.od_id, 0.0) + p.share

    for od_id, total in share_sums.items():
        if abs(total - 1.0) > SHARE_TOL:
            v.append(f"od {od_id}: path shares sum to {total}, expected 1")

    return v


def _require_valid(bundle: DatasetBundle) -> DatasetBundle:
    violations = validate_bundle(bundle)
    if violations:
        first = violations[0]
        if "unknown" in first:
            raise DatasetReferenceError("; ".join(violations))
        raise DatasetInvariantError("; ".join(violations))
    if not bundle.od_flows or not bundle.paths:
        warnings.warn("dataset has no OD flows or no paths; downstream stages will be degenerate")
    return bundle


# ---------------------------------------------------------------------------
# Loading

_SEGMENT_KEYS = {"id", "lane_count", "speed_limit", "capacity", "length"}
_OD_KEYS = {"id", "origin", "destination", "volume"}
_PATH_KEYS = {"id", "od_id", "segments", "share"}


def _read_json(path: FsPath):
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise DatasetParseError(f"{path}: file not found") from None
    except json.JSONDecodeError as e:
        raise DatasetParseError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from None


def _check_keys(obj: dict, allowed: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise DatasetParseError(f"{where}: unknown key(s) {sorted(unknown)}")


def load_dataset(directory: str | FsPath) -> DatasetBundle:
    """Load and validate the three dataset files from ``directory``.

    Raises :class:`DatasetParseError` for malformed content,
    :class:`DatasetReferenceError` for undeclared ids, and
    :class:`DatasetInvariantError` for structural violations.
    """
    directory = FsPath(directory)
    net_doc = _read_json(directory / "network.json")
    od_doc = _read_json(directory / "od.json")
    path_doc = _read_json(directory / "paths.json")

    if not isinstance(net_doc, dict):
        raise DatasetParseError("network.json: expected a JSON object")
    _check_keys(net_doc, {"segments", "edges"}, "network.json")

    segments: list[str] = []
    attrs: dict[str, SegmentAttrs] = {}
    for i, rec in enumerate(net_doc.get("segments", [])):
        where = f"network.json: segments[{i}]"
        if not isinstance(rec, dict):
            raise DatasetParseError(f"{where}: expected an object")
        _check_keys(rec, _SEGMENT_KEYS, where)
        try:
            sid = str(rec["id"])
            cap = rec.get("capacity")
            attrs[sid] = SegmentAttrs(
                lane_count=int(rec["lane_count"]),
                speed_limit=float(rec["speed_limit"]),
                capacity=None if cap is None else float(cap),
                length=float(rec["length"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetParseError(f"{where}: {e}") from None
        segments.append(sid)

    edges = set()
    for i, rec in enumerate(net_doc.get("edges", [])):
        if not (isinstance(rec, list) and len(rec) == 2):
            raise DatasetParseError(f"network.json: edges[{i}]: expected [from_id, to_id]")
        edges.add((str(rec[0]), str(rec[1])))

    if not isinstance(od_doc, list):
        raise DatasetParseError("od.json: expected a JSON array")
    od_flows = []
    for i, rec in enumerate(od_doc):
        where = f"od.json: [{i}]"
        _check_keys(rec, _OD_KEYS, where)
        try:
            od_flows.append(
                OdFlow(id=str(rec["id"]), origin=str(rec["origin"]), destination=str(rec["destination"]), volume=float(rec["volume"]))
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetParseError(f"{where}: {e}") from None

    if not isinstance(path_doc, list):
        raise DatasetParseError("paths.json: expected a JSON array")
    paths = []
    for i, rec in enumerate(path_doc):
        where = f"paths.json: [{i}]"
        _check_keys(rec, _PATH_KEYS, where)
        try:
            paths.append(
                TripPath(id=str(rec["id"]), od_id=str(rec["od_id"]), segments=tuple(str(s) for s in rec["segments"]), share=float(rec["share"]))
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetParseError(f"{where}: {e}") from None

    net = RoadNetwork(segments=tuple(segments), edges=frozenset(edges), attrs=attrs)
    return _require_valid(DatasetBundle(network=net, od_flows=tuple(od_flows), paths=tuple(paths)))


def save_dataset(bundle: DatasetBundle, directory: str | FsPath) -> None:
    """Write the three dataset files; output is byte-stable for equal bundles."""
    directory = FsPath(directory)
    directory.mkdir(parents=True, exist_ok=True)
    net = bundle.network
    net_doc = {
        "segments": [
            {
                "id": s,
                "lane_count": net.attrs[s].lane_count,
                "speed_limit": net.attrs[s].speed_limit,
                "capacity": net.attrs[s].capacity,
                "length": net.attrs[s].length,
            }
            for s in net.segments
        ],
        "edges": [[a, b] for a, b in sorted(net.edges)],
    }
    od_doc = [{"id": o.id, "origin": o.origin, "destination": o.destination, "volume": o.volume} for o in bundle.od_flows]
    path_doc = [{"id": p.id, "od_id": p.od_id, "segments": list(p.segments), "share": p.share} for p in bundle.paths]
    for name, doc in (("network.json", net_doc), ("od.json", od_doc), ("paths.json", path_doc)):
        with open(directory / name, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=1, sort_keys=True)
            f.write("\n")


# ---------------------------------------------------------------------------
# Synthetic instance generation


def _k_shortest_paths(adj: dict[str, list[str]], weight: dict[str, float], src: str, dst: str, k: int) -> list[list[str]]:
    """Yen's algorithm for k shortest loop-free paths; edge cost = weight of the
    target segment, so path cost orders by total traversed length."""

    def dijkstra(banned_edges: set[tuple[str, str]], banned_nodes: set[str], start: str) -> list[str] | None:
        dist = {start: 0.0}
        prev: dict[str, str] = {}
        heap = [(0.0, start)]
        done = set()
        while heap:
            d, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            if u == dst:
                out = [u]
                while out[-1] != start:
                    out.append(prev[out[-1]])
                return out[::-1]
            for nxt in adj.get(u, []):
                if nxt in banned_nodes or (u, nxt) in banned_edges:
                    continue
                nd = d + weight[nxt]
                if nd < dist.get(nxt, math.inf):
                    dist[nxt] = nd
                    prev[nxt] = u
                    heapq.heappush(heap, (nd, nxt))
        return None

    first = dijkstra(set(), set(), src)
    if first is None:
        return []
    found = [first]
    candidates: list[tuple[float, list[str]]] = []
    seen = {tuple(first)}
    while len(found) < k:
        base = found[-1]
        for i in range(len(base) - 1):
            spur = base[i]
            root = base[: i + 1]
            banned_edges = {(p[i], p[i + 1]) for p in found if len(p) > i + 1 and p[: i + 1] == root}
            banned_nodes = set(root[:-1])
            tail = dijkstra(banned_edges, banned_nodes, spur)
            if tail is None:
                continue
            cand = root[:-1] + tail
            key = tuple(cand)
            if key in seen:
                continue
            seen.add(key)
            cost = sum(weight[s] for s in cand)
            heapq.heappush(candidates, (cost, cand))
        if not candidates:
            break
        _, best = heapq.heappop(candidates)
        found.append(best)
    return found


def generate_random_dataset(
    n_segments: int,
    n_od: int,
    paths_per_od_max: int,
    seed: int,
    extra_edges: int | None = None,
) -> DatasetBundle:
    """Generate a strongly connected random instance, deterministic per seed.

    Topology: a random spanning cycle over all segments (guarantees strong
    connectivity) plus ``extra_edges`` random edges (default: n_segments).
    OD pairs are drawn without replacement; each gets up to ``paths_per_od_max``
    loop-free shortest paths, with shares softmax-distributed over
    -length / mean_length. Capacities are set with limited headroom above the
    resulting assigned volume so single failures can propagate upstream.
    """
    if n_segments < 4:
        raise ValueError("n_segments must be >= 4")
    if n_od < 1:
        raise ValueError("n_od must be >= 1")
    if paths_per_od_max < 1:
        raise ValueError("paths_per_od_max must be >= 1")
    rng = random.Random(seed)
    width = max(3, len(str(n_segments - 1)))
    seg_ids = [f"s{i:0{width}d}" for i in range(n_segments)]

    order = seg_ids[:]
    rng.shuffle(order)
    edges = {(order[i], order[(i + 1) % n_segments]) for i in range(n_segments)}
    n_extra = n_segments if extra_edges is None else extra_edges
    attempts = 0
    while len(edges) < n_segments + n_extra and attempts < 50 * n_extra + 100:
        a, b = rng.sample(seg_ids, 2)
        if (a, b) not in edges:
            edges.add((a, b))
        attempts += 1

    lengths = {s: round(rng.uniform(100.0, 2000.0), 1) for s in seg_ids}
    lanes = {s: rng.randint(1, 4) for s in seg_ids}
    speeds = {s: float(rng.choice([30, 40, 50, 60, 80, 100])) for s in seg_ids}

    adj: dict[str, list[str]] = {s: [] for s in seg_ids}
    for a, b in sorted(edges):
        adj[a].append(b)

    od_width = max(2, len(str(n_od - 1)))
    od_flows: list[OdFlow] = []
    paths: list[TripPath] = []
    used_pairs: set[tuple[str, str]] = set()
    p_counter = 0
    for i in range(n_od):
        for attempt in range(200):
            o, d = rng.sample(seg_ids, 2)
            if (o, d) in used_pairs:
                continue
            routes = _k_shortest_paths(adj, lengths, o, d, paths_per_od_max)
            if routes:
                break
        else:
            raise DatasetError(f"could not draw a feasible OD pair after 200 attempts (od #{i})")
        used_pairs.add((o, d))
        od_id = f"od{i:0{od_width}d}"
        od_flows.append(OdFlow(id=od_id, origin=o, destination=d, volume=float(rng.randint(50, 500))))
        route_len = [sum(lengths[s] for s in r) for r in routes]
        mean_len = sum(route_len) / len(route_len)
        logits = [math.exp(-L / mean_len) for L in route_len]
        z = sum(logits)
        shares = [w / z for w in logits]
        # pin the residual onto the largest share so sums are exactly 1
        shares[shares.index(max(shares))] += 1.0 - sum(shares)
        for r, sh in zip(routes, shares):
            paths.append(TripPath(id=f"p{p_counter:05d}", od_id=od_id, segments=tuple(r), share=sh))
            p_counter += 1

    draft_attrs = {
        s: SegmentAttrs(lane_count=lanes[s], speed_limit=speeds[s], capacity=None, length=lengths[s]) for s in seg_ids
    }
    net = RoadNetwork(segments=tuple(seg_ids), edges=frozenset(edges), attrs=draft_attrs)
    draft = DatasetBundle(network=net, od_flows=tuple(od_flows), paths=tuple(paths), rng_seed=seed)
    loads = assigned_volumes(draft)
    attrs = {}
    for s in seg_ids:
        headroom = 1.15 + 0.5 * rng.random()
        base = 600.0 * lanes[s]
        cap = round(max(headroom * loads[s], 0.3 * base) + 1.0, 1)
        attrs[s] = SegmentAttrs(lane_count=lanes[s], speed_limit=speeds[s], capacity=cap, length=lengths[s])
    net = RoadNetwork(segments=tuple(seg_ids), edges=frozenset(edges), attrs=attrs)
    bundle = DatasetBundle(network=net, od_flows=tuple(od_flows), paths=tuple(paths), rng_seed=seed)
    violations = validate_bundle(bundle)
    if violations:
        raise DatasetInvariantError("generator produced an invalid bundle: " + violations[0])
    return bundle


def is_strongly_connected(net: RoadNetwork) -> bool:
    """Two directed traversals (forward and reverse) from an arbitrary segment."""
    if not net.segments:
        return True
    fwd: dict[str, list[str]] = {s: [] for s in net.segments}
    rev: dict[str, list[str]] = {s: [] for s in net.segments}
    for a, b in net.edges:
        fwd[a].append(b)
        rev[b].append(a)

    def reach(adj: dict[str, list[str]]) -> int:
        root = net.segments[0]
        seen = {root}
        stack = [root]
        while stack:
            for nxt in adj[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return len(seen)

    n = len(net.segments)
    return reach(fwd) == n and reach(rev) == n
