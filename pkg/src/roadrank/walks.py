"""Joint random walks over the trip graph and the attribute-guided graphs.

Each walk starts at an OD node. At every iteration a Bernoulli(alpha) draw
picks the move:

* trip-graph move (one token appended): the next node is sampled from the
  mixture ``beta * row(current) + (1 - beta) * row(predecessor)`` of
  depth-first rows, renormalized. A depth-first row is the OD's path-share
  vector, a path's uniform member-segment vector, or - for a segment - the
  epsilon-weighted blend of its decayed segment row and the column-normalized
  distribution over containing paths.
* attribute move (two tokens appended): first an attribute of the current
  entity's type, drawn proportionally to the normalized attribute value, then
  a same-type entity drawn proportionally to ``1 - |a_bar[k, j] - a_bar[k, i]|``
  (the current entity itself is a candidate).

All categorical draws go through per-row alias tables, so each step costs a
constant number of lookups.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .artifacts import fingerprint_map
from .tripgraph import AttributeGuidedGraph, NormalizedKernels, TripGraph

TYPE_TAG = {"od": "o", "path": "p", "segment": "l"}
KIND_OF_TAG = {"o": "od", "p": "path", "l": "segment"}


@dataclass(frozen=True)
class WalkConfig:
    alpha: float  # probability of a trip-graph move
    beta: float  # depth-first vs breadth-first mixing
    epsilon: float  # segment-segment vs segment-path bias
    num: int  # walks per OD node
    len: int  # tokens in an attribute-free walk; iterations = len - 1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie strictly inside (0, 1)")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.num < 1:
            raise ValueError("num must be >= 1")
        if self.len < 2:
            raise ValueError("len must be >= 2")


@dataclass(frozen=True)
class WalkToken:
    kind: str  # od | path | segment | attribute
    type_tag: str  # o | p | l (for attribute tokens: the owning type)
    id: str


@dataclass(frozen=True)
class WalkCorpus:
    sequences: tuple[tuple[WalkToken, ...], ...]
    config: WalkConfig
    fingerprints: dict[str, str] = field(default_factory=dict)


class DeadEndError(RuntimeError):
    """Both mixture components of a trip-graph move carry zero mass."""


# ---------------------------------------------------------------------------
# Alias tables


class AliasTable:
    """Vose alias table over ``outcomes`` with the given nonnegative weights."""

    __slots__ = ("outcomes", "prob", "alias")

    def __init__(self, outcomes: np.ndarray, weights: np.ndarray):
        weights = np.asarray(weights, dtype=float)
        total = weights.sum()
        if total <= 0:
            raise ValueError("alias table needs positive total weight")
        k = len(weights)
        scaled = weights * (k / total)
        prob = np.zeros(k)
        alias = np.zeros(k, dtype=np.int64)
        small = [i for i, w in enumerate(scaled) if w < 1.0]
        large = [i for i, w in enumerate(scaled) if w >= 1.0]
        scaled = scaled.copy()
        while small and large:
            s = small.pop()
            l = large.pop()
            prob[s] = scaled[s]
            alias[s] = l
            scaled[l] = (scaled[l] + scaled[s]) - 1.0
            (small if scaled[l] < 1.0 else large).append(l)
        for i in large:
            prob[i] = 1.0
        for i in small:
            prob[i] = 1.0  # numerical leftovers
        self.outcomes = np.asarray(outcomes)
        self.prob = prob
        self.alias = alias

    def sample(self, rng: np.random.Generator):
        i = int(rng.integers(len(self.prob)))
        if rng.random() >= self.prob[i]:
            i = int(self.alias[i])
        return self.outcomes[i]

    def implied_distribution(self) -> np.ndarray:
        """Probability mass the table actually realizes (for audits)."""
        k = len(self.prob)
        mass = self.prob / k
        for i in range(k):
            if self.prob[i] < 1.0:
                mass[self.alias[i]] += (1.0 - self.prob[i]) / k
        return mass


class AliasSampler:
    """All per-row alias tables for one trip graph + attribute-graph triple.

    Depth-first rows (OD -> paths, path -> segments, segment -> segments /
    paths) and entity -> attribute rows are tabled up front; dead-end rows are
    registered instead of tabled. Attribute -> entity rows depend on the
    current entity only through its normalized value, so their tables are
    cached per (type, attribute, value) on first use.
    """

    def __init__(self, tg: TripGraph, kernels: NormalizedKernels, ags: dict[str, AttributeGuidedGraph], cfg: WalkConfig):
        self.tg = tg
        self.kernels = kernels
        self.ags = ags
        self.epsilon = cfg.epsilon

        self.n_od = len(tg.od_nodes)
        self.n_path = len(tg.path_nodes)
        self.n_seg = len(tg.segment_nodes)
        self.nodes: tuple[str, ...] = tg.od_nodes + tg.path_nodes + tg.segment_nodes
        self.kinds = ["od"] * self.n_od + ["path"] * self.n_path + ["segment"] * self.n_seg
        self.node_index = {(k, n): i for i, (k, n) in enumerate(zip(self.kinds, self.nodes))}

        self.od_tables: list[AliasTable | None] = []
        for i in range(self.n_od):
            row = tg.m_op[i]
            nz = np.nonzero(row)[0]
            self.od_tables.append(AliasTable(nz + self.n_od, row[nz]) if nz.size else None)

        self.path_tables: list[AliasTable | None] = []
        base = self.n_od + self.n_path
        for p in range(self.n_path):
            row = kernels.m_pl_row[p]
            nz = np.nonzero(row)[0]
            self.path_tables.append(AliasTable(nz + base, row[nz]) if nz.size else None)

        self.seg_ll_tables: list[AliasTable | None] = []
        self.seg_pl_tables: list[AliasTable | None] = []
        for s in range(self.n_seg):
            ll = kernels.m_ll_row[s]
            nz = np.nonzero(ll)[0]
            self.seg_ll_tables.append(AliasTable(nz + base, ll[nz]) if nz.size else None)
            col = kernels.m_pl_col[:, s]
            nz = np.nonzero(col)[0]
            self.seg_pl_tables.append(AliasTable(nz + self.n_od, col[nz]) if nz.size else None)

        # entity -> attribute tables; all-zero columns fall back to uniform
        self.attr_tables: dict[str, list[AliasTable]] = {}
        for kind, ag in ags.items():
            n_attr = len(ag.attribute_nodes)
            tables = []
            for i in range(len(ag.entity_nodes)):
                col = ag.a_bar[:, i]
                if col.sum() > 0:
                    tables.append(AliasTable(np.arange(n_attr), col))
                else:
                    tables.append(AliasTable(np.arange(n_attr), np.ones(n_attr)))
            self.attr_tables[kind] = tables

        self._entity_table_cache: dict[tuple[str, int, float], AliasTable] = {}

        self.dead_ends: tuple[str, ...] = kernels.dead_end_segments + kernels.dead_end_ods

    # -- depth-first rows ---------------------------------------------------

    def row_mass(self, idx: int) -> float:
        """Total mass of the raw depth-first row (before renormalization)."""
        kind = self.kinds[idx]
        if kind == "od":
            return 1.0 if self.od_tables[idx] is not None else 0.0
        if kind == "path":
            return 1.0 if self.path_tables[idx - self.n_od] is not None else 0.0
        s = idx - self.n_od - self.n_path
        a = 1.0 if self.seg_ll_tables[s] is not None else 0.0
        b = 1.0 if self.seg_pl_tables[s] is not None else 0.0
        return self.epsilon * a + (1.0 - self.epsilon) * b

    def sample_depth_first(self, idx: int, rng: np.random.Generator) -> int | None:
        """Draw the next node from the renormalized depth-first row of ``idx``."""
        kind = self.kinds[idx]
        if kind == "od":
            t = self.od_tables[idx]
            return None if t is None else int(t.sample(rng))
        if kind == "path":
            t = self.path_tables[idx - self.n_od]
            return None if t is None else int(t.sample(rng))
        s = idx - self.n_od - self.n_path
        ll, pl = self.seg_ll_tables[s], self.seg_pl_tables[s]
        a = self.epsilon * (ll is not None)
        b = (1.0 - self.epsilon) * (pl is not None)
        total = a + b
        if total <= 0:
            return None
        if rng.random() < a / total:
            return int(ll.sample(rng))
        return int(pl.sample(rng))

    # -- attribute-graph rows -----------------------------------------------

    def sample_attribute(self, kind: str, entity_local: int, rng: np.random.Generator) -> int:
        return int(self.attr_tables[kind][entity_local].sample(rng))

    def entity_table(self, kind: str, attr_ix: int, value: float) -> AliasTable:
        key = (kind, attr_ix, float(value))
        table = self._entity_table_cache.get(key)
        if table is None:
            a = self.ags[kind].a_bar[attr_ix]
            weights = 1.0 - np.abs(a - value)
            table = AliasTable(np.arange(len(a)), weights)
            self._entity_table_cache[key] = table
        return table

    def sample_entity(self, kind: str, attr_ix: int, entity_local: int, rng: np.random.Generator) -> int:
        value = self.ags[kind].a_bar[attr_ix, entity_local]
        return int(self.entity_table(kind, attr_ix, value).sample(rng))

    # -- token helpers --------------------------------------------------------

    def token_of(self, idx: int) -> WalkToken:
        kind = self.kinds[idx]
        return WalkToken(kind=kind, type_tag=TYPE_TAG[kind], id=self.nodes[idx])

    def index_of(self, token: WalkToken) -> int:
        return self.node_index[(token.kind, token.id)]

    def local_of(self, idx: int) -> tuple[str, int]:
        kind = self.kinds[idx]
        if kind == "od":
            return kind, idx
        if kind == "path":
            return kind, idx - self.n_od
        return kind, idx - self.n_od - self.n_path


def build_sampler(tg: TripGraph, kernels: NormalizedKernels, ags: dict[str, AttributeGuidedGraph], cfg: WalkConfig) -> AliasSampler:
    return AliasSampler(tg, kernels, ags, cfg)


# ---------------------------------------------------------------------------
# Walk steps


def tg_step(current: WalkToken, predecessor: WalkToken | None, sampler: AliasSampler, cfg: WalkConfig, rng: np.random.Generator) -> WalkToken:
    """One trip-graph move; raises :class:`DeadEndError` when no mass remains.

    With no predecessor the pure depth-first row applies. Otherwise the two
    row masses are blended with beta and the winning component's renormalized
    row is sampled - exactly the renormalized mixture distribution.
    """
    cur_ix = sampler.index_of(current)
    m_cur = sampler.row_mass(cur_ix)
    if predecessor is None:
        if m_cur <= 0:
            raise DeadEndError(f"no trip-graph transition out of {current.id}")
        return sampler.token_of(sampler.sample_depth_first(cur_ix, rng))

    pred_ix = sampler.index_of(predecessor)
    m_pred = sampler.row_mass(pred_ix)
    total = cfg.beta * m_cur + (1.0 - cfg.beta) * m_pred
    if total <= 0:
        raise DeadEndError(f"no trip-graph transition out of {current.id} (predecessor {predecessor.id})")
    use_current = rng.random() < (cfg.beta * m_cur) / total
    nxt = sampler.sample_depth_first(cur_ix if use_current else pred_ix, rng)
    return sampler.token_of(nxt)


def ag_step(current: WalkToken, sampler: AliasSampler, rng: np.random.Generator) -> tuple[WalkToken, WalkToken]:
    """One entity -> attribute -> entity move within the current entity's type."""
    cur_ix = sampler.index_of(current)
    kind, local = sampler.local_of(cur_ix)
    ag = sampler.ags[kind]
    attr_ix = sampler.sample_attribute(kind, local, rng)
    attr_token = WalkToken(kind="attribute", type_tag=TYPE_TAG[kind], id=ag.attribute_nodes[attr_ix])
    ent_local = sampler.sample_entity(kind, attr_ix, local, rng)
    ent_id = ag.entity_nodes[ent_local]
    return attr_token, WalkToken(kind=kind, type_tag=TYPE_TAG[kind], id=ent_id)


def _bernoulli(rng: np.random.Generator, alpha: float) -> bool:
    return rng.random() < alpha


def walk_once(sampler: AliasSampler, cfg: WalkConfig, od_index: int, rng: np.random.Generator, iterations: int | None = None) -> list[WalkToken]:
    """A single walk starting at OD node ``od_index``.

    Runs ``len - 1`` iterations by default; an attribute move appends two
    tokens, so sequences may exceed ``len`` tokens. A dead end restarts the
    walk at its originating OD token.
    """
    origin = sampler.token_of(od_index)
    seq = [origin]
    current = origin
    predecessor: WalkToken | None = None
    steps = cfg.len - 1 if iterations is None else iterations
    for _ in range(steps):
        before = current
        if _bernoulli(rng, cfg.alpha):
            try:
                nxt = tg_step(current, predecessor, sampler, cfg, rng)
            except DeadEndError:
                nxt = origin
            seq.append(nxt)
            current = nxt
        else:
            attr_token, ent_token = ag_step(current, sampler, rng)
            seq.append(attr_token)
            seq.append(ent_token)
            current = ent_token
        predecessor = before
    return seq


def run_walks(sampler: AliasSampler, cfg: WalkConfig) -> WalkCorpus:
    """Sample ``num`` walks per OD node; each walk owns an rng derived from
    (seed, od index, walk index), so the corpus is independent of scheduling."""
    sequences = []
    for od_ix in range(sampler.n_od):
        for w in range(cfg.num):
            rng = np.random.default_rng((cfg.seed, od_ix, w))
            sequences.append(tuple(walk_once(sampler, cfg, od_ix, rng)))
    tg = sampler.tg
    prints = fingerprint_map(
        m_op=tg.m_op,
        m_pl=tg.m_pl,
        m_ll=tg.m_ll,
        ag_od=sampler.ags["od"].a_bar,
        ag_path=sampler.ags["path"].a_bar,
        ag_segment=sampler.ags["segment"].a_bar,
    )
    return WalkCorpus(sequences=tuple(sequences), config=cfg, fingerprints=prints)


# ---------------------------------------------------------------------------
# Corpus file format: one JSON header line, then one JSON array per sequence.


def save_corpus(corpus: WalkCorpus, path) -> None:
    import json

    cfg = corpus.config
    header = {
        "config": {"alpha": cfg.alpha, "beta": cfg.beta, "epsilon": cfg.epsilon, "num": cfg.num, "len": cfg.len, "seed": cfg.seed},
        "fingerprints": corpus.fingerprints,
        "n_sequences": len(corpus.sequences),
    }
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for seq in corpus.sequences:
            f.write(json.dumps([{"kind": t.kind, "type_tag": t.type_tag, "id": t.id} for t in seq]) + "\n")


def load_corpus(path) -> WalkCorpus:
    import json

    with open(path, encoding="utf-8") as f:
        header = json.loads(f.readline())
        sequences = []
        for line in f:
            toks = json.loads(line)
            sequences.append(tuple(WalkToken(kind=t["kind"], type_tag=t["type_tag"], id=t["id"]) for t in toks))
    c = header["config"]
    cfg = WalkConfig(alpha=c["alpha"], beta=c["beta"], epsilon=c["epsilon"], num=c["num"], len=c["len"], seed=c["seed"])
    if len(sequences) != header["n_sequences"]:
        raise IOError(f"corpus file truncated: header says {header['n_sequences']} sequences, found {len(sequences)}")
    return WalkCorpus(sequences=tuple(sequences), config=cfg, fingerprints=header.get("fingerprints", {}))
