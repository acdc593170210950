"""Sequence encoder and per-segment bag aggregation.

Walk tokens are featurized from the attribute-guided graphs (entities get
their normalized attribute column, attribute tokens a one-hot over their
type's attribute set), projected into a shared width by per-kind linear maps,
position-encoded, and run through a pre-norm Transformer encoder. Every
occurrence of a segment across the corpus contributes one context embedding
to that segment's bag; attention-weighted pooling collapses the bag into the
segment representation:

    h_i = sum_b softmax_b(w1^T tanh(W2 h_{i,b})) * h_{i,b}
"""

from __future__ import annotations

import io
import json
import math
import struct
import warnings
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .tripgraph import AttributeGuidedGraph
from .walks import WalkCorpus, WalkToken

PROJECTION_KEYS = ("od", "path", "segment", "attr_o", "attr_p", "attr_l")
_ATTR_KEY = {"o": "attr_o", "p": "attr_p", "l": "attr_l"}
_ENTITY_AG = {"od": "od", "path": "path", "segment": "segment"}
_TAG_TO_AG = {"o": "od", "p": "path", "l": "segment"}


@dataclass(frozen=True)
class EncoderConfig:
    d_model: int = 64
    n_layers: int = 6
    n_heads: int = 8
    d_ff: int = 256
    dropout_rate: float = 0.1
    max_seq_tokens: int = 40

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.max_seq_tokens < 1:
            raise ValueError("max_seq_tokens must be >= 1")


class Featurizer:
    """Token -> raw feature vector, plus batch assembly for a whole corpus."""

    def __init__(self, ags: dict[str, AttributeGuidedGraph]):
        self.ags = ags
        self.entity_index = {
            kind: {e: i for i, e in enumerate(ag.entity_nodes)} for kind, ag in ags.items()
        }
        self.attr_index = {
            kind: {a: i for i, a in enumerate(ag.attribute_nodes)} for kind, ag in ags.items()
        }
        self.dims = {
            "od": len(ags["od"].attribute_nodes),
            "path": len(ags["path"].attribute_nodes),
            "segment": len(ags["segment"].attribute_nodes),
            "attr_o": len(ags["od"].attribute_nodes),
            "attr_p": len(ags["path"].attribute_nodes),
            "attr_l": len(ags["segment"].attribute_nodes),
        }

    def projection_key(self, token: WalkToken) -> str:
        if token.kind == "attribute":
            return _ATTR_KEY[token.type_tag]
        return token.kind

    def featurize_token(self, token: WalkToken) -> np.ndarray:
        ag = self.ags[_TAG_TO_AG[token.type_tag]]
        if token.kind == "attribute":
            ix = self.attr_index[ag.node_type].get(token.id)
            if ix is None:
                raise KeyError(f"unknown attribute token {token.id!r} for type {token.type_tag}")
            vec = np.zeros(len(ag.attribute_nodes))
            vec[ix] = 1.0
            return vec
        ix = self.entity_index[ag.node_type].get(token.id)
        if ix is None:
            raise KeyError(f"unknown {token.kind} token {token.id!r}")
        return ag.a_bar[:, ix].copy()


@dataclass
class CorpusBatch:
    """Featurized, padded corpus ready for repeated encoder passes."""

    n_seqs: int
    max_len: int
    pad_mask: torch.Tensor  # (B, L) True where padded
    kind_slots: dict[str, tuple[torch.Tensor, torch.Tensor]]  # key -> (flat indices, features)
    segment_slots: dict[str, list[tuple[int, int]]]  # segment id -> [(seq, pos)]
    token_count: int = 0
    truncated: int = 0


def build_corpus_batch(corpus: WalkCorpus, featurizer: Featurizer, max_seq_tokens: int, dtype=torch.float32) -> CorpusBatch:
    if not corpus.sequences:
        raise ValueError("walk corpus is empty; nothing to encode")
    seqs = [seq[:max_seq_tokens] for seq in corpus.sequences]
    truncated = sum(1 for seq in corpus.sequences if len(seq) > max_seq_tokens)
    if truncated:
        warnings.warn(f"{truncated} sequence(s) longer than {max_seq_tokens} tokens were truncated")
    B = len(seqs)
    L = max(len(s) for s in seqs)
    pad_mask = torch.ones((B, L), dtype=torch.bool)
    per_kind_ix: dict[str, list[int]] = {k: [] for k in PROJECTION_KEYS}
    per_kind_feat: dict[str, list[np.ndarray]] = {k: [] for k in PROJECTION_KEYS}
    segment_slots: dict[str, list[tuple[int, int]]] = {}
    count = 0
    for b, seq in enumerate(seqs):
        for t, token in enumerate(seq):
            pad_mask[b, t] = False
            key = featurizer.projection_key(token)
            per_kind_ix[key].append(b * L + t)
            per_kind_feat[key].append(featurizer.featurize_token(token))
            if token.kind == "segment":
                segment_slots.setdefault(token.id, []).append((b, t))
            count += 1
    kind_slots = {}
    for key in PROJECTION_KEYS:
        if per_kind_ix[key]:
            kind_slots[key] = (
                torch.tensor(per_kind_ix[key], dtype=torch.long),
                torch.tensor(np.stack(per_kind_feat[key]), dtype=dtype),
            )
    return CorpusBatch(B, L, pad_mask, kind_slots, segment_slots, count, truncated)


def sinusoidal_positions(length: int, d_model: int, dtype=torch.float32) -> torch.Tensor:
    pos = torch.arange(length, dtype=torch.float64).unsqueeze(1)
    div = torch.exp(torch.arange(0, d_model, 2, dtype=torch.float64) * (-math.log(10000.0) / d_model))
    pe = torch.zeros(length, d_model, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(pos * div)
    pe[:, 1::2] = torch.cos(pos * div)
    return pe.to(dtype)


class SequenceEncoder(nn.Module):
    """Per-kind input projections + sinusoidal positions + pre-norm Transformer."""

    def __init__(self, cfg: EncoderConfig, feature_dims: dict[str, int]):
        super().__init__()
        self.cfg = cfg
        self.projections = nn.ModuleDict(
            {key: nn.Linear(feature_dims[key], cfg.d_model) for key in PROJECTION_KEYS}
        )
        layer = nn.TransformerEncoderLayer(
            d_model=cfg.d_model,
            nhead=cfg.n_heads,
            dim_feedforward=cfg.d_ff,
            dropout=cfg.dropout_rate,
            batch_first=True,
            norm_first=True,
        )
        self.encoder = nn.TransformerEncoder(
            layer, num_layers=cfg.n_layers, norm=nn.LayerNorm(cfg.d_model), enable_nested_tensor=False
        )

    def forward(self, batch: CorpusBatch) -> torch.Tensor:
        ref = next(self.parameters())
        x = torch.zeros(batch.n_seqs * batch.max_len, self.cfg.d_model, dtype=ref.dtype, device=ref.device)
        for key, (flat_ix, feats) in batch.kind_slots.items():
            x[flat_ix] = self.projections[key](feats.to(ref.dtype))
        x = x.view(batch.n_seqs, batch.max_len, self.cfg.d_model)
        x = x + sinusoidal_positions(batch.max_len, self.cfg.d_model, dtype=ref.dtype).unsqueeze(0)
        return self.encoder(x, src_key_padding_mask=batch.pad_mask)


class AmilPooling(nn.Module):
    """Attention pooling over a segment's bag of context embeddings."""

    def __init__(self, d_model: int, d_attn: int | None = None):
        super().__init__()
        d_attn = d_model if d_attn is None else d_attn
        self.w1 = nn.Linear(d_attn, 1, bias=False)
        self.w2 = nn.Linear(d_model, d_attn, bias=False)

    def attention_weights(self, bag: torch.Tensor) -> torch.Tensor:
        logits = self.w1(torch.tanh(self.w2(bag))).squeeze(-1)
        return torch.softmax(logits, dim=-1)

    def forward(self, bag: torch.Tensor) -> torch.Tensor:
        if bag.shape[0] == 0:
            raise ValueError("cannot aggregate an empty bag")
        w = self.attention_weights(bag)
        return w @ bag


def collect_bags(batch: CorpusBatch, encoded: torch.Tensor) -> dict[str, torch.Tensor]:
    """Bag of context embeddings per segment id that occurs in the corpus."""
    bags = {}
    for seg_id, slots in batch.segment_slots.items():
        rows = torch.stack([encoded[b, t] for b, t in slots])
        bags[seg_id] = rows
    return bags


def coverage_report(batch: CorpusBatch, all_segment_ids) -> dict:
    covered = set(batch.segment_slots)
    missing = sorted(set(all_segment_ids) - covered)
    return {"covered": len(covered), "missing": missing, "total_occurrences": sum(len(v) for v in batch.segment_slots.values())}


# ---------------------------------------------------------------------------
# Checkpoint container: JSON header + named float32 little-endian tensors.

_MAGIC = b"RRCHKPT1"


def save_checkpoint(path, state_dict: dict[str, torch.Tensor], header_extra: dict | None = None) -> None:
    tensors = []
    payload = io.BytesIO()
    offset = 0
    for name in sorted(state_dict):
        t = state_dict[name].detach().cpu().to(torch.float32).contiguous()
        raw = t.numpy().astype("<f4", copy=False).tobytes()
        tensors.append({"name": name, "shape": list(t.shape), "offset": offset, "nbytes": len(raw)})
        payload.write(raw)
        offset += len(raw)
    header = {"tensors": tensors, "extra": header_extra or {}}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(payload.getvalue())


def load_checkpoint(path) -> tuple[dict[str, torch.Tensor], dict]:
    with open(path, "rb") as f:
        magic = f.read(len(_MAGIC))
        if magic != _MAGIC:
            raise IOError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
        data = f.read()
    state = {}
    for rec in header["tensors"]:
        raw = data[rec["offset"] : rec["offset"] + rec["nbytes"]]
        arr = np.frombuffer(raw, dtype="<f4").reshape(rec["shape"]).copy()
        state[rec["name"]] = torch.from_numpy(arr)
    return state, header["extra"]
