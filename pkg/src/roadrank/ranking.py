"""Listwise scoring and end-to-end training.

A two-layer head maps each aggregated segment embedding to a scalar score.
Training draws lists of K distinct segments per epoch and minimizes the KL
divergence between the softmax of the (per-list standardized) ground-truth
importance scores and the softmax of the predicted scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .encoder import AmilPooling, CorpusBatch, EncoderConfig, Featurizer, SequenceEncoder, build_corpus_batch, collect_bags
from .tripgraph import AttributeGuidedGraph
from .walks import WalkCorpus

DEAD_END_SCORE = float("-inf")


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    k_list: int = 5
    lists_per_epoch: int = 64
    epochs: int = 50
    learning_rate: float = 1e-3
    dropout_rate: float = 0.5
    seed: int = 0
    train_fraction: float = 0.7
    lr_decay: float = 1.0  # per-epoch multiplicative factor; 1.0 keeps the rate constant
    average_last_epochs: int = 0  # 0: keep final weights; k: average the last k epochs' weights

    def __post_init__(self):
        if self.k_list < 2:
            raise ValueError("k_list must be >= 2")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must lie in (0, 1]")
        if self.average_last_epochs < 0 or self.average_last_epochs > self.epochs:
            raise ValueError("average_last_epochs must lie in [0, epochs]")


@dataclass(frozen=True)
class ListSample:
    segment_ids: tuple[str, ...]
    gt_scores: tuple[float, ...]

    def __post_init__(self):
        if len(self.segment_ids) < 2:
            raise ValueError("a ranking list needs at least 2 segments")
        if len(set(self.segment_ids)) != len(self.segment_ids):
            raise ValueError("ranking list ids must be distinct")


class RankingHead(nn.Module):
    def __init__(self, d_model: int, d_hidden: int | None = None, dropout_rate: float = 0.5):
        super().__init__()
        d_hidden = d_model if d_hidden is None else d_hidden
        if d_hidden <= 0:
            raise ValueError("d_hidden must be > 0")
        self.layer1 = nn.Linear(d_model, d_hidden)
        self.dropout = nn.Dropout(dropout_rate)
        self.layer2 = nn.Linear(d_hidden, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.layer2(self.dropout(torch.relu(self.layer1(x)))).squeeze(-1)


def score_list(embeddings: torch.Tensor, head: RankingHead, mode: str = "eval") -> torch.Tensor:
    """Score each of the K rows independently; dropout only active in train mode."""
    head.train(mode == "train")
    return head(embeddings)


def standardize(values: torch.Tensor) -> torch.Tensor:
    """Zero mean, unit variance; a constant vector maps to all zeros."""
    mean = values.mean()
    std = values.std(unbiased=False)
    if float(std) < 1e-12:
        return torch.zeros_like(values)
    return (values - mean) / std


def kl_list_loss(gt_scores: torch.Tensor, pred_scores: torch.Tensor) -> torch.Tensor:
    """KL divergence from softmax(standardized gt) to softmax(pred); >= 0, and 0
    exactly when the two softmax distributions coincide."""
    gt = torch.as_tensor(gt_scores, dtype=pred_scores.dtype if isinstance(pred_scores, torch.Tensor) else torch.get_default_dtype())
    pred = torch.as_tensor(pred_scores)
    y = torch.softmax(standardize(gt), dim=-1)
    log_yhat = torch.log_softmax(pred, dim=-1)
    return (y * (torch.log(y) - log_yhat)).sum()


class RankingModel(nn.Module):
    """Encoder + bag pooling + scoring head; the full trainable pipeline."""

    def __init__(self, encoder_cfg: EncoderConfig, feature_dims: dict[str, int], dropout_rate: float = 0.5, d_hidden: int | None = None):
        super().__init__()
        self.encoder = SequenceEncoder(encoder_cfg, feature_dims)
        self.pool = AmilPooling(encoder_cfg.d_model)
        self.head = RankingHead(encoder_cfg.d_model, d_hidden=d_hidden, dropout_rate=dropout_rate)

    def segment_embeddings(self, batch: CorpusBatch, ids=None) -> dict[str, torch.Tensor]:
        encoded = self.encoder(batch)
        bags = collect_bags(batch, encoded)
        wanted = bags.keys() if ids is None else ids
        return {s: self.pool(bags[s]) for s in sorted(wanted) if s in bags}

    def segment_scores(self, batch: CorpusBatch, ids=None) -> dict[str, torch.Tensor]:
        embs = self.segment_embeddings(batch, ids)
        order = sorted(embs)
        if not order:
            return {}
        scores = self.head(torch.stack([embs[s] for s in order]))
        return {s: scores[i] for i, s in enumerate(order)}


def split_segments(segment_ids, train_fraction: float, seed: int) -> tuple[list[str], list[str]]:
    """Seeded 70/30-style split over all segments; returns (train, test) sorted."""
    ids = sorted(segment_ids)
    if len(ids) < 2:
        raise ValueError("need at least 2 segments to split")
    rng = np.random.default_rng((seed, 1315423911))
    perm = rng.permutation(len(ids))
    n_train = min(len(ids) - 1, max(1, round(train_fraction * len(ids))))
    train = sorted(ids[i] for i in perm[:n_train])
    test = sorted(ids[i] for i in perm[n_train:])
    return train, test


def _epoch_seed(seed: int, epoch: int) -> tuple[int, int, int]:
    return (seed, 0x5EED, epoch)


def build_training_lists(train_ids, gt_map: dict[str, float], cfg: TrainConfig, epoch_seed) -> list[ListSample]:
    """``lists_per_epoch`` lists of ``k_list`` distinct segments, uniform without
    replacement within each list; deterministic for a fixed epoch seed."""
    ids = sorted(train_ids)
    if len(ids) < cfg.k_list:
        raise ValueError(f"train split has {len(ids)} segments, need at least k_list={cfg.k_list}")
    rng = np.random.default_rng(epoch_seed)
    out = []
    for _ in range(cfg.lists_per_epoch):
        pick = rng.choice(len(ids), size=cfg.k_list, replace=False)
        chosen = tuple(ids[i] for i in pick)
        out.append(ListSample(segment_ids=chosen, gt_scores=tuple(gt_map[s] for s in chosen)))
    return out


@dataclass
class TrainResult:
    model: RankingModel
    batch: CorpusBatch
    featurizer: Featurizer
    loss_curve: list[float]
    train_ids: list[str]
    test_ids: list[str]
    covered_ids: list[str]
    encoder_cfg: EncoderConfig = None
    train_cfg: TrainConfig = None


def train(
    corpus: WalkCorpus,
    ags: dict[str, AttributeGuidedGraph],
    gt_map: dict[str, float],
    encoder_cfg: EncoderConfig,
    train_cfg: TrainConfig,
) -> TrainResult:
    """End-to-end optimization with Adam; identical seeds give identical curves.

    The train/test split covers every segment; training lists are drawn from
    train-split segments that actually occur in the corpus. A non-finite loss
    aborts immediately with the offending epoch in the message.
    """
    torch.manual_seed(train_cfg.seed)
    featurizer = Featurizer(ags)
    batch = build_corpus_batch(corpus, featurizer, encoder_cfg.max_seq_tokens)
    covered = sorted(batch.segment_slots)
    train_ids, test_ids = split_segments(gt_map.keys(), train_cfg.train_fraction, train_cfg.seed)
    trainable = [s for s in train_ids if s in batch.segment_slots]

    model = RankingModel(encoder_cfg, featurizer.dims, dropout_rate=train_cfg.dropout_rate)
    opt = torch.optim.Adam(model.parameters(), lr=train_cfg.learning_rate, betas=(0.9, 0.999), eps=1e-8)

    curve: list[float] = []
    averaged: dict[str, torch.Tensor] | None = None
    averaged_count = 0
    for epoch in range(1, train_cfg.epochs + 1):
        lists = build_training_lists(trainable, gt_map, train_cfg, _epoch_seed(train_cfg.seed, epoch))
        needed = sorted({s for ls in lists for s in ls.segment_ids})
        model.train()
        embs = model.segment_embeddings(batch, needed)
        total = torch.zeros((), dtype=next(model.parameters()).dtype)
        for ls in lists:
            stacked = torch.stack([embs[s] for s in ls.segment_ids])
            pred = model.head(stacked)
            total = total + kl_list_loss(torch.tensor(ls.gt_scores, dtype=pred.dtype), pred)
        mean_loss = total / len(lists)
        value = float(mean_loss.detach())
        if not math.isfinite(value):
            raise TrainingDivergedError(f"non-finite loss {value} at epoch {epoch} (lr={train_cfg.learning_rate})")
        opt.zero_grad()
        mean_loss.backward()
        opt.step()
        if train_cfg.lr_decay < 1.0:
            for group in opt.param_groups:
                group["lr"] = train_cfg.learning_rate * train_cfg.lr_decay**epoch
        curve.append(value)
        if train_cfg.average_last_epochs and epoch > train_cfg.epochs - train_cfg.average_last_epochs:
            state = model.state_dict()
            if averaged is None:
                averaged = {k: v.detach().clone() for k, v in state.items()}
            else:
                for k, v in state.items():
                    averaged[k] += v.detach()
            averaged_count += 1

    if averaged is not None:
        model.load_state_dict({k: v / averaged_count for k, v in averaged.items()})
    model.eval()
    return TrainResult(model, batch, featurizer, curve, train_ids, test_ids, covered, encoder_cfg, train_cfg)


def predict_full_ranking(model: RankingModel, batch: CorpusBatch, all_segment_ids) -> list[tuple[str, float]]:
    """Descending-score order over all segments; ties break by ascending id;
    segments absent from the corpus trail the list with a -inf sentinel."""
    model.eval()
    with torch.no_grad():
        scores = {s: float(v) for s, v in model.segment_scores(batch).items()}
    ranked = sorted(scores, key=lambda s: (-scores[s], s))
    dead = sorted(s for s in all_segment_ids if s not in scores)
    return [(s, scores[s]) for s in ranked] + [(s, DEAD_END_SCORE) for s in dead]
