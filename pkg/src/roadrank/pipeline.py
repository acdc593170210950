"""Pipeline stages, the verification battery, and parameter sweeps.

Each stage writes its artifact plus a provenance sidecar (artifact hash and
input hashes). Consuming a stage's artifact re-checks its hash, so corruption
between stages is caught and attributed to the producing stage.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import chain, metrics
from .artifacts import array_fingerprint, check_provenance, dump_json, sha256_file, write_provenance
from .cascade import ground_truth_table
from .config import RunConfig
from .encoder import load_checkpoint, save_checkpoint
from .network import DatasetBundle
from .ranking import (
    DEAD_END_SCORE,
    RankingModel,
    TrainResult,
    predict_full_ranking,
    train,
)
from .tripgraph import (
    AttributeGuidedGraph,
    TripGraph,
    build_attribute_graphs,
    build_trip_graph,
    check_trip_graph,
    normalize_kernels,
)
from .walks import build_sampler, load_corpus, run_walks, save_corpus


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


def dataset_hashes(data_dir: str | Path) -> dict[str, str]:
    data_dir = Path(data_dir)
    return {name: sha256_file(data_dir / name) for name in ("network.json", "od.json", "paths.json")}


# ---------------------------------------------------------------------------
# Graph stage


def stage_build_graphs(bundle: DatasetBundle, cfg: RunConfig, out: Path, data_inputs: dict[str, str], dump_csv: bool = False):
    tg = build_trip_graph(bundle, cfg["decay_base"])
    problems = check_trip_graph(tg)
    if problems:
        raise StageError("build-graphs", "; ".join(problems))
    kernels = normalize_kernels(tg)
    ags = build_attribute_graphs(bundle, tg)

    gdir = out / "graphs"
    gdir.mkdir(parents=True, exist_ok=True)
    arrays = {
        "m_op": tg.m_op,
        "m_pl": tg.m_pl,
        "m_ll": tg.m_ll,
        "ag_od": ags["od"].a_bar,
        "ag_path": ags["path"].a_bar,
        "ag_segment": ags["segment"].a_bar,
    }
    for name, arr in arrays.items():
        np.save(gdir / f"{name}.npy", arr)
    meta = {
        "decay_base": tg.decay_base,
        "od_nodes": list(tg.od_nodes),
        "path_nodes": list(tg.path_nodes),
        "segment_nodes": list(tg.segment_nodes),
        "attr_names": {k: list(ags[k].attribute_nodes) for k in ("od", "path", "segment")},
        "dead_end_segments": list(kernels.dead_end_segments),
        "dead_end_ods": list(kernels.dead_end_ods),
        "array_hashes": {name: array_fingerprint(arr) for name, arr in sorted(arrays.items())},
    }
    dump_json(gdir / "meta.json", meta)
    write_provenance(gdir / "meta.json", data_inputs)

    if dump_csv:
        for name, arr in arrays.items():
            rows_ids, cols_ids = _axis_ids(name, tg, ags)
            with open(gdir / f"{name}.csv", "w", newline="", encoding="utf-8") as f:
                w = csv.writer(f)
                w.writerow(["row_id", "col_id", "value"])
                for i, j in zip(*np.nonzero(arr)):
                    w.writerow([rows_ids[i], cols_ids[j], repr(float(arr[i, j]))])
    return tg, kernels, ags


def _axis_ids(name: str, tg: TripGraph, ags):
    axes = {
        "m_op": (tg.od_nodes, tg.path_nodes),
        "m_pl": (tg.path_nodes, tg.segment_nodes),
        "m_ll": (tg.segment_nodes, tg.segment_nodes),
        "ag_od": (ags["od"].attribute_nodes, tg.od_nodes),
        "ag_path": (ags["path"].attribute_nodes, tg.path_nodes),
        "ag_segment": (ags["segment"].attribute_nodes, tg.segment_nodes),
    }
    return axes[name]


def load_graphs(out: Path):
    gdir = out / "graphs"
    meta_path = gdir / "meta.json"
    try:
        check_provenance(meta_path)
        with open(meta_path, encoding="utf-8") as f:
            meta = json.load(f)
        arrays = {name: np.load(gdir / f"{name}.npy") for name in meta["array_hashes"]}
        for name, arr in arrays.items():
            if array_fingerprint(arr) != meta["array_hashes"][name]:
                raise IOError(f"graphs/{name}.npy does not match its recorded hash")
    except (OSError, json.JSONDecodeError, KeyError) as e:
        raise StageError("build-graphs", f"graph artifacts unreadable or corrupted: {e}") from e
    tg = TripGraph(
        od_nodes=tuple(meta["od_nodes"]),
        path_nodes=tuple(meta["path_nodes"]),
        segment_nodes=tuple(meta["segment_nodes"]),
        m_op=arrays["m_op"],
        m_pl=arrays["m_pl"],
        m_ll=arrays["m_ll"],
        decay_base=meta["decay_base"],
    )
    kernels = normalize_kernels(tg)
    ags = {
        k: AttributeGuidedGraph(
            node_type=k,
            entity_nodes=tuple(meta[f"{k}_nodes"]),
            attribute_nodes=tuple(meta["attr_names"][k]),
            a_bar=arrays[f"ag_{k}"],
        )
        for k in ("od", "path", "segment")
    }
    return tg, kernels, ags


# ---------------------------------------------------------------------------
# Walk stage


def stage_walk(tg, kernels, ags, cfg: RunConfig, out: Path, data_inputs: dict[str, str]):
    sampler = build_sampler(tg, kernels, ags, cfg.walk_config())
    corpus = run_walks(sampler, cfg.walk_config())
    path = out / "walks.jsonl"
    save_corpus(corpus, path)
    write_provenance(path, {**data_inputs, **{f"graph:{k}": v for k, v in corpus.fingerprints.items()}})
    return sampler, corpus


def load_walks(out: Path):
    path = out / "walks.jsonl"
    try:
        check_provenance(path)
        return load_corpus(path)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as e:
        raise StageError("walk", f"walk corpus unreadable or corrupted: {e}") from e


# ---------------------------------------------------------------------------
# Ground-truth stage


def stage_ground_truth(bundle: DatasetBundle, cfg: RunConfig, out: Path, data_inputs: dict[str, str]) -> dict[str, float]:
    sim = cfg.sim_config()
    table = ground_truth_table(bundle, sim)
    path = out / "ground_truth.csv"
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["segment_id", "IS"])
        for s in bundle.network.segments:
            w.writerow([s, repr(table[s])])
    dump_json(
        out / "ground_truth.config.json",
        {
            "speed_factor": sim.speed_factor,
            "fail_threshold": sim.fail_threshold,
            "overload_ratio": sim.overload_ratio,
            "horizon_T": sim.horizon_T,
            "gamma": sim.gamma,
        },
    )
    write_provenance(path, data_inputs)
    return table


def load_ground_truth(out: Path) -> dict[str, float]:
    path = out / "ground_truth.csv"
    try:
        check_provenance(path)
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
        return {r["segment_id"]: float(r["IS"]) for r in rows}
    except (OSError, KeyError, ValueError) as e:
        raise StageError("ground-truth", f"ground truth unreadable or corrupted: {e}") from e


# ---------------------------------------------------------------------------
# Training / ranking / evaluation stages


def stage_train(corpus, ags, gt_map, cfg: RunConfig, out: Path, data_inputs: dict[str, str]) -> TrainResult:
    result = train(corpus, ags, gt_map, cfg.encoder_config(), cfg.train_config())
    header = {
        "encoder_cfg": {
            "d_model": cfg["encoder.d_model"],
            "n_layers": cfg["encoder.n_layers"],
            "n_heads": cfg["encoder.n_heads"],
            "d_ff": cfg["encoder.d_ff"],
            "dropout_rate": cfg["encoder.dropout"],
            "max_seq_tokens": cfg.encoder_config().max_seq_tokens,
        },
        "train_cfg": {
            "k_list": cfg["train.k_list"],
            "lists_per_epoch": cfg["train.lists_per_epoch"],
            "epochs": cfg["train.epochs"],
            "learning_rate": cfg["train.lr"],
            "dropout_rate": cfg["train.dropout"],
            "seed": cfg["train.seed"],
            "train_fraction": cfg["train.fraction"],
        },
        "feature_dims": result.featurizer.dims,
        "head_dropout": cfg["train.dropout"],
        "train_ids": result.train_ids,
        "test_ids": result.test_ids,
        "covered_ids": result.covered_ids,
        "final_loss": result.loss_curve[-1] if result.loss_curve else None,
    }
    ckpt = out / "checkpoint.bin"
    save_checkpoint(ckpt, result.model.state_dict(), header)
    write_provenance(ckpt, data_inputs)
    with open(out / "loss_curve.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "mean_loss"])
        for i, v in enumerate(result.loss_curve, start=1):
            w.writerow([i, repr(v)])
    return result


def load_model(out: Path):
    try:
        check_provenance(out / "checkpoint.bin")
        state, header = load_checkpoint(out / "checkpoint.bin")
    except (OSError, KeyError, ValueError) as e:
        raise StageError("train", f"checkpoint unreadable or corrupted: {e}") from e
    from .encoder import EncoderConfig

    enc = EncoderConfig(**header["encoder_cfg"])
    model = RankingModel(enc, header["feature_dims"], dropout_rate=header["head_dropout"])
    model.load_state_dict(state)
    model.eval()
    return model, enc, header


def stage_rank(model, batch, all_segment_ids, out: Path, data_inputs: dict[str, str]):
    ranking = predict_full_ranking(model, batch, all_segment_ids)
    path = out / "ranking.csv"
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["rank", "segment_id", "score"])
        for rank, (seg, score) in enumerate(ranking, start=1):
            w.writerow([rank, seg, repr(score)])
    write_provenance(path, data_inputs)
    return ranking


def load_ranking(out: Path) -> list[tuple[str, float]]:
    path = out / "ranking.csv"
    try:
        check_provenance(path)
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
        return [(r["segment_id"], float(r["score"])) for r in rows]
    except (OSError, KeyError, ValueError) as e:
        raise StageError("rank", f"ranking unreadable or corrupted: {e}") from e


def stage_evaluate(ranking, gt_map, test_ids, cfg: RunConfig, out: Path, data_inputs: dict[str, str]) -> dict:
    report = evaluate_split(ranking, gt_map, test_ids, ndcg_k=cfg["eval.ndcg_k"] or None)
    path = out / "metrics.json"
    dump_json(path, report)
    write_provenance(path, data_inputs)
    return report


def evaluate_split(ranking, gt_map, ids, ndcg_k: int | None = None) -> dict:
    scores = dict(ranking)
    ids = sorted(ids)
    pair = metrics.make_pair(ids, [gt_map[s] for s in ids], [scores.get(s, DEAD_END_SCORE) for s in ids])
    return metrics.metrics_report(pair, ndcg_k)


# ---------------------------------------------------------------------------
# In-memory pipeline (used by sweeps and by the test harness)


@dataclass
class PipelineResult:
    result: TrainResult
    ranking: list[tuple[str, float]]
    report: dict
    gt_map: dict[str, float]


def run_pipeline_in_memory(bundle: DatasetBundle, cfg: RunConfig, gt_map: dict[str, float] | None = None) -> PipelineResult:
    tg = build_trip_graph(bundle, cfg["decay_base"])
    kernels = normalize_kernels(tg)
    ags = build_attribute_graphs(bundle, tg)
    sampler = build_sampler(tg, kernels, ags, cfg.walk_config())
    corpus = run_walks(sampler, cfg.walk_config())
    if gt_map is None:
        gt_map = ground_truth_table(bundle, cfg.sim_config())
    result = train(corpus, ags, gt_map, cfg.encoder_config(), cfg.train_config())
    ranking = predict_full_ranking(result.model, result.batch, bundle.network.segments)
    report = evaluate_split(ranking, gt_map, result.test_ids, ndcg_k=cfg["eval.ndcg_k"] or None)
    return PipelineResult(result, ranking, report, gt_map)


def sweep(bundle: DatasetBundle, cfg: RunConfig, param: str, values: list[float], gt_map: dict[str, float] | None = None) -> list[dict]:
    from .config import DEFAULTS, ConfigError

    if param not in DEFAULTS:
        raise ConfigError(f"unknown sweep parameter {param!r}")
    if gt_map is None:
        gt_map = ground_truth_table(bundle, cfg.sim_config())
    rows = []
    for v in values:
        point = RunConfig(values=dict(cfg.values))
        point.set(param, v)
        res = run_pipeline_in_memory(bundle, point, gt_map=gt_map)
        rows.append(
            {
                "param": param,
                "value": point[param],
                "kendall_tau": res.report["kendall_tau"],
                "ndcg": res.report["ndcg_at_k"],
                "emd": res.report["emd"],
                "diff": res.report["diff"],
            }
        )
    return rows


# ---------------------------------------------------------------------------
# Verification battery


def verify_battery(bundle: DatasetBundle, cfg: RunConfig, chi_square_draws: int = 100_000, seed: int = 0) -> list[dict]:
    """Mechanical checks of the chain-level guarantees on one dataset.

    Returns one record per property; a dataset with dead-end segments or
    path-less ODs fails the connectivity precondition loudly rather than being
    silently patched.
    """
    from scipy import stats

    checks: list[dict] = []

    def record(name: str, passed: bool, detail: str):
        checks.append({"name": name, "passed": bool(passed), "detail": detail})

    tg = build_trip_graph(bundle, cfg["decay_base"])
    kernels = normalize_kernels(tg)
    ags = build_attribute_graphs(bundle, tg)
    wcfg = cfg.walk_config()

    # connectivity precondition: every segment rides some path, every OD has one
    dead = list(kernels.dead_end_segments) + list(kernels.dead_end_ods)
    record(
        "tg_connectivity",
        not dead,
        "no dead-end nodes" if not dead else f"dead-end nodes (reducible trip-graph support): {dead[:10]}",
    )

    # kernel row-sum audits
    sums_ok = True
    details = []
    for name, M, axis in (("m_op", tg.m_op, 1), ("m_pl_row", kernels.m_pl_row, 1), ("m_ll_row", kernels.m_ll_row, 1), ("m_pl_col", kernels.m_pl_col, 0)):
        s = M.sum(axis=axis)
        bad = np.abs(s[s > 0] - 1.0) > 1e-9
        if bad.any():
            sums_ok = False
            details.append(f"{name}: {int(bad.sum())} rows off")
    record("kernel_row_sums", sums_ok, "; ".join(details) if details else "all nonzero rows/cols sum to 1")

    # attribute-mediated two-step identity, unnormalized and normalized
    worst_u = worst_n = 0.0
    for ag in ags.values():
        a = ag.a_bar
        n_attr, n_ent = a.shape
        two_step_n = chain.ag_two_step_matrix(ag)
        col = a.sum(axis=0)
        for i in range(n_ent):
            unnorm = np.zeros(n_ent)
            norm = np.zeros(n_ent)
            for k in range(n_attr):
                simrow = 1.0 - np.abs(a[k] - a[k, i])
                unnorm += a[k, i] * simrow
                pk = (a[k, i] / col[i]) if col[i] > 0 else 1.0 / n_attr
                norm += pk * simrow / simrow.sum()
            worst_u = max(worst_u, float(np.abs(unnorm - chain.propagation_operator(ag, i)).max()))
            worst_n = max(worst_n, float(np.abs(norm - two_step_n[i]).max()))
    record("two_step_identity_unnormalized", worst_u < 1e-12, f"max |two-step - operator| = {worst_u:.2e}")
    record("two_step_identity_normalized", worst_n < 1e-12, f"max row error = {worst_n:.2e}")

    # ergodicity of the joint chain (OD nodes are start-only states)
    try:
        P = chain.joint_transition_matrix(tg, kernels, ags, wcfg.alpha, epsilon=wcfg.epsilon, node_cap=cfg["chain.node_cap"])
        od_ix = tuple(range(len(tg.od_nodes)))
        rep = chain.ergodicity_check(P, transient_start_states=od_ix)
        record("ergodicity", rep["irreducible"] and rep["aperiodic"], json.dumps(rep, sort_keys=True))

        rs = P.sum(axis=1)
        record("joint_row_sums", bool(np.abs(rs - 1.0).max() < 1e-9), f"max |row sum - 1| = {np.abs(rs - 1.0).max():.2e}")

        pi1 = chain.stationary_distribution(P, tol=1e-13)
        rng = np.random.default_rng(seed)
        start = rng.random(P.shape[0])
        pi2 = chain.stationary_distribution(P, tol=1e-13, start=start)
        l1 = float(np.abs(pi1 - pi2).sum())
        record("stationary_uniqueness", l1 < 1e-8, f"L1 distance between two starts = {l1:.2e}")
    except (chain.ChainSizeError, chain.ConvergenceError, ValueError) as e:
        record("ergodicity", False, str(e))

    # alias-table battery: empirical frequencies vs exact distributions
    sampler = build_sampler(tg, kernels, ags, wcfg)
    rng = np.random.default_rng(seed)
    tables = []
    if sampler.od_tables and sampler.od_tables[0] is not None:
        tables.append(("od_row", sampler.od_tables[0]))
    if sampler.path_tables and sampler.path_tables[0] is not None:
        tables.append(("path_row", sampler.path_tables[0]))
    for s in range(sampler.n_seg):
        if sampler.seg_ll_tables[s] is not None:
            tables.append(("segment_ll_row", sampler.seg_ll_tables[s]))
            break
    tables.append(("attr_row", sampler.attr_tables["segment"][0]))
    ok = True
    details = []
    for name, table in tables:
        dist = table.implied_distribution()
        if len(dist) == 1:
            continue
        draws = np.fromiter((np.searchsorted(table.outcomes, table.sample(rng)) for _ in range(chi_square_draws)), dtype=np.int64, count=chi_square_draws)
        observed = np.bincount(draws, minlength=len(dist)).astype(float)
        expected = dist * chi_square_draws
        zero = expected == 0
        if observed[zero].sum() > 0:
            ok = False
            details.append(f"{name}: drew an outcome with zero probability")
            continue
        observed, expected = observed[~zero], expected[~zero]
        small = expected < 5  # merge sparse bins so the chi-square approximation holds
        if small.any() and small.sum() < len(expected):
            observed = np.append(observed[~small], observed[small].sum())
            expected = np.append(expected[~small], expected[small].sum())
        if len(expected) < 2:
            continue
        p = float(stats.chisquare(observed, expected).pvalue)
        details.append(f"{name}: p={p:.4f}")
        ok = ok and p > 0.01
    record("alias_chi_square", ok, "; ".join(details) if details else "only single-outcome rows present")

    return checks
