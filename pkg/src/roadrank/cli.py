"""Command-line entry point.

Subcommands cover dataset generation, every pipeline stage, the full
pipeline, the verification battery, and single-parameter sweeps. Exit codes:
0 success, 1 computational failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from . import __version__
from .artifacts import dump_json, sha256_file
from .config import ConfigError, RunConfig, load_config
from .network import DatasetError, generate_random_dataset, load_dataset, save_dataset
from .pipeline import (
    StageError,
    dataset_hashes,
    load_graphs,
    load_ground_truth,
    load_model,
    load_ranking,
    load_walks,
    stage_build_graphs,
    stage_evaluate,
    stage_ground_truth,
    stage_rank,
    stage_train,
    stage_walk,
    sweep,
    verify_battery,
)


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="flat key=value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override one config key")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roadrank", description=__doc__)
    parser.add_argument("--version", action="version", version=f"roadrank {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a random dataset")
    p.add_argument("--segments", type=int, required=True)
    p.add_argument("--od", type=int, required=True)
    p.add_argument("--paths-per-od", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    for name, extra in (
        ("build-graphs", ("--dump-csv",)),
        ("walk", ()),
        ("ground-truth", ()),
        ("train", ()),
        ("rank", ()),
        ("evaluate", ()),
    ):
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--data", type=Path, required=True)
        p.add_argument("--out", type=Path, required=True)
        if "--dump-csv" in extra:
            p.add_argument("--dump-csv", action="store_true", help="also dump matrices as CSV (unstable format)")
        _add_config_args(p)

    p = sub.add_parser("pipeline", help="run all stages end to end")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--compute-gt", action="store_true", help="run the ground-truth stage first")
    p.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")
    _add_config_args(p)

    p = sub.add_parser("verify", help="run the chain-level verification battery")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None, help="optional directory for the JSON report")
    _add_config_args(p)

    p = sub.add_parser("sweep", help="rerun the pipeline over one parameter grid")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--param", required=True, help="config key, e.g. walk.alpha")
    p.add_argument("--values", required=True, help="comma-separated grid values")
    _add_config_args(p)

    return parser


def _load_cfg(args) -> RunConfig:
    return load_config(getattr(args, "config", None), getattr(args, "overrides", [])).validate()


def _load_bundle(path: Path):
    bundle = load_dataset(path)
    return bundle


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except DatasetError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except StageError as e:
        print(f"pipeline failed at stage '{e.stage}': {e}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    if args.command == "gen-data":
        bundle = generate_random_dataset(args.segments, args.od, args.paths_per_od, args.seed)
        save_dataset(bundle, args.out)
        print(f"wrote dataset to {args.out}")
        print(f"  segments: {len(bundle.network.segments)}")
        print(f"  edges:    {len(bundle.network.edges)}")
        print(f"  od flows: {len(bundle.od_flows)}")
        print(f"  paths:    {len(bundle.paths)}")
        for name in ("network.json", "od.json", "paths.json"):
            print(f"  {name}: sha256 {sha256_file(args.out / name)[:16]}")
        return 0

    cfg = _load_cfg(args)
    out: Path = args.out if getattr(args, "out", None) else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    if args.command == "verify":
        bundle = _load_bundle(args.data)
        checks = verify_battery(bundle, cfg)
        failed = [c for c in checks if not c["passed"]]
        for c in checks:
            print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}: {c['detail']}")
        if out is not None:
            dump_json(out / "verification.json", checks)
        if failed:
            print(f"{len(failed)} verification propert{'y' if len(failed) == 1 else 'ies'} failed", file=sys.stderr)
            return 1
        return 0

    if args.command == "sweep":
        bundle = _load_bundle(args.data)
        values = [v for v in args.values.split(",") if v]
        rows = sweep(bundle, cfg, args.param, values)
        path = out / "sweep.csv"
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["param", "value", "kendall_tau", "ndcg", "emd", "diff"])
            for r in rows:
                w.writerow([r["param"], r["value"], repr(r["kendall_tau"]), repr(r["ndcg"]), repr(r["emd"]), repr(r["diff"])])
        print(f"wrote {path}")
        return 0

    import torch

    torch.set_num_threads(max(1, cfg["threads"]))
    inputs = dataset_hashes(args.data)

    if args.command == "build-graphs":
        bundle = _load_bundle(args.data)
        stage_build_graphs(bundle, cfg, out, inputs, dump_csv=getattr(args, "dump_csv", False))
        print(f"wrote graph artifacts to {out / 'graphs'}")
        return 0

    if args.command == "walk":
        tg, kernels, ags = load_graphs(out)
        stage_walk(tg, kernels, ags, cfg, out, inputs)
        print(f"wrote {out / 'walks.jsonl'}")
        return 0

    if args.command == "ground-truth":
        bundle = _load_bundle(args.data)
        stage_ground_truth(bundle, cfg, out, inputs)
        print(f"wrote {out / 'ground_truth.csv'}")
        return 0

    if args.command == "train":
        tg, kernels, ags = load_graphs(out)
        corpus = load_walks(out)
        gt = load_ground_truth(out)
        stage_train(corpus, ags, gt, cfg, out, inputs)
        print(f"wrote {out / 'checkpoint.bin'} and {out / 'loss_curve.csv'}")
        return 0

    if args.command == "rank":
        bundle = _load_bundle(args.data)
        tg, kernels, ags = load_graphs(out)
        corpus = load_walks(out)
        model, enc, header = load_model(out)
        from .encoder import Featurizer, build_corpus_batch

        batch = build_corpus_batch(corpus, Featurizer(ags), enc.max_seq_tokens)
        stage_rank(model, batch, bundle.network.segments, out, inputs)
        print(f"wrote {out / 'ranking.csv'}")
        return 0

    if args.command == "evaluate":
        ranking = load_ranking(out)
        gt = load_ground_truth(out)
        _, _, header = load_model(out)
        report = stage_evaluate(ranking, gt, header["test_ids"], cfg, out, inputs)
        print(f"wrote {out / 'metrics.json'}: kendall_tau={report['kendall_tau']:.4f}")
        return 0

    if args.command == "pipeline":
        if args.dry_run:
            print(cfg.dump(), end="")
            return 0
        stage = "load-data"
        try:
            bundle = _load_bundle(args.data)
            (out / "run_config.txt").write_text(cfg.dump(), encoding="utf-8")

            stage = "build-graphs"
            tg, kernels, ags = stage_build_graphs(bundle, cfg, out, inputs)

            stage = "walk"
            sampler, corpus = stage_walk(tg, kernels, ags, cfg, out, inputs)

            stage = "ground-truth"
            if args.compute_gt or not (out / "ground_truth.csv").exists():
                gt = stage_ground_truth(bundle, cfg, out, inputs)
            else:
                gt = load_ground_truth(out)

            stage = "train"
            corpus = load_walks(out)  # consume the artifact, not the in-memory copy
            result = stage_train(corpus, ags, gt, cfg, out, inputs)

            stage = "rank"
            ranking = stage_rank(result.model, result.batch, bundle.network.segments, out, inputs)

            stage = "evaluate"
            report = stage_evaluate(ranking, gt, result.test_ids, cfg, out, inputs)
        except StageError:
            raise
        except Exception as e:
            raise StageError(stage, str(e)) from e
        print(f"pipeline complete: kendall_tau={report['kendall_tau']:.4f} ndcg={report['ndcg_at_k']:.4f} emd={report['emd']:.4f} diff={report['diff']:.4f}")
        return 0

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
