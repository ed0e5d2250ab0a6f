"""Command-line entry point wiring all the pieces together.

Subcommands: gen-data, build-edges, train, eval, ablate, export-emb,
analyze-emb.  Every run prints its resolved configuration (defaults
plus file plus ``--set`` overrides) in the same key=value format the
config file uses, so the printout can be fed back in to reproduce the
run exactly.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig
from .ctr_net import train
from .datagen import GenConfig, generate_labeled_samples, generate_log, split_train_valid
from .errors import ClickgraphError, ConfigError
from .evaluate import evaluate_model, relaimpr, run_ablations
from .graph_edges import EdgeConfig, build_all_edges
from .ingest import parse_samples, write_log, write_samples
from .model_io import export_embeddings, load_model, save_model
from .multi_interest import pairwise_similarity_matrix

_BUILD_EDGES_RNG_STREAM = 45


def _parse_overrides(pairs: list[str]) -> dict[str, str]:
    overrides = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        overrides[key.strip()] = value
    return overrides


def _load_config(args) -> RunConfig:
    overrides = _parse_overrides(getattr(args, "set", None))
    if getattr(args, "config", None):
        cfg = RunConfig.from_file(args.config, overrides)
    else:
        cfg = RunConfig.from_items(overrides)
    print("# resolved config")
    print(cfg.to_text(), end="")
    return cfg


def _cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    gen_cfg = GenConfig.from_run_config(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log = generate_log(gen_cfg)
    write_log(log, out / "behavior_log.tsv")
    samples = generate_labeled_samples(
        gen_cfg, log, l_click=cfg.l_click, l_query=cfg.l_query,
        include_current_query=cfg.include_current_query)
    train_split, valid_split = split_train_valid(samples, gen_cfg.valid_fraction)
    write_samples(train_split, out / "train_samples.tsv")
    write_samples(valid_split, out / "valid_samples.tsv")
    print(f"wrote {sum(len(s.events) for s in log)} events for {len(log)} users, "
          f"{len(train_split)} train / {len(valid_split)} valid samples to {out}")
    return 0


def _cmd_build_edges(args) -> int:
    cfg = _load_config(args)
    samples = parse_samples(args.samples)
    edge_cfg = EdgeConfig.from_run_config(cfg)
    rng = np.random.default_rng([cfg.seed, _BUILD_EDGES_RNG_STREAM])
    count = 0
    with open(args.out, "w", encoding="utf-8") as fh:
        for sample in samples:
            for edge in build_all_edges(sample, edge_cfg, rng):
                fh.write(f"{edge.kind.value}\t{edge.anchor_id}\t{edge.positive_id}\n")
                count += 1
    print(f"wrote {count} edges for {len(samples)} samples to {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_config(args)
    train_samples = parse_samples(args.train)
    valid_samples = parse_samples(args.valid) if args.valid else []
    result = train(train_samples, valid_samples, cfg)
    save_model(result, args.out)
    if result.valid_auc is not None:
        print(f"final valid_auc={result.valid_auc:.6f}")
    print(f"model saved to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    result = load_model(args.model)
    print("# resolved config")
    print(result.cfg.to_text(), end="")
    samples = parse_samples(args.samples)
    report = evaluate_model(result, samples)
    if args.baseline_auc is not None:
        report.relaimpr_vs = ("baseline", relaimpr(report.auc, args.baseline_auc))
    print(report.to_text())
    return 0


def _cmd_ablate(args) -> int:
    cfg = _load_config(args)
    train_samples = parse_samples(args.train)
    valid_samples = parse_samples(args.valid)
    seeds = [cfg.seed + i for i in range(args.seeds)]
    report = run_ablations(cfg, train_samples, valid_samples, seeds=seeds)
    print(report.to_text())
    return 0


def _cmd_export_emb(args) -> int:
    result = load_model(args.model)
    export_embeddings(result.tables, args.out)
    print(f"embeddings written to {args.out}")
    return 0


def _cmd_analyze_emb(args) -> int:
    result = load_model(args.model)
    ids = [int(v) for v in args.ids.split(",") if v != ""]
    if not ids:
        raise ConfigError("--ids must name at least one entity id")
    table = result.tables[args.entity_type]
    matrix = pairwise_similarity_matrix(table, ids)
    lines = ["\t".join(["id"] + [str(i) for i in ids])]
    for i, row in zip(ids, matrix):
        lines.append("\t".join([str(i)] + [f"{v:.6f}" for v in row]))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"similarity matrix written to {args.out}")
    else:
        print(text, end="")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clickgraph",
        description="behavior-graph embeddings jointly trained with a CTR model")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")

    p = sub.add_parser("gen-data", help="generate a synthetic behavior log and samples")
    add_config_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("build-edges", help="dump the edges of each sample as TSV")
    add_config_args(p)
    p.add_argument("--samples", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build_edges)

    p = sub.add_parser("train", help="joint training run")
    add_config_args(p)
    p.add_argument("--train", required=True, help="training samples file")
    p.add_argument("--valid", help="validation samples file")
    p.add_argument("--out", required=True, help="model output directory")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="score a samples file with a trained model")
    p.add_argument("--model", required=True, help="model directory")
    p.add_argument("--samples", required=True)
    p.add_argument("--baseline-auc", type=float,
                   help="report relative improvement over this AUC")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="retrain with components disabled")
    add_config_args(p)
    p.add_argument("--train", required=True)
    p.add_argument("--valid", required=True)
    p.add_argument("--seeds", type=int, default=1, help="number of seeds to average")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("export-emb", help="re-export a model's embedding tables")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export_emb)

    p = sub.add_parser("analyze-emb", help="pairwise cosine matrix for chosen ids")
    p.add_argument("--model", required=True)
    p.add_argument("--entity-type", choices=["item", "query"], default="item")
    p.add_argument("--ids", required=True, help="comma-separated entity ids")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_analyze_emb)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ClickgraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
