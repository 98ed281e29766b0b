"""Command-line entry points.

Subcommands: gen, train, evaluate, filter, sweep, analyze.  Every run
echoes its resolved configuration into the output directory so results are
reproducible from (config file, seed) alone.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import data, experiments
from .config import load_config
from .evaluation import write_metrics_json
from .filtering import gtcf_filter
from .graph import build_incidence

log = logging.getLogger("gtfrec")


def _load_bundle(cfg) -> data.DatasetBundle:
    if cfg.train_file:
        if not cfg.test_file:
            raise SystemExit("train_file given without test_file")
        return data.parse_dataset(cfg.train_file, cfg.test_file)
    return data.generate_synthetic(cfg.users, cfg.items, cfg.interactions,
                                   cfg.blocks, cfg.noise_frac, cfg.seed)


def _outdir(cfg) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.dump(out / "config.txt")
    return out


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--train", dest="train_file", help="train interaction file")
    p.add_argument("--test", dest="test_file", help="test interaction file")


def _resolve(args: argparse.Namespace, extra_keys=()) -> "load_config":
    keys = ["seed", "out", "train_file", "test_file", *extra_keys]
    overrides = {k: getattr(args, k, None) for k in keys}
    return load_config(args.config, overrides)


def cmd_gen(args) -> int:
    cfg = _resolve(args, ("users", "items", "interactions", "blocks", "noise_frac"))
    out = _outdir(cfg)
    bundle = data.generate_synthetic(cfg.users, cfg.items, cfg.interactions,
                                     cfg.blocks, cfg.noise_frac, cfg.seed)
    data.write_dataset(bundle, out / "train.txt", out / "test.txt")
    print(f"wrote {out / 'train.txt'} and {out / 'test.txt'} "
          f"({bundle.train.num_edges} train edges)")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve(args, ("embed_dim", "learning_rate", "batch_size", "l2_alpha",
                          "epochs", "lam", "layers", "backend"))
    out = _outdir(cfg)
    bundle = _load_bundle(cfg)
    train_cfg = cfg.train_config()

    def progress(name, stats):
        log.info("%s epoch %d loss %.5f", name, stats["epoch"], stats["mean_loss"])

    state, _, history = experiments.train_backend(bundle, cfg.backend, train_cfg, progress)
    ckpt = out / "model.ckpt"
    data.save_checkpoint(state, ckpt)
    with open(out / "loss.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "mean_loss", "num_batches", "wall_time"])
        writer.writeheader()
        writer.writerows(history)
    print(f"trained {cfg.backend} for {train_cfg.epochs} epochs; checkpoint at {ckpt}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _resolve(args, ("embed_dim", "lam", "layers", "backend", "eval_k"))
    out = _outdir(cfg)
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        print(f"error: checkpoint not found: {ckpt}", file=sys.stderr)
        return 1
    state = data.load_checkpoint(ckpt)
    bundle = _load_bundle(cfg)
    rows = experiments.evaluate_backend(state, cfg.backend, cfg.train_config(),
                                        bundle, cfg.ks)
    write_metrics_json(rows, out / "metrics.json")
    for row in rows:
        print(f"{row['metric']}@{row['K']} = {row['value']:.6f} (over {row['n_users']} users)")
    return 0


def cmd_filter(args) -> int:
    cfg = _resolve(args, ("lam", "layers"))
    out = _outdir(cfg)
    E_in = np.load(args.embeddings)
    bundle = _load_bundle(cfg)
    op = build_incidence(bundle.train)
    trace = gtcf_filter(E_in, op, cfg.filter_config(record_trace=True), keep_masks=False)
    np.save(out / "filtered.npy", trace.output)
    trace.write_objective_csv(out / "convergence.csv")
    print(f"filtered embeddings -> {out / 'filtered.npy'}; "
          f"objective series -> {out / 'convergence.csv'}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _resolve(args, ("embed_dim", "learning_rate", "batch_size", "l2_alpha",
                          "epochs", "lam", "layers", "eval_k"))
    out = _outdir(cfg)
    values = [float(v) for v in args.values.split(",")]
    bundle = _load_bundle(cfg)
    backends = args.backends.split(",") if args.backends else experiments.BACKENDS
    report = experiments.run_sweep(args.kind, values, cfg.train_config(), bundle,
                                   backends=backends, ks=cfg.ks)
    report.write_csv(out / f"sweep_{args.kind}.csv")
    report.write_json(out / f"sweep_{args.kind}.json")
    print(f"sweep {args.kind}: {len(report.rows)} rows -> {out}")
    return 0


def cmd_analyze(args) -> int:
    cfg = _resolve(args, ("lam", "layers"))
    out = _outdir(cfg)
    bundle = _load_bundle(cfg)
    states = {}
    if args.checkpoint:
        states["gtn"] = data.load_checkpoint(args.checkpoint)
    if args.baseline_checkpoint:
        states["laplacian"] = data.load_checkpoint(args.baseline_checkpoint)
    if not states:
        print("error: provide --checkpoint and/or --baseline-checkpoint", file=sys.stderr)
        return 1
    ratios = experiments.sparsity_analysis(states, bundle, cfg.train_config(),
                                           threshold=args.threshold)
    rows = [{"metric": "sparsity_ratio", "K": None, "value": v, "backend": k,
             "threshold": args.threshold} for k, v in sorted(ratios.items())]
    write_metrics_json(rows, out / "sparsity.json")
    for row in rows:
        print(f"{row['backend']}: sparsity ratio = {row['value']:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gtfrec",
        description="Trend-filtered collaborative filtering: train, evaluate, and probe.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic block-preference dataset")
    _add_common(p)
    p.add_argument("--users", type=int)
    p.add_argument("--items", type=int)
    p.add_argument("--interactions", type=int)
    p.add_argument("--blocks", type=int)
    p.add_argument("--noise-frac", dest="noise_frac", type=float)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train embeddings and write a checkpoint")
    _add_common(p)
    for flag, typ in [("--embed-dim", int), ("--learning-rate", float),
                      ("--batch-size", int), ("--l2-alpha", float), ("--epochs", int),
                      ("--lam", float), ("--layers", int)]:
        p.add_argument(flag, dest=flag[2:].replace("-", "_"), type=typ)
    p.add_argument("--backend", choices=experiments.BACKENDS)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="compute ranking metrics from a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--backend", choices=experiments.BACKENDS)
    p.add_argument("--embed-dim", dest="embed_dim", type=int)
    p.add_argument("--lam", type=float)
    p.add_argument("--layers", type=int)
    p.add_argument("--eval-k", dest="eval_k")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("filter", help="one-shot trend filter on an embedding file")
    _add_common(p)
    p.add_argument("--embeddings", required=True, help=".npy file, (n+m) x d")
    p.add_argument("--lam", type=float)
    p.add_argument("--layers", type=int)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("sweep", help="run a lambda/layers/noise/epochs sweep")
    _add_common(p)
    p.add_argument("--kind", required=True, choices=["lambda", "layers", "noise", "epochs"])
    p.add_argument("--values", required=True, help="comma-separated sweep values")
    p.add_argument("--backends", help="comma-separated subset of gtn,laplacian")
    for flag, typ in [("--embed-dim", int), ("--learning-rate", float),
                      ("--batch-size", int), ("--l2-alpha", float), ("--epochs", int),
                      ("--lam", float), ("--layers", int)]:
        p.add_argument(flag, dest=flag[2:].replace("-", "_"), type=typ)
    p.add_argument("--eval-k", dest="eval_k")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="edge-difference sparsity of trained models")
    _add_common(p)
    p.add_argument("--checkpoint", help="trend-filter checkpoint")
    p.add_argument("--baseline-checkpoint", help="propagation-baseline checkpoint")
    p.add_argument("--threshold", type=float, default=0.2)
    p.add_argument("--lam", type=float)
    p.add_argument("--layers", type=int)
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
