"""Command-line entry point: ``ptrb {gen,train,eval,order,bench}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error,
3 data or checkpoint error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import data_io, geometry
from .bench import MIXERS, run_benchmark
from .data_io import DataError, ParseError
from .numerics import no_grad, stream
from .pipeline import model
from .pipeline.checkpoint import CheckpointError
from .pipeline.config import ORDERING_CHOICES, ConfigError, ModelConfig
from .pipeline.train import evaluate, load_trained, train

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_DATA = 0, 1, 2, 3

YELLOW = np.array([255, 255, 0])
RED = np.array([255, 0, 0])


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _echo_config(cfg):
    print("resolved config: " + json.dumps(cfg.to_dict(), sort_keys=True), file=sys.stderr)


def _split_names(text):
    return [s.strip() for s in text.split(",") if s.strip()]


# ------------------------------------------------------------- subcommands

def cmd_gen(args):
    classes = _split_names(args.classes)
    splits = [("train", args.per_class), ("test", args.test_per_class)]
    for split, count in splits:
        if count <= 0:
            continue
        spec = data_io.SyntheticSpec(classes, count, args.points, args.jitter, args.seed, split)
        man = data_io.export_dataset(data_io.generate_synthetic(spec), args.out, split)
        print(f"{split}: {len(man.entries)} clouds -> {Path(args.out) / (split + '.json')}")
    return EXIT_OK


def cmd_train(args):
    cfg = ModelConfig.from_json(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.rotate:
        changes["rotate"] = True
    if args.epochs is not None:
        changes["epochs"] = args.epochs
    if changes:
        cfg = cfg.replace(**changes)
    _echo_config(cfg)
    train_set = data_io.load_split(args.data, "train")
    val_set = None
    if args.val_split and (Path(args.data) / f"{args.val_split}.json").exists():
        val_set = data_io.load_split(args.data, args.val_split)
    report = train(train_set, cfg, args.out, val_set,
                   log=None if args.quiet else (lambda m: print(m, file=sys.stderr)))
    print(f"best accuracy {report.best_acc:.4f} at epoch {report.best_epoch}; "
          f"artifacts in {args.out}")
    return EXIT_OK


def cmd_eval(args):
    params, cfg, _ = load_trained(args.checkpoint)
    _echo_config(cfg)
    dataset = data_io.load_split(args.data, args.split)
    if dataset.num_classes != cfg.num_classes or dataset.num_points < cfg.num_groups:
        raise CheckpointError(f"checkpoint expects {cfg.num_classes} classes and "
                              f">= {cfg.num_groups} points; dataset has {dataset.num_classes} "
                              f"classes and {dataset.num_points} points")
    rep = evaluate(dataset, params, cfg, voting=args.voting, seed=args.seed)
    if args.json:
        print(json.dumps(rep.to_json()))
    else:
        print(f"accuracy {rep.accuracy:.4f} over {rep.num_samples} clouds (voting {args.voting})")
        for name, acc in rep.per_class.items():
            print(f"  {name:>12s} {acc:.4f}")
    return EXIT_OK


def score_colors(scores):
    """Linear map min score -> yellow, max -> red; uniform scores are red."""
    s = np.asarray(scores, dtype=np.float64)
    span = s.max() - s.min()
    t = np.ones_like(s) if span <= 0 else (s - s.min()) / span
    return np.rint(YELLOW + t[:, None] * (RED - YELLOW)).astype(np.int64)


def cmd_order(args):
    if args.strategy not in ORDERING_CHOICES:
        raise UsageError(f"unknown strategy {args.strategy!r}; choose from {ORDERING_CHOICES}")
    params, cfg, _ = load_trained(args.checkpoint)
    cfg = cfg.replace(ordering=args.strategy, seed=args.seed)
    _echo_config(cfg)
    raw = data_io.parse_cloud(args.input)
    pts = geometry.normalize_cloud(
        data_io.resample(raw, cfg.num_points, stream(args.seed, "order-input"))).points
    with no_grad():
        res = model.forward(pts, cfg, params, "eval")
    perm = res.ordered.perm[0]
    scores = res.group_state.I.data[0]
    grouped = res.grouped[0]
    # each point takes the score of its nearest keypoint's group
    d2 = ((pts[:, None, :] - grouped.keypoints[None]) ** 2).sum(-1)
    owner = d2.argmin(1)
    colors = score_colors(scores)[owner]
    data_io.write_ply(args.emit_ply, pts, colors)
    if args.json:
        print(json.dumps({"strategy": args.strategy, "permutation": [int(i) for i in perm],
                          "scores": [float(s) for s in scores]}))
    else:
        print("permutation: " + " ".join(str(int(i)) for i in perm))
        print("scores: " + " ".join(f"{s:.6f}" for s in scores))
    return EXIT_OK


def cmd_bench(args):
    try:
        lengths = [int(x) for x in _split_names(args.lengths)]
    except ValueError:
        raise UsageError(f"--lengths must be comma-separated integers, got {args.lengths!r}") from None
    if len(lengths) < 4:
        raise UsageError(f"--lengths needs at least 4 values, got {len(lengths)}")
    if lengths != sorted(lengths) or len(set(lengths)) != len(lengths) or lengths[0] < 1:
        raise UsageError("--lengths must be strictly ascending positive integers")
    if args.dim < 1 or args.repeats < 1:
        raise UsageError("--dim and --repeats must be positive")
    rows, slope = run_benchmark(args.mixer, lengths, args.dim, args.repeats, args.seed)
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["length", "median_seconds"])
        for L, t in rows:
            w.writerow([L, repr(t)])
    for L, t in rows:
        print(f"{args.mixer} L={L:6d} {t * 1e3:10.3f} ms")
    print(f"log-log slope: {slope:.3f}")
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser():
    p = _Parser(prog="ptrb", description="Importance-ordered hybrid point-cloud classifier.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("gen", help="write a synthetic shape dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--classes", default=",".join(data_io.SHAPES))
    g.add_argument("--per-class", type=int, default=64)
    g.add_argument("--test-per-class", type=int, default=32)
    g.add_argument("--points", type=int, default=256)
    g.add_argument("--jitter", type=float, default=0.01)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a classifier")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--rotate", action="store_true")
    t.add_argument("--epochs", type=int)
    t.add_argument("--val-split", default="test")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", default="test")
    e.add_argument("--voting", type=int, default=1)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--json", action="store_true")
    e.set_defaults(func=cmd_eval)

    o = sub.add_parser("order", help="inspect an ordering and export a score-colored PLY")
    o.add_argument("--checkpoint", required=True)
    o.add_argument("--input", required=True)
    o.add_argument("--strategy", required=True)
    o.add_argument("--emit-ply", required=True)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--json", action="store_true")
    o.set_defaults(func=cmd_order)

    b = sub.add_parser("bench", help="time a sequence mixer across lengths")
    b.add_argument("--mixer", required=True, choices=MIXERS)
    b.add_argument("--lengths", required=True)
    b.add_argument("--dim", type=int, default=64)
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--out", required=True)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ParseError, CheckpointError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
