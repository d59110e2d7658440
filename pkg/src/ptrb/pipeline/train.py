"""Training loop, evaluation with test-time voting, and run artifacts."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..data_io import augment
from ..numerics import clear_tape, no_grad, stream
from . import model
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, ModelConfig
from .optim import adamw_step, lr_at

LOG_FIELDS = ("epoch", "lr", "task", "importance", "alignment", "total", "train_acc", "val_acc")


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    task: float
    importance: float
    alignment: float
    total: float
    train_acc: float
    val_acc: float

    def row(self):
        return [self.epoch] + [repr(float(getattr(self, k))) for k in LOG_FIELDS[1:]]


@dataclass
class TrainReport:
    params: object
    config: ModelConfig
    history: list = field(default_factory=list)
    best_acc: float = -1.0
    best_epoch: int = -1
    out_dir: Path | None = None

    def first_epoch_reaching(self, key, value):
        for rec in self.history:
            if getattr(rec, key) >= value:
                return rec.epoch
        return None


@dataclass
class EvalReport:
    accuracy: float
    per_class: dict
    num_samples: int
    predictions: np.ndarray
    labels: np.ndarray
    logits: np.ndarray

    def to_json(self):
        return {
            "accuracy": self.accuracy,
            "per_class": self.per_class,
            "num_samples": self.num_samples,
            "predictions": [int(p) for p in self.predictions],
            "labels": [int(v) for v in self.labels],
        }


def check_dataset(dataset, cfg):
    if len(dataset) == 0:
        raise ConfigError("dataset is empty")
    if len(np.unique(dataset.labels)) < 2 and dataset.split == "train":
        raise ConfigError("training needs at least 2 classes")
    if dataset.num_classes != cfg.num_classes:
        raise ConfigError(f"dataset has {dataset.num_classes} classes, config expects {cfg.num_classes}")
    if dataset.num_points < max(cfg.num_groups, cfg.group_size):
        raise ConfigError(f"clouds have {dataset.num_points} points; config needs at least "
                          f"{max(cfg.num_groups, cfg.group_size)}")


def _batches(n, size, rng):
    order = rng.permutation(n)
    return [order[i:i + size] for i in range(0, n, size)]


def train_step(params, cfg, points, labels, lr, rng):
    """One forward/backward/update; returns the LossBreakdown."""
    try:
        result = model.forward(points, cfg, params, "train", rng)
        losses = model.total_loss(result, labels, cfg)
        if not math.isfinite(float(losses.total.data)):
            raise FloatingPointError(f"non-finite loss {float(losses.total.data)}")
        params.zero_grad()
        losses.total.backward()
    finally:
        clear_tape()
    adamw_step(params, lr, tuple(cfg.betas), cfg.adam_eps, cfg.weight_decay)
    return losses


def train(train_set, cfg, out_dir=None, val_set=None, params=None, resume=None,
          stop_after=None, on_step=None, log=None, eval_every=1):
    """Train on ``train_set`` for ``cfg.epochs`` epochs.

    With ``out_dir`` the run writes ``config.json``, ``log.csv``,
    ``best.ckpt`` (float32, best validation accuracy, or train accuracy
    without a validation set) and ``last.ckpt`` (float64 with optimizer state).
    ``resume`` names a ``last.ckpt`` to continue from; ``stop_after`` ends
    the run after that many total epochs. ``on_step(epoch, step, losses)``
    sees every LossBreakdown. Accuracies are measured every ``eval_every``
    epochs and after the last one; other epochs log them as nan.
    """
    check_dataset(train_set, cfg)
    if val_set is not None:
        check_dataset(val_set, cfg)
    start = 0
    report = TrainReport(params, cfg)
    if resume is not None:
        params, saved_cfg, meta = load_checkpoint(resume)
        if saved_cfg != cfg.to_dict():
            raise ConfigError("resume checkpoint was written with a different config")
        start = int(meta["epoch"])
        report.best_acc = float(meta.get("best_acc", -1.0))
        report.best_epoch = int(meta.get("best_epoch", -1))
    elif params is None:
        params = model.init_params(cfg)
    report.params = params

    log_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        report.out_dir = out_dir
        (out_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True))
        log_path = out_dir / "log.csv"
        if resume is None or not log_path.exists():
            with open(log_path, "w", newline="") as f:
                csv.writer(f).writerow(LOG_FIELDS)

    end = cfg.epochs if stop_after is None else min(cfg.epochs, stop_after)
    n = len(train_set)
    for epoch in range(start, end):
        rng = stream(cfg.seed, "epoch", epoch)
        batches = _batches(n, cfg.batch_size, rng)
        sums = np.zeros(4)
        for step, idx in enumerate(batches):
            lr = lr_at(epoch + step / len(batches), cfg)
            pts = augment(train_set.points[idx], rng, (cfg.scale_low, cfg.scale_high),
                          cfg.translate, cfg.rotate)
            losses = train_step(params, cfg, pts, train_set.labels[idx], lr, rng)
            if on_step is not None:
                on_step(epoch, step, losses)
            v = losses.values()
            sums += [v["task"] * len(idx), v["importance"] * len(idx),
                     v["alignment"] * len(idx), v["total"] * len(idx)]
        sums /= n
        train_acc = val_acc = float("nan")
        if (epoch + 1) % eval_every == 0 or epoch + 1 == cfg.epochs:
            # eval-mode accuracy on the clean training clouds, not the augmented minibatches
            train_acc = evaluate(train_set, params, cfg).accuracy
            if val_set is not None:
                val_acc = evaluate(val_set, params, cfg).accuracy
        rec = EpochRecord(epoch + 1, lr_at(epoch + 1, cfg), *sums, train_acc, val_acc)
        report.history.append(rec)
        if log is not None:
            log(f"epoch {rec.epoch:4d} lr {rec.lr:.2e} loss {rec.total:.4f} "
                f"(task {rec.task:.4f}) train {train_acc:.3f} val {val_acc:.3f}")
        score = val_acc if val_set is not None else train_acc
        improved = score > report.best_acc     # False for nan
        if improved:
            report.best_acc, report.best_epoch = score, epoch + 1
        if out_dir is not None:
            with open(log_path, "a", newline="") as f:
                csv.writer(f).writerow(rec.row())
            meta = {"epoch": epoch + 1, "best_acc": report.best_acc,
                    "best_epoch": report.best_epoch, "class_names": list(train_set.class_names)}
            if improved:
                save_checkpoint(out_dir / "best.ckpt", params, cfg.to_dict(), meta, "float32")
            save_checkpoint(out_dir / "last.ckpt", params, cfg.to_dict(), meta, "float64",
                            include_optimizer=True)
    return report


def predict_logits(points, params, cfg, batch_size=None):
    """Eval-mode logits for an (M, N, 3) array of clouds, without recording a tape."""
    bs = batch_size or cfg.batch_size
    out = []
    with no_grad():
        for i in range(0, len(points), bs):
            out.append(model.forward(points[i:i + bs], cfg, params, "eval").logits.data)
    return np.concatenate(out)


def evaluate(dataset, params, cfg, voting=1, seed=0, batch_size=None):
    """Accuracy report; ``voting > 1`` averages logits over randomly scaled copies.

    Copy 0 is the unscaled cloud, so ``voting=1`` equals plain evaluation.
    """
    if voting < 1:
        raise ConfigError("voting must be >= 1")
    check_dataset(dataset, cfg)
    logits = predict_logits(dataset.points, params, cfg, batch_size)
    if voting > 1:
        rng = stream(seed, "voting")
        for _ in range(voting - 1):
            s = rng.uniform(cfg.scale_low, cfg.scale_high, size=(len(dataset), 1, 1))
            logits = logits + predict_logits(dataset.points * s, params, cfg, batch_size)
        logits = logits / voting
    pred = logits.argmax(-1)
    labels = dataset.labels
    per_class = {}
    for c, name in enumerate(dataset.class_names):
        mask = labels == c
        if mask.any():
            per_class[name] = float((pred[mask] == c).mean())
    acc = float((pred == labels).mean())
    return EvalReport(acc, per_class, len(labels), pred, labels, logits)


def load_trained(path):
    """``(params, ModelConfig, meta)`` from a checkpoint file."""
    params, cfg_dict, meta = load_checkpoint(path)
    try:
        cfg = ModelConfig.from_dict(cfg_dict)
    except ConfigError as e:
        raise ConfigError(f"{path}: stored config invalid: {e}") from e
    return params, cfg, meta
