"""Training and evaluation loop, metrics CSV and checkpoint cadence."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from eluresnet import checkpoint as ckpt
from eluresnet.data import (
    LabeledImageSet,
    NormalizationStats,
    apply_normalization,
    augment_batch,
    batch_iterator,
    compute_normalization,
    load_dataset,
)
from eluresnet.model import DivergenceError, Network, NetworkConfig, backward, build_network, forward
from eluresnet.ops import softmax_cross_entropy
from eluresnet.optim import OptimizerState, TrainSchedule, lr_at_epoch, sgd_step
from eluresnet.tensor import Rng

log = logging.getLogger(__name__)

CSV_HEADER = ["epoch", "train_loss", "train_error", "test_error", "lr", "wall_seconds", "diverged"]
EVAL_BATCH = 500


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_error_pct: float
    test_error_pct: float
    lr: float
    wall_seconds: float
    diverged: bool = False

    def row(self) -> list[str]:
        return [str(self.epoch), repr(self.train_loss), repr(self.train_error_pct),
                repr(self.test_error_pct), repr(self.lr), f"{self.wall_seconds:.3f}",
                str(int(self.diverged))]


@dataclass
class RunConfig:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    dataset: str = "cifar10"
    data_dir: str | None = None
    out_csv: str | None = None
    checkpoint: str | None = None
    resume: str | None = None
    train_limit: int | None = None
    test_limit: int | None = None
    normalize_std: bool = True
    checkpoint_every: int | None = None  # None: at LR-decay boundaries and the final epoch

    def __post_init__(self):
        expected = {"cifar10": 10, "cifar100": 100}.get(self.dataset)
        if expected is not None and expected != self.network.classes:
            raise ValueError(f"{self.dataset} has {expected} classes, network has {self.network.classes}")


@dataclass
class TrainResult:
    history: list[EpochMetrics]
    network: Network
    diverged: bool

    @property
    def final_test_error(self) -> float:
        done = [m for m in self.history if not m.diverged]
        return done[-1].test_error_pct if done else math.nan

    @property
    def best_epoch(self) -> EpochMetrics | None:
        done = [m for m in self.history if not m.diverged]
        return min(done, key=lambda m: m.test_error_pct) if done else None


def evaluate(net: Network, test_set: LabeledImageSet, batch_size: int = EVAL_BATCH) -> float:
    """Top-1 test error in percent, infer mode, no augmentation.

    Raises DivergenceError if any logit is non-finite.
    """
    if len(test_set) == 0:
        return 0.0
    correct = 0
    for images, labels in batch_iterator(test_set, batch_size, shuffle=False):
        with np.errstate(over="ignore", invalid="ignore"):
            logits, _ = forward(net, images, "infer", check_finite=False)
        if not np.isfinite(logits).all():
            raise DivergenceError("non-finite logits during evaluation")
        correct += int(np.sum(np.argmax(logits, axis=1) == labels))
    return 100.0 * (1.0 - correct / len(test_set))


def prepare_data(run: RunConfig, datasets=None):
    """Load (unless given), subset and normalize with training-set statistics."""
    train_set, test_set = datasets if datasets is not None else load_dataset(run.dataset, run.data_dir)
    train_set = train_set.subset(run.train_limit)
    test_set = test_set.subset(run.test_limit)
    stats = compute_normalization(train_set, run.normalize_std)
    return apply_normalization(train_set, stats), apply_normalization(test_set, stats), stats


def write_metrics(history: list[EpochMetrics], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for m in history:
            writer.writerow(m.row())


def read_metrics(path) -> list[EpochMetrics]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [EpochMetrics(int(r["epoch"]), float(r["train_loss"]), float(r["train_error"]),
                         float(r["test_error"]), float(r["lr"]), float(r["wall_seconds"]),
                         r["diverged"] == "1") for r in rows]


def _checkpoint_due(run: RunConfig, epoch: int) -> bool:
    nxt = epoch + 1
    if nxt == run.schedule.total_epochs:
        return True
    if run.checkpoint_every:
        return nxt % run.checkpoint_every == 0
    return nxt in run.schedule.decay_points


def _manifest_fields(run: RunConfig, stats: NormalizationStats, epoch: int, test_error: float) -> dict:
    s = run.schedule
    return {"dataset": run.dataset, "seed": s.seed, "epoch": epoch, "base_lr": s.base_lr,
            "decay_points": s.decay_points, "decay_factor": s.decay_factor,
            "momentum": s.momentum, "weight_decay": s.weight_decay, "batch_size": s.batch_size,
            "total_epochs": s.total_epochs, "decay_all": s.decay_all,
            "train_limit": run.train_limit if run.train_limit is not None else "",
            "test_limit": run.test_limit if run.test_limit is not None else "",
            "normalize_std": run.normalize_std, "norm_mean": stats.mean, "norm_std": stats.std,
            "test_error": test_error}


def _save(run, path, net, stats, epoch, test_error, opt):
    ckpt.save_checkpoint(path, net, _manifest_fields(run, stats, epoch, test_error), opt.velocity)


def train_epoch(net: Network, train_set: LabeledImageSet, sched: TrainSchedule, opt: OptimizerState,
                lr: float, rng: Rng):
    """One pass over shuffled, augmented data; returns (mean loss, train error %)."""
    params = net.parameters()
    loss_sum, wrong = 0.0, 0
    for images, labels in batch_iterator(train_set, sched.batch_size, shuffle=True, rng=rng):
        images = augment_batch(images, rng)
        logits, cache = forward(net, images, "train")
        loss, grad = softmax_cross_entropy(logits, labels)
        if not math.isfinite(loss):
            raise DivergenceError(f"non-finite loss {loss}")
        grads = backward(net, cache, grad)
        sgd_step(params, grads, opt, lr, sched)
        loss_sum += loss * len(labels)
        wrong += int(np.sum(np.argmax(logits, axis=1) != labels))
    n = len(train_set)
    return loss_sum / n, 100.0 * wrong / n


def train(run: RunConfig, datasets=None) -> TrainResult:
    """Run the full schedule; stops early (diverged=True) on non-finite values."""
    sched = run.schedule
    train_set, test_set, stats = prepare_data(run, datasets)
    history: list[EpochMetrics] = []
    if run.resume:
        net, manifest, velocity = ckpt.load_checkpoint(run.resume)
        start = int(manifest["epoch"])
        opt = OptimizerState(velocity or {})
        if run.out_csv and Path(run.out_csv).exists():
            history = [m for m in read_metrics(run.out_csv) if m.epoch < start]
    else:
        net = build_network(run.network, Rng((sched.seed, 0)))
        start = 0
        opt = OptimizerState.zeros_like(net.parameters())

    diverged = False
    for epoch in range(start, sched.total_epochs):
        lr = lr_at_epoch(sched, epoch)
        t0 = time.perf_counter()
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                loss, train_err = train_epoch(net, train_set, sched, opt, lr,
                                              Rng((sched.seed, 1, epoch)))
            test_err = evaluate(net, test_set)
        except DivergenceError as exc:
            log.warning("epoch %d diverged: %s", epoch, exc)
            history.append(EpochMetrics(epoch, math.nan, math.nan, math.nan, lr,
                                        time.perf_counter() - t0, diverged=True))
            diverged = True
            break
        m = EpochMetrics(epoch, loss, train_err, test_err, lr, time.perf_counter() - t0)
        history.append(m)
        log.info("epoch %d lr %g loss %.4f train_err %.2f test_err %.2f (%.1fs)",
                 epoch, lr, loss, train_err, test_err, m.wall_seconds)
        if run.out_csv:
            write_metrics(history, run.out_csv)
        if run.checkpoint and _checkpoint_due(run, epoch):
            _save(run, run.checkpoint, net, stats, epoch + 1, test_err, opt)
            if epoch + 1 != sched.total_epochs:
                _save(run, f"{run.checkpoint}.e{epoch + 1}", net, stats, epoch + 1, test_err, opt)
    if run.out_csv:
        write_metrics(history, run.out_csv)
        write_run_meta(run, stats, f"{run.out_csv}.meta")
    return TrainResult(history, net, diverged)


def write_run_meta(run: RunConfig, stats: NormalizationStats, path) -> None:
    """Sidecar recording the configuration and normalization convention of a metrics CSV."""
    lines = [f"network.{k}={ckpt._format(v)}" for k, v in ckpt.network_fields(run.network).items()]
    lines += [f"schedule.{k}={ckpt._format(v)}" for k, v in asdict(run.schedule).items()]
    lines += [f"dataset={run.dataset}", f"train_limit={run.train_limit}", f"test_limit={run.test_limit}",
              f"normalization={'per-channel mean/std' if run.normalize_std else 'per-channel mean'}",
              f"norm_mean={ckpt._format(stats.mean)}", f"norm_std={ckpt._format(stats.std)}"]
    Path(path).write_text("\n".join(lines) + "\n")


def evaluate_checkpoint(path, datasets=None, data_dir=None, dataset=None) -> tuple[float, dict]:
    """Re-evaluate a checkpoint on the test split it was trained against."""
    net, m, _ = ckpt.load_checkpoint(path)
    if datasets is None:
        datasets = load_dataset(dataset or m["dataset"], data_dir)
    test_set = datasets[1].subset(int(m["test_limit"]) if m.get("test_limit") else None)
    stats = NormalizationStats(np.array([float(v) for v in m["norm_mean"].split(",")]),
                               np.array([float(v) for v in m["norm_std"].split(",")]))
    return evaluate(net, apply_normalization(test_set, stats)), m
