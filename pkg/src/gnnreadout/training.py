"""Optimization loop: AdamW, plateau LR decay, early stopping, repeats.

Protocol: train with minibatches (shuffled per epoch under a seeded RNG),
track validation loss each epoch, halve the learning rate on plateaus
(patience 10, floor 1e-6), stop early after 25 epochs without
improvement but never before epoch 10, then evaluate the best-validation
snapshot on the test split.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, ContractError, NumericError
from .graphs import DatasetSplit, Graph, GraphDataset, add_virtual_node, batch, make_split
from .metrics import count_parameters, f1_binary, f1_macro, r_squared
from .model import GraphModel
from .nn import Module
from .readouts import ReadoutSpec
from .tensor import Parameter, Tape, Tensor, backward, loss as loss_op, make_rng

IMPROVEMENT_THRESHOLD = 1e-4  # absolute val-loss decrease that counts


class AdamW:
    """Decoupled weight decay followed by bias-corrected Adam."""

    def __init__(self, params: list[tuple[str, Parameter]], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.01):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params}
        self.v = {name: np.zeros_like(p.data) for name, p in params}

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        for name, p in self.params:
            if p.grad is None:
                raise ContractError(f"missing gradient for parameter {name}")
            g = p.grad
            p.data *= 1.0 - self.lr * self.weight_decay
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            m_hat = self.m[name] / (1 - self.beta1 ** t)
            v_hat = self.v[name] / (1 - self.beta2 ** t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class PlateauScheduler:
    """Halve the LR after more than `patience` epochs without improvement."""

    def __init__(self, lr: float = 1e-3, factor: float = 0.5, patience: int = 10,
                 min_lr: float = 1e-6, threshold: float = IMPROVEMENT_THRESHOLD):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.min_lr = min_lr
        self.threshold = threshold
        self.best = np.inf
        self.stale = 0

    def step(self, val_loss: float) -> float:
        if val_loss < self.best - self.threshold:
            self.best = val_loss
            self.stale = 0
        else:
            self.stale += 1
            if self.stale > self.patience:
                self.lr = max(self.lr * self.factor, self.min_lr)
                self.stale = 0
        return self.lr


class EarlyStopping:
    """Patience-based stopping that snapshots the best-validation model."""

    def __init__(self, patience: int = 25, min_epochs: int = 10,
                 threshold: float = IMPROVEMENT_THRESHOLD):
        self.patience = patience
        self.min_epochs = min_epochs
        self.threshold = threshold
        self.best = np.inf
        self.best_epoch = -1
        self.stale = 0
        self.snapshot: Optional[dict[str, np.ndarray]] = None

    def update(self, epoch: int, val_loss: float, model: Module) -> bool:
        """Record the epoch; return True when training should stop."""
        if val_loss < self.best - self.threshold or self.snapshot is None:
            if val_loss < self.best:
                self.best = val_loss
                self.best_epoch = epoch
                self.snapshot = model.state_dict()
            self.stale = 0
        else:
            self.stale += 1
        return epoch + 1 >= self.min_epochs and self.stale >= self.patience


@dataclass
class RunResult:
    seed: int
    metric_name: str
    metric_value: float
    best_val_loss: float
    best_epoch: int
    epochs: int
    wall_time_s: float
    param_count: int
    failed: bool = False
    error: str = ""


@dataclass
class RunSummary:
    metric_name: str
    mean: float
    std: float  # sample std (n-1 denominator); 0 by convention when n == 1
    n: int
    param_count: int
    partial: bool = False  # true when any repetition failed

    @staticmethod
    def from_results(results: list["RunResult"]) -> "RunSummary":
        ok = [r for r in results if not r.failed]
        values = [r.metric_value for r in ok]
        mean = float(np.mean(values)) if values else float("nan")
        std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        return RunSummary(
            metric_name=results[0].metric_name if results else "",
            mean=mean,
            std=std,
            n=len(ok),
            param_count=results[0].param_count if results else 0,
            partial=len(ok) != len(results),
        )


@dataclass(frozen=True)
class ModelSettings:
    conv: str
    num_layers: int
    readout: ReadoutSpec


@dataclass(frozen=True)
class TrainSettings:
    batch_size: int = 32
    max_epochs: int = 200
    lr: float = 1e-3
    weight_decay: float = 0.01


def _metric_for_task(task: str) -> str:
    return {"binary": "f1", "multiclass": "macro_f1", "regression": "r2"}[task]


def _loss_kind(task: str) -> str:
    return "mse" if task == "regression" else "cross_entropy"


def _prepare(graphs: list[Graph], needs_virtual: bool) -> list[Graph]:
    return [add_virtual_node(g) for g in graphs] if needs_virtual else graphs


def _batch_loss(model: GraphModel, graphs: list[Graph], kind: str) -> Tensor:
    b = batch(graphs)
    pred = model(b)
    if kind == "mse":
        return loss_op("mse", pred, b.targets.reshape(-1, 1))
    return loss_op("cross_entropy", pred, b.targets.astype(np.int64))


def _eval_loss(model: GraphModel, graphs: list[Graph], kind: str, batch_size: int) -> float:
    model.eval()
    total, count = 0.0, 0
    for i in range(0, len(graphs), batch_size):
        chunk = graphs[i:i + batch_size]
        total += _batch_loss(model, chunk, kind).item() * len(chunk)
        count += len(chunk)
    return total / count


def _eval_metric(model: GraphModel, graphs: list[Graph], task: str,
                 num_classes: int, batch_size: int) -> float:
    model.eval()
    preds, truths = [], []
    for i in range(0, len(graphs), batch_size):
        chunk = graphs[i:i + batch_size]
        b = batch(chunk)
        out = model(b).data
        if task == "regression":
            preds.append(out[:, 0])
            truths.append(b.targets)
        else:
            preds.append(out.argmax(axis=1))
            truths.append(b.targets.astype(np.int64))
    pred = np.concatenate(preds)
    truth = np.concatenate(truths)
    if task == "binary":
        return f1_binary(pred, truth)
    if task == "multiclass":
        return f1_macro(pred, truth, num_classes)
    return r_squared(pred, truth)


def build_model(dataset: GraphDataset, settings: ModelSettings,
                rng: np.random.Generator) -> GraphModel:
    out_dim = 1 if dataset.task == "regression" else dataset.num_classes
    needs_virtual = settings.readout.kind == "virtual_node"
    max_nodes = dataset.max_nodes + (1 if needs_virtual else 0)
    return GraphModel(settings.conv, dataset.feature_dim, settings.num_layers,
                      settings.readout, out_dim, max_nodes, rng)


def train_one(dataset: GraphDataset, split: DatasetSplit, model_settings: ModelSettings,
              train_settings: TrainSettings, seed: int,
              log_path: Optional[str | Path] = None) -> RunResult:
    """Train a single model on one split; returns the run's metrics.

    Deterministic given (dataset, split, settings, seed). A diverged run
    (non-finite loss) is returned as failed, never silently dropped.
    """
    start = time.perf_counter()
    rng = make_rng(seed)
    init_rng, shuffle_rng = rng.spawn(2)

    model = build_model(dataset, model_settings, init_rng)
    params = list(model.named_parameters())
    param_count = count_parameters(model)
    opt = AdamW(params, lr=train_settings.lr, weight_decay=train_settings.weight_decay)
    sched = PlateauScheduler(lr=train_settings.lr)
    stopper = EarlyStopping()
    loss_kind = _loss_kind(dataset.task)
    needs_virtual = model.needs_virtual_node

    train_graphs = _prepare([dataset.graphs[i] for i in split.train], needs_virtual)
    val_graphs = _prepare([dataset.graphs[i] for i in split.val], needs_virtual)
    test_graphs = _prepare([dataset.graphs[i] for i in split.test], needs_virtual)

    log_lines: list[str] = []
    epochs_run = 0
    try:
        for epoch in range(train_settings.max_epochs):
            model.train()
            order = shuffle_rng.permutation(len(train_graphs))
            total, count = 0.0, 0
            for i in range(0, len(order), train_settings.batch_size):
                chunk = [train_graphs[j] for j in order[i:i + train_settings.batch_size]]
                model.zero_grad()
                with Tape():
                    loss = _batch_loss(model, chunk, loss_kind)
                    backward(loss)
                opt.step()
                total += loss.item() * len(chunk)
                count += len(chunk)
            train_loss = total / count
            val_loss = _eval_loss(model, val_graphs, loss_kind, train_settings.batch_size)
            opt.lr = sched.step(val_loss)
            epochs_run = epoch + 1
            log_lines.append(f"{epoch} {train_loss:.6f} {val_loss:.6f} {opt.lr:.3e}")
            if stopper.update(epoch, val_loss, model):
                break
    except NumericError as e:
        if log_path is not None:
            Path(log_path).write_text("\n".join(log_lines) + "\n")
        return RunResult(seed, _metric_for_task(dataset.task), float("nan"),
                         float("nan"), -1, epochs_run, time.perf_counter() - start,
                         param_count, failed=True, error=f"diverged: {e}")

    if stopper.snapshot is not None:
        model.load_state_dict(stopper.snapshot)
    metric = _eval_metric(model, test_graphs, dataset.task, dataset.num_classes,
                          train_settings.batch_size)
    if log_path is not None:
        Path(log_path).write_text("\n".join(log_lines) + "\n")
    return RunResult(seed, _metric_for_task(dataset.task), metric, stopper.best,
                     stopper.best_epoch, epochs_run, time.perf_counter() - start,
                     param_count)


def run_repeated(dataset: GraphDataset, model_settings: ModelSettings,
                 train_settings: TrainSettings, n_repeats: int = 5,
                 seed_base: int = 0, log_dir: Optional[str | Path] = None,
                 threads: int = 1) -> tuple[list[RunResult], RunSummary]:
    """Repeat training n times: fresh random split + init per repetition
    (pre-split datasets keep their splits and only re-initialize)."""
    if n_repeats < 1:
        raise ConfigError("n_repeats must be >= 1")
    if log_dir is not None:
        Path(log_dir).mkdir(parents=True, exist_ok=True)

    def one(i: int) -> RunResult:
        seed = seed_base + i
        if dataset.presplit is not None:
            split = dataset.presplit
        else:
            split = make_split(len(dataset.graphs), (0.8, 0.1, 0.1), make_rng(10_000 + seed))
        log_path = Path(log_dir) / f"run_{seed}.log" if log_dir is not None else None
        return train_one(dataset, split, model_settings, train_settings, seed, log_path)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(n_repeats)))
    else:
        results = [one(i) for i in range(n_repeats)]
    return results, RunSummary.from_results(results)
