"""Evaluation metrics and the trainable-parameter counter."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .nn import Module


@dataclass(frozen=True)
class MetricReport:
    kind: str
    value: float
    per_class: tuple[float, ...] = ()


def f1_binary(pred, truth) -> float:
    """F1 of the positive class; 0 when precision + recall is 0."""
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape or pred.ndim != 1 or pred.size < 1:
        raise ContractError("f1_binary: label vectors must have equal length >= 1")
    tp = int(np.sum((pred == 1) & (truth == 1)))
    fp = int(np.sum((pred == 1) & (truth == 0)))
    fn = int(np.sum((pred == 0) & (truth == 1)))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def f1_macro(pred, truth, num_classes: int) -> float:
    """Unweighted mean of one-vs-rest F1 over all declared classes.

    Classes absent from both pred and truth contribute 0.
    """
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ContractError("f1_macro: label vectors must have equal length")
    for v in (pred, truth):
        if v.size and (v.min() < 0 or v.max() >= num_classes):
            raise ContractError("f1_macro: label out of range")
    scores = [f1_binary((pred == c).astype(int), (truth == c).astype(int))
              for c in range(num_classes)]
    return float(np.mean(scores))


def r_squared(pred, truth) -> float:
    """Coefficient of determination, 1 - SS_res / SS_tot."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.size < 2:
        raise ContractError("r_squared: need equal-length vectors of size >= 2")
    ss_tot = float(np.sum((truth - truth.mean()) ** 2))
    if ss_tot == 0.0:
        raise ContractError("r_squared: constant truth makes the metric undefined")
    ss_res = float(np.sum((truth - pred) ** 2))
    return 1.0 - ss_res / ss_tot


def count_parameters(model: Module) -> int:
    """Total scalar count over uniquely named trainable parameters."""
    seen: set[str] = set()
    total = 0
    for name, p in model.named_parameters():
        if name in seen:
            raise ContractError(f"duplicate parameter name: {name}")
        seen.add(name)
        total += int(p.data.size)
    return total
