"""Dense float64 tensors with reverse-mode automatic differentiation.

The engine is tape-based: while a :class:`Tape` is active (as a context
manager), every operation whose inputs require gradients appends an entry
with a backward rule. ``backward(loss)`` replays the tape in reverse and
accumulates ``.grad`` buffers on every reachable tensor.

Only the operations needed by the graph models are provided: elementwise
arithmetic and activations, matmul, row gathering, segment reductions,
softmaxes, batch normalization, dropout and the two losses.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError, DimensionError, NumericError

_state = threading.local()


def _tape_stack() -> list["Tape"]:
    if not hasattr(_state, "tapes"):
        _state.tapes = []
    return _state.tapes


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator; cheap to seed, safe to spawn."""
    return np.random.Generator(np.random.Philox(seed))


class Tensor:
    """A dense float64 array plus optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._tape: Optional[Tape] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # convenience operators (all defer to module-level ops)
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Tensor):
    """A learnable tensor with a unique name within its model."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True)
        self.name = name


@dataclass
class TapeOp:
    name: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class Tape:
    """Ordered record of executed operations; one per model instance."""

    ops: list[TapeOp] = field(default_factory=list)
    _used: bool = False

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _tape_stack().pop()

    def dump(self) -> str:
        """Line-oriented debug listing of recorded operations."""
        lines = []
        for i, op in enumerate(self.ops):
            ins = ", ".join(str(t.shape) for t in op.inputs)
            lines.append(f"{i:4d} {op.name}({ins}) -> {op.output.shape}")
        return "\n".join(lines)


def _current_tape() -> Optional[Tape]:
    stack = _tape_stack()
    return stack[-1] if stack else None


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(name: str, out: np.ndarray) -> None:
    if not np.all(np.isfinite(out)):
        raise NumericError(f"{name} produced non-finite values")


def _make(name, inputs: tuple[Tensor, ...], out_data: np.ndarray, backward) -> Tensor:
    _check_finite(name, out_data)
    requires = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=requires)
    tape = _current_tape()
    if requires and tape is not None:
        tape.ops.append(TapeOp(name, inputs, out, backward))
        out._tape = tape
    return out


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` for every requires-grad tensor reachable from ``loss``."""
    if loss.data.size != 1:
        raise ContractError("backward expects a scalar loss")
    tape = loss._tape
    if tape is None:
        raise ContractError("loss was not recorded on an active tape")
    if tape._used:
        raise ContractError("backward called twice on the same tape")
    tape._used = True
    loss.grad = np.ones_like(loss.data)
    for op in reversed(tape.ops):
        gout = op.output.grad
        if gout is None:
            continue
        grads = op.backward(gout)
        for t, g in zip(op.inputs, grads):
            if g is None or not t.requires_grad:
                continue
            if t.grad is None:
                t.grad = np.array(g, dtype=np.float64, copy=True)
            else:
                t.grad = t.grad + g


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _binary(name: str, a: Tensor, b: Tensor, fwd, da, db) -> Tensor:
    try:
        out = fwd(a.data, b.data)
    except ValueError as e:
        raise DimensionError(f"{name}: incompatible shapes {a.shape} vs {b.shape}") from e
    return _make(
        name,
        (a, b),
        out,
        lambda g: (_unbroadcast(da(g, a.data, b.data), a.shape),
                   _unbroadcast(db(g, a.data, b.data), b.shape)),
    )


def add(a: Tensor, b: Tensor) -> Tensor:
    return _binary("add", a, b, np.add, lambda g, x, y: g, lambda g, x, y: g)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _binary("sub", a, b, np.subtract, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _binary("mul", a, b, np.multiply,
                   lambda g, x, y: g * y, lambda g, x, y: g * x)


def elementwise(op_kind: str, a: Tensor, b: Optional[Tensor] = None, **kw) -> Tensor:
    """Dispatch by name; handy for configs and tests."""
    unary = {"relu": relu, "sigmoid": sigmoid, "tanh": tanh}
    binary = {"add": add, "sub": sub, "mul": mul}
    if op_kind in unary:
        return unary[op_kind](a)
    if op_kind == "leaky_relu":
        return leaky_relu(a, kw.get("slope", 0.2))
    if op_kind == "scale":
        return scale(a, kw["c"])
    if op_kind in binary:
        if b is None:
            raise ContractError(f"{op_kind} needs two operands")
        return binary[op_kind](a, b)
    raise ContractError(f"unknown elementwise kind: {op_kind!r}")


def scale(a: Tensor, c: float) -> Tensor:
    return _make("scale", (a,), a.data * c, lambda g: (g * c,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make("relu", (a,), a.data * mask, lambda g: (g * mask,))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    factor = np.where(a.data > 0, 1.0, slope)
    return _make("leaky_relu", (a,), a.data * factor, lambda g: (g * factor,))


def sigmoid(a: Tensor) -> Tensor:
    # stable piecewise form, no overflow for large |x|
    out = np.empty_like(a.data)
    pos = a.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ex = np.exp(a.data[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _make("sigmoid", (a,), out, lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make("tanh", (a,), out, lambda g: (g * (1.0 - out * out),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: {a.shape} x {b.shape}")
    return _make(
        "matmul",
        (a, b),
        a.data @ b.data,
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def gather_rows(a: Tensor, index: np.ndarray) -> Tensor:
    """Select rows of `a`; backward scatter-adds into the source rows."""
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= a.shape[0]):
        raise IndexError("gather_rows: index out of range")

    def bwd(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, index, g)
        return (ga,)

    return _make("gather_rows", (a,), a.data[index], bwd)


def concat_cols(tensors: Sequence[Tensor]) -> Tensor:
    rows = {t.shape[0] for t in tensors}
    if len(rows) != 1:
        raise DimensionError("concat_cols: row counts differ")
    widths = [t.shape[1] for t in tensors]
    splits = np.cumsum(widths)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=1))

    return _make("concat_cols", tuple(tensors),
                 np.concatenate([t.data for t in tensors], axis=1), bwd)


def sum_all(a: Tensor) -> Tensor:
    return _make("sum_all", (a,), np.array(a.data.sum()),
                 lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    return _make("mean_all", (a,), np.array(a.data.mean()),
                 lambda g: (np.broadcast_to(g / n, a.shape).copy(),))


def _check_segments(segments: np.ndarray, n: int, num_segments: int) -> np.ndarray:
    segments = np.asarray(segments, dtype=np.int64)
    if segments.shape != (n,):
        raise DimensionError("segment vector length must match row count")
    if segments.size and (segments.min() < 0 or segments.max() >= num_segments):
        raise IndexError("segment id out of range")
    return segments


def segment_sum(values: Tensor, segments, num_segments: int) -> Tensor:
    segments = _check_segments(segments, values.shape[0], num_segments)
    out = np.zeros((num_segments,) + values.shape[1:], dtype=np.float64)
    np.add.at(out, segments, values.data)
    return _make("segment_sum", (values,), out, lambda g: (g[segments],))


def segment_mean(values: Tensor, segments, num_segments: int) -> Tensor:
    segments = _check_segments(segments, values.shape[0], num_segments)
    counts = np.bincount(segments, minlength=num_segments).astype(np.float64)
    safe = np.maximum(counts, 1.0)
    out = np.zeros((num_segments,) + values.shape[1:], dtype=np.float64)
    np.add.at(out, segments, values.data)
    out /= safe.reshape((-1,) + (1,) * (values.data.ndim - 1))

    def bwd(g):
        scale_ = 1.0 / safe[segments]
        return ((g[segments].T * scale_).T,)

    return _make("segment_mean", (values,), out, bwd)


def segment_max(values: Tensor, segments, num_segments: int) -> Tensor:
    """Per-segment max; empty segments yield 0, ties route grad to the first row."""
    segments = _check_segments(segments, values.shape[0], num_segments)
    n, d = values.shape[0], int(np.prod(values.shape[1:], initial=1))
    flat = values.data.reshape(n, d) if values.data.ndim > 1 else values.data.reshape(n, 1)
    out = np.full((num_segments, d), -np.inf)
    np.maximum.at(out, segments, flat)
    empty = ~np.isfinite(out)
    out[empty] = 0.0
    # first maximal row per (segment, column)
    argmax = np.full((num_segments, d), -1, dtype=np.int64)
    for i in range(n):
        s = segments[i]
        hit = (flat[i] == out[s]) & (argmax[s] == -1)
        argmax[s][hit] = i

    def bwd(g):
        gflat = g.reshape(num_segments, d)
        gv = np.zeros((n, d))
        rows, cols = np.nonzero(argmax >= 0)
        gv[argmax[rows, cols], cols] += gflat[rows, cols]
        return (gv.reshape(values.shape),)

    return _make("segment_max", (values,), out.reshape((num_segments,) + values.shape[1:]), bwd)


def segment_reduce(kind: str, values: Tensor, segments, num_segments: int) -> Tensor:
    ops = {"sum": segment_sum, "mean": segment_mean, "max": segment_max}
    if kind not in ops:
        raise ContractError(f"unknown segment reduction: {kind!r}")
    return ops[kind](values, segments, num_segments)


def row_softmax(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionError("row_softmax expects a matrix")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - dot),)

    return _make("row_softmax", (a,), out, bwd)


def segment_softmax(scores: Tensor, segments, num_segments: int) -> Tensor:
    """Softmax over groups of a vector defined by `segments` (any order)."""
    if scores.data.ndim != 1:
        raise DimensionError("segment_softmax expects a vector")
    segments = _check_segments(segments, scores.shape[0], num_segments)
    gmax = np.full(num_segments, -np.inf)
    np.maximum.at(gmax, segments, scores.data)
    e = np.exp(scores.data - gmax[segments])
    denom = np.zeros(num_segments)
    np.add.at(denom, segments, e)
    out = e / denom[segments]

    def bwd(g):
        dot = np.zeros(num_segments)
        np.add.at(dot, segments, g * out)
        return (out * (g - dot[segments]),)

    return _make("segment_softmax", (scores,), out, bwd)


def pad_segments(values: Tensor, segments, num_segments: int, max_rows: int) -> Tensor:
    """Zero-pad each segment to `max_rows` rows and flatten per segment.

    Output row s is the concatenation of segment s's rows in stored order,
    padded with zeros up to ``max_rows * d``.
    """
    segments = _check_segments(segments, values.shape[0], num_segments)
    d = values.shape[1]
    counts = np.bincount(segments, minlength=num_segments)
    if counts.size and counts.max() > max_rows:
        from .errors import CapacityError

        raise CapacityError(f"segment of size {counts.max()} exceeds capacity {max_rows}")
    # position of each row within its segment (segments are block-contiguous
    # in batches, but handle arbitrary order anyway)
    pos = np.zeros(values.shape[0], dtype=np.int64)
    seen: dict[int, int] = {}
    for i, s in enumerate(segments):
        seen[s] = seen.get(int(s), 0)
        pos[i] = seen[s]
        seen[s] += 1
    out = np.zeros((num_segments, max_rows * d))
    for i, s in enumerate(segments):
        out[s, pos[i] * d:(pos[i] + 1) * d] = values.data[i]

    def bwd(g):
        gv = np.empty_like(values.data)
        for i, s in enumerate(segments):
            gv[i] = g[s, pos[i] * d:(pos[i] + 1) * d]
        return (gv,)

    return _make("pad_segments", (values,), out, bwd)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Batch normalization over rows; updates running stats in place when training."""
    if x.data.ndim != 2:
        raise DimensionError("batch_norm expects a matrix")
    n = x.shape[0]
    if training:
        if n == 0:
            raise ContractError("batch_norm: empty batch in training mode")
        mean = x.data.mean(axis=0)
        var = x.data.var(axis=0)  # biased, used for normalization
        unbiased = var * n / (n - 1) if n > 1 else var
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
    else:
        mean = running_mean
        var = running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv_std
    out = xhat * gamma.data + beta.data

    def bwd(g):
        dgamma = (g * xhat).sum(axis=0)
        dbeta = g.sum(axis=0)
        if training:
            gx = (gamma.data * inv_std / n) * (
                n * g - dbeta - xhat * dgamma
            )
        else:
            gx = g * gamma.data * inv_std
        return (gx, dgamma, dbeta)

    return _make("batch_norm", (x, gamma, beta), out, bwd)


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator) -> Tensor:
    from .errors import ConfigError

    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return _make("dropout", (x,), x.data.copy(), lambda g: (g,))
    keep = rng.random(x.shape) >= p
    factor = keep / (1.0 - p)
    return _make("dropout", (x,), x.data * factor, lambda g: (g * factor,))


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy with log-sum-exp stabilization."""
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if labels.shape != (n,):
        raise DimensionError("labels length must match logit rows")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise IndexError("class label out of range")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    out = np.array((lse - shifted[np.arange(n), labels]).mean())
    probs = np.exp(shifted) / np.exp(shifted).sum(axis=1, keepdims=True)

    def bwd(g):
        gl = probs.copy()
        gl[np.arange(n), labels] -= 1.0
        return (g * gl / n,)

    return _make("cross_entropy", (logits,), out, bwd)


def mse_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"mse: {pred.shape} vs {target.shape}")
    diff = pred.data - target
    out = np.array((diff * diff).mean())
    return _make("mse", (pred,), out, lambda g: (g * 2.0 * diff / diff.size,))


def loss(kind: str, predictions: Tensor, targets) -> Tensor:
    if kind == "cross_entropy":
        return cross_entropy(predictions, targets)
    if kind == "mse":
        return mse_loss(predictions, np.asarray(targets, dtype=np.float64))
    raise ContractError(f"unknown loss kind: {kind!r}")
