"""Readout functions mapping node embeddings to graph-level outputs.

Three families:

* non-parametrized: ``sum``, ``mean``, ``max``;
* parametrized: DeepSets (base/large), Dense (padded MLP, not
  permutation-invariant), GRU (not permutation-invariant), virtual node;
* ensembles over the basic readouts: concatenation (``concat_r``),
  weighted representation combination (``wmean_r``, ``wmean_r_proj``) and
  prediction-level combination (``mean_pred``, ``wmean_pred``,
  ``wmean_pred_proj``).

Representation readouts return a graph matrix that a single prediction
head consumes; prediction ensembles own one head per basic readout and
return predictions directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, DimensionError
from .graphs import GraphBatch
from .nn import Dropout, BatchNorm1d, Linear, Module, uniform_init
from .tensor import Parameter, Tensor

NONPARAM_KINDS = ("sum", "mean", "max")
PARAM_KINDS = ("deepsets_base", "deepsets_large", "dense", "gru", "virtual_node")
ENSEMBLE_KINDS = ("concat_r", "wmean_r", "wmean_r_proj",
                  "mean_pred", "wmean_pred", "wmean_pred_proj")
PREDICTION_KINDS = ("mean_pred", "wmean_pred", "wmean_pred_proj")
READOUT_KINDS = NONPARAM_KINDS + PARAM_KINDS + ENSEMBLE_KINDS

DEEPSETS_WIDTH = 128
DENSE_HIDDEN = 512
HEAD_HIDDEN = 128


def readout_class(kind: str) -> str:
    if kind in NONPARAM_KINDS:
        return "NON-PAR"
    if kind in PARAM_KINDS:
        return "PAR"
    if kind in ENSEMBLE_KINDS:
        return "ENS"
    raise ConfigError(f"unknown readout kind: {kind!r}")


@dataclass(frozen=True)
class ReadoutSpec:
    kind: str
    d_v: int
    d_g: int
    base_kinds: tuple[str, ...] = ("sum", "mean", "max")

    def __post_init__(self):
        if self.kind not in READOUT_KINDS:
            raise ConfigError(f"readout: unknown kind {self.kind!r}")
        if self.kind in ENSEMBLE_KINDS:
            if len(self.base_kinds) < 2:
                raise ConfigError("readout: ensembles need at least 2 base kinds")
            bad = [k for k in self.base_kinds if k not in NONPARAM_KINDS]
            if bad:
                raise ConfigError(f"readout: invalid base kinds {bad}")

    @property
    def num_bases(self) -> int:
        return len(self.base_kinds)

    def representation_dim(self) -> int:
        """Width of the graph vector fed to the prediction head."""
        if self.kind in ("sum", "mean", "max", "virtual_node", "wmean_r"):
            return self.d_v
        if self.kind == "concat_r":
            return self.num_bases * self.d_v
        if self.kind in ("deepsets_base", "deepsets_large"):
            return DEEPSETS_WIDTH
        if self.kind in ("dense", "gru"):
            return self.d_g
        if self.kind == "wmean_r_proj":
            return self.d_g
        raise ContractError(f"{self.kind} has no single representation")


def basic_readout(kind: str, h: Tensor, graph_ids: np.ndarray, num_graphs: int) -> Tensor:
    return T.segment_reduce(kind, h, graph_ids, num_graphs)


class BasicReadout(Module):
    def __init__(self, kind: str):
        super().__init__()
        if kind not in NONPARAM_KINDS:
            raise ConfigError(f"basic readout: bad kind {kind!r}")
        self.kind = kind

    def forward(self, h: Tensor, batch: GraphBatch) -> Tensor:
        return basic_readout(self.kind, h, batch.graph_ids, batch.num_graphs)

    __call__ = forward


class ConcatReadout(Module):
    """z = R_1 || R_2 || ... || R_N in declared order."""

    def __init__(self, base_kinds: tuple[str, ...]):
        super().__init__()
        self.base_kinds = base_kinds

    def forward(self, h: Tensor, batch: GraphBatch) -> Tensor:
        parts = [basic_readout(k, h, batch.graph_ids, batch.num_graphs)
                 for k in self.base_kinds]
        return T.concat_cols(parts)

    __call__ = forward


class Projection(Module):
    """Per-readout affine map; identity-initialized in the square case."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        super().__init__()
        w = np.eye(d_in) if d_in == d_out else uniform_init(rng, (d_in, d_out), d_in)
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(d_out))

    def forward(self, z: Tensor) -> Tensor:
        return T.add(T.matmul(z, self.weight), self.bias)

    __call__ = forward


class WMeanReadout(Module):
    """z = sum_r [ w_r (W_r z_r + b_r^p) + b_r ] with learnable scalars.

    Without projection W_r is a fixed identity and d_g must equal d_v.
    """

    def __init__(self, base_kinds: tuple[str, ...], d_v: int, d_g: int,
                 with_projection: bool, rng: np.random.Generator):
        super().__init__()
        if not with_projection and d_g != d_v:
            raise DimensionError("wmean_r without projection requires d_g == d_v")
        self.base_kinds = base_kinds
        self.with_projection = with_projection
        for i, _ in enumerate(base_kinds):
            setattr(self, f"w{i}", Parameter(np.ones(1)))
            setattr(self, f"b{i}", Parameter(np.zeros(1)))
            if with_projection:
                setattr(self, f"proj{i}", Projection(d_v, d_g, rng))

    def forward(self, h: Tensor, batch: GraphBatch) -> Tensor:
        total = None
        for i, kind in enumerate(self.base_kinds):
            z = basic_readout(kind, h, batch.graph_ids, batch.num_graphs)
            if self.with_projection:
                z = getattr(self, f"proj{i}")(z)
            term = T.add(T.mul(z, getattr(self, f"w{i}")), getattr(self, f"b{i}"))
            total = term if total is None else T.add(total, term)
        return total

    __call__ = forward


class DeepSetsReadout(Module):
    """Shared per-node encoder followed by a per-graph sum.

    Base: 2 blocks of Linear(width) + BatchNorm + ReLU, dropout 0.4 after
    the last block. Large: 6 such blocks then dropout 0.4. The decoder is
    realized by the downstream prediction head.
    """

    def __init__(self, variant: str, d_v: int, rng: np.random.Generator,
                 width: int = DEEPSETS_WIDTH, drop_p: float = 0.4,
                 identity_encoder: bool = False):
        super().__init__()
        if variant not in ("base", "large"):
            raise ConfigError(f"deepsets: bad variant {variant!r}")
        self.identity_encoder = identity_encoder
        self.num_blocks = 0 if identity_encoder else (2 if variant == "base" else 6)
        in_dim = d_v
        for i in range(self.num_blocks):
            setattr(self, f"lin{i}", Linear(in_dim, width, rng))
            setattr(self, f"bn{i}", BatchNorm1d(width))
            in_dim = width
        if not identity_encoder:
            self.drop = Dropout(drop_p, rng)

    def forward(self, h: Tensor, batch: GraphBatch) -> Tensor:
        x = h
        for i in range(self.num_blocks):
            x = T.relu(getattr(self, f"bn{i}")(getattr(self, f"lin{i}")(x)))
        if not self.identity_encoder:
            x = self.drop(x)
        return T.segment_sum(x, batch.graph_ids, batch.num_graphs)

    __call__ = forward


class DenseReadout(Module):
    """Zero-pad each graph to the dataset-wide max node count, flatten in
    stored node order, apply a 2-layer MLP. Deliberately not
    permutation-invariant."""

    def __init__(self, d_v: int, d_g: int, max_nodes: int, rng: np.random.Generator,
                 hidden: int = DENSE_HIDDEN):
        super().__init__()
        self.d_v = d_v
        self.max_nodes = max_nodes
        self.lin1 = Linear(max_nodes * d_v, hidden, rng)
        self.lin2 = Linear(hidden, d_g, rng)

    def forward(self, h: Tensor, batch: GraphBatch) -> Tensor:
        padded = T.pad_segments(h, batch.graph_ids, batch.num_graphs, self.max_nodes)
        return self.lin2(T.relu(self.lin1(padded)))

    __call__ = forward


class GRUReadout(Module):
    """A GRU consumes each graph's node embeddings in stored order; the
    final hidden state (width d_g, zero initial state) is the readout."""

    def __init__(self, d_v: int, d_g: int, rng: np.random.Generator):
        super().__init__()
        from .nn import GRUCell

        self.d_g = d_g
        self.cell = GRUCell(d_v, d_g, rng)

    def forward(self, h: Tensor, batch: GraphBatch) -> Tensor:
        counts = batch.node_counts
        offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
        state = Tensor(np.zeros((batch.num_graphs, self.d_g)))
        for t in range(int(counts.max())):
            active = counts > t
            idx = np.where(active, offsets + t, 0)
            x_t = T.gather_rows(h, idx)
            new = self.cell.step(x_t, state)
            mask = Tensor(active.astype(np.float64)[:, None])
            inv = Tensor((~active).astype(np.float64)[:, None])
            state = T.add(T.mul(mask, new), T.mul(inv, state))
        return state

    __call__ = forward


class VirtualNodeReadout(Module):
    """Select the virtual node's embedding per graph (no explicit pooling)."""

    def forward(self, h: Tensor, batch: GraphBatch) -> Tensor:
        if batch.virtual_indices is None:
            raise ContractError("virtual_node readout needs a batch built with virtual nodes")
        return T.gather_rows(h, batch.virtual_indices)

    __call__ = forward


class PredictionHead(Module):
    """MLP with one hidden layer of width 128; emits logits / raw values."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 hidden: int = HEAD_HIDDEN):
        super().__init__()
        self.lin1 = Linear(in_dim, hidden, rng)
        self.lin2 = Linear(hidden, out_dim, rng)

    def forward(self, z: Tensor) -> Tensor:
        return self.lin2(T.relu(self.lin1(z)))

    __call__ = forward


class PredictionEnsemble(Module):
    """Combine per-readout predictions: y = sum_r w_r psi_r(proj_r(z_r)) + b_r.

    ``mean_pred`` fixes the combination to the arithmetic mean of heads;
    ``wmean_pred`` learns scalar weights with identity projections;
    ``wmean_pred_proj`` additionally learns per-readout projections.
    """

    def __init__(self, variant: str, base_kinds: tuple[str, ...], d_v: int, d_g: int,
                 out_dim: int, rng: np.random.Generator):
        super().__init__()
        if variant not in PREDICTION_KINDS:
            raise ConfigError(f"prediction ensemble: bad variant {variant!r}")
        self.variant = variant
        self.base_kinds = base_kinds
        head_in = d_g if variant == "wmean_pred_proj" else d_v
        for i, _ in enumerate(base_kinds):
            if variant == "wmean_pred_proj":
                setattr(self, f"proj{i}", Projection(d_v, d_g, rng))
            setattr(self, f"head{i}", PredictionHead(head_in, out_dim, rng))
            if variant != "mean_pred":
                setattr(self, f"w{i}", Parameter(np.ones(1)))
                setattr(self, f"b{i}", Parameter(np.zeros(1)))

    def head_outputs(self, h: Tensor, batch: GraphBatch) -> list[Tensor]:
        outs = []
        for i, kind in enumerate(self.base_kinds):
            z = basic_readout(kind, h, batch.graph_ids, batch.num_graphs)
            if self.variant == "wmean_pred_proj":
                z = getattr(self, f"proj{i}")(z)
            outs.append(getattr(self, f"head{i}")(z))
        return outs

    def forward(self, h: Tensor, batch: GraphBatch) -> Tensor:
        outs = self.head_outputs(h, batch)
        total = None
        for i, y in enumerate(outs):
            if self.variant != "mean_pred":
                y = T.add(T.mul(y, getattr(self, f"w{i}")), getattr(self, f"b{i}"))
            total = y if total is None else T.add(total, y)
        if self.variant == "mean_pred":
            total = T.scale(total, 1.0 / len(outs))
        return total

    __call__ = forward


def build_readout(spec: ReadoutSpec, out_dim: int, max_nodes: int,
                  rng: np.random.Generator) -> Module:
    """Instantiate the readout module for a spec.

    Prediction-level ensembles return predictions directly (the caller
    must not attach another head); everything else returns a graph
    representation of width ``spec.representation_dim()``.
    """
    k = spec.kind
    if k in NONPARAM_KINDS:
        return BasicReadout(k)
    if k == "concat_r":
        return ConcatReadout(spec.base_kinds)
    if k == "wmean_r":
        return WMeanReadout(spec.base_kinds, spec.d_v, spec.d_v, False, rng)
    if k == "wmean_r_proj":
        return WMeanReadout(spec.base_kinds, spec.d_v, spec.d_g, True, rng)
    if k == "deepsets_base":
        return DeepSetsReadout("base", spec.d_v, rng)
    if k == "deepsets_large":
        return DeepSetsReadout("large", spec.d_v, rng)
    if k == "dense":
        return DenseReadout(spec.d_v, spec.d_g, max_nodes, rng)
    if k == "gru":
        return GRUReadout(spec.d_v, spec.d_g, rng)
    if k == "virtual_node":
        return VirtualNodeReadout()
    if k in PREDICTION_KINDS:
        return PredictionEnsemble(k, spec.base_kinds, spec.d_v, spec.d_g, out_dim, rng)
    raise ConfigError(f"unknown readout kind: {k!r}")
