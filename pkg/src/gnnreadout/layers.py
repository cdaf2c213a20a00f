"""Message-passing layers (GCN, GAT, GIN) and the stacked encoder.

All layers consume a :class:`~gnnreadout.graphs.GraphBatch` plus the
current node-embedding matrix and return the updated matrix. Scatter
arithmetic runs over the batch's flat edge lists, so batching is
transparent: encoding graphs together equals encoding them one by one.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import DimensionError, FormatError
from .graphs import GraphBatch
from .nn import Linear, Module, uniform_init
from .tensor import Parameter, Tensor

CONV_KINDS = ("gcn", "gat", "gin")


def _with_self_loops(src: np.ndarray, dst: np.ndarray, n: int):
    loops = np.arange(n, dtype=np.int64)
    return np.concatenate([src, loops]), np.concatenate([dst, loops])


class GCNLayer(Module):
    """Symmetric-normalized convolution with self-loops:
    H' = D^-1/2 (A+I) D^-1/2 H W + b."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        super().__init__()
        self.in_dim, self.out_dim = in_dim, out_dim
        self.linear = Linear(in_dim, out_dim, rng, bias=False)
        self.bias = Parameter(np.zeros(out_dim))

    def forward(self, batch: GraphBatch, h: Tensor) -> Tensor:
        if h.shape[1] != self.in_dim:
            raise DimensionError(f"gcn: expected width {self.in_dim}, got {h.shape[1]}")
        n = h.shape[0]
        src, dst = _with_self_loops(batch.edge_src, batch.edge_dst, n)
        deg = np.bincount(dst, minlength=n).astype(np.float64)
        coeff = 1.0 / np.sqrt(deg[src] * deg[dst])
        hw = self.linear(h)
        messages = T.mul(T.gather_rows(hw, src), Tensor(coeff[:, None]))
        return T.add(T.segment_sum(messages, dst, n), self.bias)

    __call__ = forward


class GATLayer(Module):
    """Single-head additive attention with LeakyReLU(0.2) and self-loops."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 slope: float = 0.2):
        super().__init__()
        self.in_dim, self.out_dim = in_dim, out_dim
        self.slope = slope
        self.linear = Linear(in_dim, out_dim, rng, bias=False)
        self.att_src = Parameter(uniform_init(rng, (out_dim, 1), out_dim))
        self.att_dst = Parameter(uniform_init(rng, (out_dim, 1), out_dim))
        self.bias = Parameter(np.zeros(out_dim))

    def forward(self, batch: GraphBatch, h: Tensor) -> Tensor:
        if h.shape[1] != self.in_dim:
            raise DimensionError(f"gat: expected width {self.in_dim}, got {h.shape[1]}")
        n = h.shape[0]
        src, dst = _with_self_loops(batch.edge_src, batch.edge_dst, n)
        hw = self.linear(h)
        # a^T [Wh_u || Wh_v] split into source and target halves
        s = T.matmul(hw, self.att_src)
        t = T.matmul(hw, self.att_dst)
        scores_2d = T.add(T.gather_rows(s, src), T.gather_rows(t, dst))
        scores = T.leaky_relu(_flatten(scores_2d), self.slope)
        alpha = T.segment_softmax(scores, dst, n)
        messages = T.mul(T.gather_rows(hw, src), _column(alpha))
        return T.add(T.segment_sum(messages, dst, n), self.bias)

    __call__ = forward


def _flatten(x: Tensor) -> Tensor:
    out = x.data.reshape(-1)
    return T._make("reshape", (x,), out, lambda g: (g.reshape(x.shape),))


def _column(x: Tensor) -> Tensor:
    out = x.data.reshape(-1, 1)
    return T._make("reshape", (x,), out, lambda g: (g.reshape(x.shape),))


class GINLayer(Module):
    """H'_u = MLP((1 + eps) h_u + sum of neighbor states), eps fixed at 0."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 eps: float = 0.0):
        super().__init__()
        self.in_dim, self.out_dim = in_dim, out_dim
        self.eps = eps
        self.lin1 = Linear(in_dim, out_dim, rng)
        self.lin2 = Linear(out_dim, out_dim, rng)

    def forward(self, batch: GraphBatch, h: Tensor) -> Tensor:
        if h.shape[1] != self.in_dim:
            raise DimensionError(f"gin: expected width {self.in_dim}, got {h.shape[1]}")
        n = h.shape[0]
        if batch.edge_src.size:
            neigh = T.segment_sum(T.gather_rows(h, batch.edge_src), batch.edge_dst, n)
            agg = T.add(T.scale(h, 1.0 + self.eps), neigh)
        else:
            agg = T.scale(h, 1.0 + self.eps)
        return self.lin2(T.relu(self.lin1(agg)))

    __call__ = forward


_LAYER_TYPES = {"gcn": GCNLayer, "gat": GATLayer, "gin": GINLayer}


class GnnEncoder(Module):
    """Input featurizer + L conv layers with ReLU between (none after the last)."""

    def __init__(self, conv: str, in_dim: int, hidden_dim: int, num_layers: int,
                 rng: np.random.Generator):
        super().__init__()
        if conv not in _LAYER_TYPES:
            raise DimensionError(f"unknown conv kind: {conv!r}")
        self.conv = conv
        self.hidden_dim = hidden_dim
        self.num_layers = num_layers
        self.featurizer = Linear(in_dim, hidden_dim, rng)
        for i in range(num_layers):
            setattr(self, f"conv{i}", _LAYER_TYPES[conv](hidden_dim, hidden_dim, rng))

    def forward(self, batch: GraphBatch) -> Tensor:
        h = self.featurizer(batch.node_features)
        for i in range(self.num_layers):
            h = getattr(self, f"conv{i}")(batch, h)
            if i + 1 < self.num_layers:
                h = T.relu(h)
        return h

    __call__ = forward


# ---------------------------------------------------------------------------
# checkpoint container: versioned text format mapping names to shape + values

CHECKPOINT_HEADER = "gnnreadout-checkpoint v1"


def save_checkpoint(model: Module, path: str | Path) -> None:
    lines = [CHECKPOINT_HEADER]
    for name, arr in sorted(model.state_dict().items()):
        shape = " ".join(str(s) for s in arr.shape)
        values = " ".join(float(v).hex() for v in arr.reshape(-1))
        lines.append(f"{name}|{shape}|{values}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(model: Module, path: str | Path) -> None:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != CHECKPOINT_HEADER:
        raise FormatError(f"not a {CHECKPOINT_HEADER!r} file: {path}")
    state: dict[str, np.ndarray] = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        name, shape_s, values_s = line.split("|")
        shape = tuple(int(x) for x in shape_s.split()) if shape_s.strip() else ()
        values = np.array([float.fromhex(v) for v in values_s.split()])
        state[name] = values.reshape(shape)
    model.load_state_dict(state)
