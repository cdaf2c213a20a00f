"""Full graph model: encoder -> readout -> prediction head."""

from __future__ import annotations

import numpy as np

from .graphs import GraphBatch
from .layers import GnnEncoder
from .nn import Module
from .readouts import (
    PREDICTION_KINDS,
    PredictionHead,
    ReadoutSpec,
    build_readout,
)
from .tensor import Tensor


class GraphModel(Module):
    """Message-passing encoder plus readout plus prediction head(s).

    ``forward`` always returns predictions (logits for classification, a
    single column for regression). For prediction-level ensembles the
    readout itself produces predictions and no extra head exists.
    """

    def __init__(self, conv: str, in_dim: int, num_layers: int, spec: ReadoutSpec,
                 out_dim: int, max_nodes: int, rng: np.random.Generator):
        super().__init__()
        self.spec = spec
        self.out_dim = out_dim
        self.needs_virtual_node = spec.kind == "virtual_node"
        self.encoder = GnnEncoder(conv, in_dim, spec.d_v, num_layers, rng)
        self.readout = build_readout(spec, out_dim, max_nodes, rng)
        if spec.kind in PREDICTION_KINDS:
            self.head = None
        else:
            self.head = PredictionHead(spec.representation_dim(), out_dim, rng)

    def graph_representation(self, batch: GraphBatch) -> Tensor:
        if self.head is None:
            raise ValueError("prediction ensembles have no single representation")
        return self.readout(self.encoder(batch), batch)

    def forward(self, batch: GraphBatch) -> Tensor:
        h = self.encoder(batch)
        if self.head is None:
            return self.readout(h, batch)
        return self.head(self.readout(h, batch))

    __call__ = forward
