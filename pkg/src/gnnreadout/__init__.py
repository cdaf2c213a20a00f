"""Graph neural networks with a full catalogue of readout functions."""

from .graphs import Graph, GraphBatch, GraphDataset, batch, unbatch
from .model import GraphModel
from .readouts import READOUT_KINDS, ReadoutSpec
from .tensor import Parameter, Tape, Tensor, backward, make_rng

__all__ = [
    "Graph", "GraphBatch", "GraphDataset", "GraphModel", "Parameter",
    "READOUT_KINDS", "ReadoutSpec", "Tape", "Tensor", "backward", "batch",
    "make_rng", "unbatch",
]

__version__ = "0.1.0"
