import numpy as np
import pytest

from gnnreadout.graphs import Graph
from gnnreadout.tensor import make_rng


def random_graph(rng: np.random.Generator, max_nodes: int = 12, feat_dim: int = 4,
                 edge_prob: float = 0.4, target=0) -> Graph:
    """Random undirected graph with both edge directions stored."""
    n = int(rng.integers(1, max_nodes + 1))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)
             if rng.random() < edge_prob]
    both = pairs + [(j, i) for i, j in pairs]
    edges = np.asarray(sorted(both), dtype=np.int64).reshape(-1, 2)
    feats = rng.standard_normal((n, feat_dim))
    return Graph(n, feats, edges, target)


@pytest.fixture
def rng():
    return make_rng(1234)
