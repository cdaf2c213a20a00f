"""Synthetic graph datasets for smoke tests and desk-scale training.

All generators emit undirected graphs (both edge directions stored) with
one-hot degree features (clipped at 8) plus a constant channel, and are
deterministic under a seed.
"""

from __future__ import annotations

import numpy as np

from .graphs import Graph, GraphDataset
from .tensor import make_rng

_DEGREE_CAP = 8


def _featurize(num_nodes: int, edges: np.ndarray) -> np.ndarray:
    deg = np.zeros(num_nodes, dtype=np.int64)
    for u, _ in edges:
        deg[u] += 1
    deg = np.minimum(deg, _DEGREE_CAP)
    feats = np.zeros((num_nodes, _DEGREE_CAP + 2))
    feats[np.arange(num_nodes), deg] = 1.0
    feats[:, -1] = 1.0
    return feats


def _undirected(pairs: list[tuple[int, int]]) -> np.ndarray:
    both = [(u, v) for u, v in pairs] + [(v, u) for u, v in pairs]
    return np.asarray(sorted(set(both)), dtype=np.int64).reshape(-1, 2)


def _graph(pairs: list[tuple[int, int]], num_nodes: int, target) -> Graph:
    edges = _undirected(pairs)
    return Graph(num_nodes, _featurize(num_nodes, edges), edges, target)


def _clique(n: int, offset: int = 0) -> list[tuple[int, int]]:
    return [(offset + i, offset + j) for i in range(n) for j in range(i + 1, n)]


def _path(n: int, offset: int = 0) -> list[tuple[int, int]]:
    return [(offset + i, offset + i + 1) for i in range(n - 1)]


def _cycle(n: int, offset: int = 0) -> list[tuple[int, int]]:
    return _path(n, offset) + [(offset + n - 1, offset)]


def _star(n: int) -> list[tuple[int, int]]:
    return [(0, i) for i in range(1, n)]


def _random_tree(n: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    return [(int(rng.integers(0, i)), i) for i in range(1, n)]


def toy_cliques_vs_paths(num_graphs: int = 20, seed: int = 7) -> GraphDataset:
    """Linearly separable binary toy set: two cliques vs. two paths."""
    rng = make_rng(seed)
    graphs = []
    for i in range(num_graphs):
        a, b = int(rng.integers(3, 7)), int(rng.integers(3, 7))
        if i % 2 == 0:
            pairs = _clique(a) + _clique(b, offset=a)
            label = 0
        else:
            pairs = _path(a) + _path(b, offset=a)
            label = 1
        graphs.append(_graph(pairs, a + b, label))
    return GraphDataset("toy", graphs, "binary", num_classes=2)


def synthetic_binary(num_graphs: int = 188, seed: int = 11) -> GraphDataset:
    """Desk-scale binary set: random trees vs. chorded cycles (~18 nodes)."""
    rng = make_rng(seed)
    graphs = []
    for _ in range(num_graphs):
        n = int(rng.integers(10, 26))
        label = int(rng.integers(0, 2))
        if label == 0:
            pairs = _random_tree(n, rng)
        else:
            pairs = _cycle(n)
            for _ in range(n // 3):
                u, v = rng.integers(0, n, size=2)
                if u != v:
                    pairs.append((int(u), int(v)))
        graphs.append(_graph(pairs, n, label))
    return GraphDataset("synth-binary", graphs, "binary", num_classes=2)


def synthetic_multiclass(num_graphs: int = 600, seed: int = 13) -> GraphDataset:
    """Desk-scale 6-class set of distinct structural families."""
    rng = make_rng(seed)
    graphs = []
    for i in range(num_graphs):
        label = i % 6
        n = int(rng.integers(8, 21))
        if label == 0:
            pairs = _path(n)
        elif label == 1:
            pairs = _cycle(n)
        elif label == 2:
            pairs = _star(n)
        elif label == 3:
            k = int(rng.integers(5, 8))
            pairs = _clique(k)
            n = k
        elif label == 4:
            pairs = _random_tree(n, rng)
        else:
            # cycle plus a hub node wired to every cycle node
            pairs = _cycle(n - 1) + [(n - 1, j) for j in range(n - 1)]
        graphs.append(_graph(pairs, n, label))
    order = rng.permutation(num_graphs)
    return GraphDataset("synth-multi", [graphs[i] for i in order], "multiclass", num_classes=6)


def synthetic_regression(num_graphs: int = 120, seed: int = 17) -> GraphDataset:
    """Small regression set: target is normalized edge density plus noise."""
    rng = make_rng(seed)
    graphs = []
    for _ in range(num_graphs):
        n = int(rng.integers(6, 16))
        pairs = _random_tree(n, rng)
        extra = int(rng.integers(0, n))
        for _ in range(extra):
            u, v = rng.integers(0, n, size=2)
            if u != v:
                pairs.append((int(u), int(v)))
        edges = _undirected(pairs)
        density = edges.shape[0] / (n * (n - 1))
        target = float(density + 0.01 * rng.standard_normal())
        graphs.append(Graph(n, _featurize(n, edges), edges, target))
    return GraphDataset("synth-reg", graphs, "regression")
