"""Graph data model, dataset parsers and batching utilities.

Supported on-disk formats:

* TUDataset text layout: ``<DS>_A.txt`` (comma-separated 1-indexed edge
  pairs), ``<DS>_graph_indicator.txt`` (node -> graph id, 1-indexed),
  ``<DS>_graph_labels.txt`` and optional ``<DS>_node_labels.txt`` /
  ``<DS>_node_attributes.txt``.

* ZINC-style pre-split directory: ``train.txt`` / ``val.txt`` /
  ``test.txt``, each a line-oriented file::

      atom_vocab <K>
      graph <num_nodes> <target>
      nodes <atom id per node, space-separated>
      edges <u v u v ...>            # directed pairs, 0-indexed; may be empty

  Node features are one-hot atom type of width K; targets are real
  scalars taken verbatim.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, ContractError, DimensionError, FormatError
from .tensor import Tensor


@dataclass(frozen=True)
class Graph:
    num_nodes: int
    node_features: np.ndarray  # (num_nodes, d) float64
    edges: np.ndarray  # (num_edges, 2) int64, directed pairs
    target: float | int
    virtual_index: Optional[int] = None  # set by add_virtual_node

    def __post_init__(self):
        if self.num_nodes < 1:
            raise ContractError("graph must have at least one node")
        if self.edges.size and (self.edges.min() < 0 or self.edges.max() >= self.num_nodes):
            raise ContractError("edge endpoint out of range")

    @property
    def feature_dim(self) -> int:
        return self.node_features.shape[1]

    def degree_multiset(self) -> tuple[int, ...]:
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        for u, _ in self.edges:
            deg[u] += 1
        return tuple(sorted(deg.tolist()))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Graph)
            and self.num_nodes == other.num_nodes
            and np.array_equal(self.node_features, other.node_features)
            and np.array_equal(self.edges, other.edges)
            and self.target == other.target
            and self.virtual_index == other.virtual_index
        )


@dataclass(frozen=True)
class GraphBatch:
    node_features: Tensor  # (N_total, d)
    edge_src: np.ndarray
    edge_dst: np.ndarray
    graph_ids: np.ndarray  # (N_total,) block-contiguous, non-decreasing
    num_graphs: int
    targets: np.ndarray
    node_counts: np.ndarray  # nodes per graph
    virtual_indices: Optional[np.ndarray] = None

    @property
    def num_nodes(self) -> int:
        return self.node_features.shape[0]


@dataclass(frozen=True)
class DatasetSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


@dataclass
class GraphDataset:
    """A named list of graphs plus task metadata."""

    name: str
    graphs: list[Graph]
    task: str  # binary | multiclass | regression
    num_classes: int = 0
    presplit: Optional[DatasetSplit] = None

    @property
    def feature_dim(self) -> int:
        return self.graphs[0].feature_dim

    @property
    def max_nodes(self) -> int:
        return max(g.num_nodes for g in self.graphs)


# ---------------------------------------------------------------------------
# TUDataset format

def _read_lines(path: Path) -> list[str]:
    if not path.exists():
        raise FormatError(f"missing dataset file: {path.name}")
    return path.read_text().splitlines()


def _dataset_prefix(directory: Path) -> str:
    hits = sorted(directory.glob("*_A.txt"))
    if not hits:
        raise FormatError(f"no <DS>_A.txt found in {directory}")
    return hits[0].name[: -len("_A.txt")]


def parse_tudataset(directory_path: str | os.PathLike) -> list[Graph]:
    """Parse one TUDataset-format directory into a list of graphs.

    Node features are one-hot node label concatenated with raw node
    attributes when those files exist; otherwise one-hot degree (clipped
    at 64) plus a constant-1 channel.
    """
    directory = Path(directory_path)
    ds = _dataset_prefix(directory)

    indicator = []
    for ln, line in enumerate(_read_lines(directory / f"{ds}_graph_indicator.txt"), 1):
        if line.strip():
            indicator.append(int(line))
    indicator = np.asarray(indicator, dtype=np.int64) - 1  # to 0-indexed
    num_graphs = int(indicator.max()) + 1
    num_nodes_total = len(indicator)

    edges = []
    for ln, line in enumerate(_read_lines(directory / f"{ds}_A.txt"), 1):
        if not line.strip():
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise FormatError(f"{ds}_A.txt line {ln}: expected two node ids")
        u, v = int(parts[0]) - 1, int(parts[1]) - 1
        if not (0 <= u < num_nodes_total and 0 <= v < num_nodes_total):
            raise FormatError(f"{ds}_A.txt line {ln}: dangling node id")
        if indicator[u] != indicator[v]:
            raise FormatError(f"{ds}_A.txt line {ln}: edge crosses graph boundary")
        edges.append((u, v))

    labels_raw = [int(x) for x in _read_lines(directory / f"{ds}_graph_labels.txt") if x.strip()]
    if len(labels_raw) != num_graphs:
        raise FormatError(f"{ds}_graph_labels.txt: expected {num_graphs} labels")
    classes = sorted(set(labels_raw))
    remap = {c: i for i, c in enumerate(classes)}
    labels = [remap[x] for x in labels_raw]

    node_label_path = directory / f"{ds}_node_labels.txt"
    node_attr_path = directory / f"{ds}_node_attributes.txt"
    feat_parts = []
    if node_label_path.exists():
        raw = [int(x) for x in node_label_path.read_text().splitlines() if x.strip()]
        if len(raw) != num_nodes_total:
            raise FormatError(f"{ds}_node_labels.txt: expected {num_nodes_total} lines")
        values = sorted(set(raw))
        lmap = {v: i for i, v in enumerate(values)}
        onehot = np.zeros((num_nodes_total, len(values)))
        onehot[np.arange(num_nodes_total), [lmap[x] for x in raw]] = 1.0
        feat_parts.append(onehot)
    if node_attr_path.exists():
        rows = []
        for ln, line in enumerate(node_attr_path.read_text().splitlines(), 1):
            if not line.strip():
                continue
            rows.append([float(x) for x in line.replace(",", " ").split()])
        if len(rows) != num_nodes_total:
            raise FormatError(f"{ds}_node_attributes.txt: expected {num_nodes_total} lines")
        feat_parts.append(np.asarray(rows, dtype=np.float64))

    if feat_parts:
        features = np.concatenate(feat_parts, axis=1)
    else:
        # featureless social graphs: one-hot degree clipped at 64 + constant 1
        deg = np.zeros(num_nodes_total, dtype=np.int64)
        for u, _ in edges:
            deg[u] += 1
        deg = np.minimum(deg, 64)
        features = np.zeros((num_nodes_total, 66))
        features[np.arange(num_nodes_total), deg] = 1.0
        features[:, 65] = 1.0

    node_offsets = np.zeros(num_graphs + 1, dtype=np.int64)
    counts = np.bincount(indicator, minlength=num_graphs)
    if (counts == 0).any():
        raise FormatError(f"{ds}_graph_indicator.txt: graph with zero nodes")
    node_offsets[1:] = np.cumsum(counts)
    per_graph_edges: list[list[tuple[int, int]]] = [[] for _ in range(num_graphs)]
    for u, v in edges:
        g = indicator[u]
        off = node_offsets[g]
        per_graph_edges[g].append((u - off, v - off))

    graphs = []
    for g in range(num_graphs):
        lo, hi = node_offsets[g], node_offsets[g + 1]
        e = np.asarray(per_graph_edges[g], dtype=np.int64).reshape(-1, 2)
        graphs.append(Graph(int(hi - lo), features[lo:hi].copy(), e, labels[g]))
    return graphs


def write_tudataset(graphs: Sequence[Graph], directory_path: str | os.PathLike,
                    name: str = "DS", node_labels: Optional[Sequence[Sequence[int]]] = None) -> None:
    """Serialize graphs in the TUDataset layout (used for fixtures and tests).

    Features are written to ``<name>_node_attributes.txt`` verbatim unless
    ``node_labels`` is given, in which case labels go to
    ``<name>_node_labels.txt`` instead.
    """
    directory = Path(directory_path)
    directory.mkdir(parents=True, exist_ok=True)
    a_lines, ind_lines, label_lines, attr_lines, nlabel_lines = [], [], [], [], []
    offset = 0
    for gi, g in enumerate(graphs):
        for u, v in g.edges:
            a_lines.append(f"{u + 1 + offset}, {v + 1 + offset}")
        ind_lines.extend([str(gi + 1)] * g.num_nodes)
        label_lines.append(str(int(g.target)))
        if node_labels is None:
            for row in g.node_features:
                attr_lines.append(", ".join(repr(float(x)) for x in row))
        else:
            nlabel_lines.extend(str(x) for x in node_labels[gi])
        offset += g.num_nodes
    (directory / f"{name}_A.txt").write_text("\n".join(a_lines) + "\n")
    (directory / f"{name}_graph_indicator.txt").write_text("\n".join(ind_lines) + "\n")
    (directory / f"{name}_graph_labels.txt").write_text("\n".join(label_lines) + "\n")
    if node_labels is None:
        (directory / f"{name}_node_attributes.txt").write_text("\n".join(attr_lines) + "\n")
    else:
        (directory / f"{name}_node_labels.txt").write_text("\n".join(nlabel_lines) + "\n")


# ---------------------------------------------------------------------------
# ZINC-style pre-split format

def _parse_zinc_file(path: Path) -> list[Graph]:
    lines = [ln for ln in _read_lines(path) if ln.strip()]
    if not lines or not lines[0].startswith("atom_vocab"):
        raise FormatError(f"{path.name}: first line must be 'atom_vocab <K>'")
    vocab = int(lines[0].split()[1])
    graphs = []
    i = 1
    while i < len(lines):
        head = lines[i].split()
        if head[0] != "graph" or len(head) != 3:
            raise FormatError(f"{path.name}: expected 'graph <n> <target>' at line {i + 1}")
        n, target = int(head[1]), float(head[2])
        node_line = lines[i + 1].split()
        if node_line[0] != "nodes" or len(node_line) != n + 1:
            raise FormatError(f"{path.name}: bad nodes line at line {i + 2}")
        atoms = np.asarray([int(x) for x in node_line[1:]], dtype=np.int64)
        if atoms.size and (atoms.min() < 0 or atoms.max() >= vocab):
            raise FormatError(f"{path.name}: atom id out of vocabulary at line {i + 2}")
        edge_line = lines[i + 2].split()
        if edge_line[0] != "edges" or len(edge_line) % 2 != 1:
            raise FormatError(f"{path.name}: bad edges line at line {i + 3}")
        flat = [int(x) for x in edge_line[1:]]
        e = np.asarray(flat, dtype=np.int64).reshape(-1, 2)
        features = np.zeros((n, vocab))
        features[np.arange(n), atoms] = 1.0
        graphs.append(Graph(n, features, e, target))
        i += 3
    return graphs


def load_zinc_subset(directory_path: str | os.PathLike) -> tuple[list[Graph], list[Graph], list[Graph]]:
    """Load the three pre-split molecule files; splits are taken verbatim."""
    directory = Path(directory_path)
    return tuple(_parse_zinc_file(directory / f"{split}.txt") for split in ("train", "val", "test"))


def write_zinc_file(graphs: Sequence[Graph], path: str | os.PathLike, atom_vocab: int) -> None:
    lines = [f"atom_vocab {atom_vocab}"]
    for g in graphs:
        atoms = g.node_features.argmax(axis=1)
        lines.append(f"graph {g.num_nodes} {g.target!r}")
        lines.append("nodes " + " ".join(str(int(a)) for a in atoms))
        lines.append("edges " + " ".join(str(int(x)) for x in g.edges.reshape(-1)))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# splits, batching, permutation, virtual node

def make_split(n: int, proportions: tuple[float, float, float],
               rng: np.random.Generator) -> DatasetSplit:
    """Random partition with sizes floor(p0*n) / floor(p1*n) / remainder."""
    if abs(sum(proportions) - 1.0) > 1e-9:
        raise ConfigError("split proportions must sum to 1")
    n_train = int(np.floor(proportions[0] * n))
    n_val = int(np.floor(proportions[1] * n))
    n_test = n - n_train - n_val
    if n < 3 or min(n_train, n_val, n_test) < 1:
        raise ConfigError(f"n={n} too small for nonempty splits")
    perm = rng.permutation(n)
    return DatasetSplit(
        train=np.sort(perm[:n_train]),
        val=np.sort(perm[n_train:n_train + n_val]),
        test=np.sort(perm[n_train + n_val:]),
    )


def batch(graphs: Sequence[Graph]) -> GraphBatch:
    dims = {g.feature_dim for g in graphs}
    if len(dims) != 1:
        raise DimensionError(f"feature widths differ: {sorted(dims)}")
    counts = np.asarray([g.num_nodes for g in graphs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    feats = np.concatenate([g.node_features for g in graphs], axis=0)
    srcs, dsts = [], []
    for g, off in zip(graphs, offsets):
        if g.edges.size:
            srcs.append(g.edges[:, 0] + off)
            dsts.append(g.edges[:, 1] + off)
    src = np.concatenate(srcs) if srcs else np.zeros(0, dtype=np.int64)
    dst = np.concatenate(dsts) if dsts else np.zeros(0, dtype=np.int64)
    graph_ids = np.repeat(np.arange(len(graphs)), counts)
    virtuals = None
    if all(g.virtual_index is not None for g in graphs):
        virtuals = np.asarray([g.virtual_index + off for g, off in zip(graphs, offsets)])
    return GraphBatch(
        node_features=Tensor(feats),
        edge_src=src,
        edge_dst=dst,
        graph_ids=graph_ids,
        num_graphs=len(graphs),
        targets=np.asarray([g.target for g in graphs]),
        node_counts=counts,
        virtual_indices=virtuals,
    )


def unbatch(b: GraphBatch) -> list[Graph]:
    offsets = np.concatenate([[0], np.cumsum(b.node_counts)])
    graphs = []
    for g in range(b.num_graphs):
        lo, hi = offsets[g], offsets[g + 1]
        mask = (b.edge_src >= lo) & (b.edge_src < hi)
        e = np.stack([b.edge_src[mask] - lo, b.edge_dst[mask] - lo], axis=1) if mask.any() \
            else np.zeros((0, 2), dtype=np.int64)
        target = b.targets[g]
        target = int(target) if float(target).is_integer() else float(target)
        virtual = None
        if b.virtual_indices is not None:
            virtual = int(b.virtual_indices[g] - lo)
        graphs.append(Graph(int(hi - lo), b.node_features.data[lo:hi].copy(),
                            e.astype(np.int64), target, virtual))
    return graphs


def permute(g: Graph, perm: Sequence[int]) -> Graph:
    """Relabel nodes: new index of old node i is perm[i]."""
    perm = np.asarray(perm, dtype=np.int64)
    if sorted(perm.tolist()) != list(range(g.num_nodes)):
        raise ContractError("permutation is not a bijection on node ids")
    feats = np.empty_like(g.node_features)
    feats[perm] = g.node_features
    edges = perm[g.edges] if g.edges.size else g.edges
    virtual = int(perm[g.virtual_index]) if g.virtual_index is not None else None
    return Graph(g.num_nodes, feats, edges, g.target, virtual)


def add_virtual_node(g: Graph) -> Graph:
    """Append a zero-feature node bidirectionally connected to all others."""
    n = g.num_nodes
    feats = np.concatenate([g.node_features, np.zeros((1, g.feature_dim))], axis=0)
    extra = np.concatenate([
        np.stack([np.full(n, n), np.arange(n)], axis=1),
        np.stack([np.arange(n), np.full(n, n)], axis=1),
    ])
    edges = np.concatenate([g.edges, extra]) if g.edges.size else extra
    return Graph(n + 1, feats, edges.astype(np.int64), g.target, virtual_index=n)


def resolve_dataset_dir(path: Optional[str], name: str) -> Path:
    """CLI flag wins; fall back to $DATASET_DIR/<name>."""
    if path:
        return Path(path)
    root = os.environ.get("DATASET_DIR")
    if not root:
        raise ConfigError("no dataset path given and DATASET_DIR is unset")
    return Path(root) / name
