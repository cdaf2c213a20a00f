"""Dataset registry: built-in synthetic sets and on-disk corpora."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError
from .graphs import (
    DatasetSplit,
    GraphDataset,
    load_zinc_subset,
    parse_tudataset,
    resolve_dataset_dir,
)
from . import synth

_BUILTINS = {
    "toy": synth.toy_cliques_vs_paths,
    "synth-binary": synth.synthetic_binary,
    "synth-multi": synth.synthetic_multiclass,
    "synth-reg": synth.synthetic_regression,
}

# Table-style defaults per known corpus: (layers, node_dim, graph_dim)
DATASET_DEFAULTS = {
    "enzymes": (3, 128, 128),
    "mutag": (3, 64, 128),
    "zinc": (3, 128, 128),
    "reddit-multi-12k": (3, 128, 128),
}


def load_dataset(name: str, data_dir: Optional[str] = None) -> GraphDataset:
    """Load a dataset by name.

    Built-in names (toy, synth-*) need no path. On-disk datasets resolve
    their directory from ``data_dir`` or $DATASET_DIR/<name>; a directory
    containing ``train.txt`` is read as the pre-split molecule format,
    anything else as a TUDataset directory.
    """
    if name in _BUILTINS:
        return _BUILTINS[name]()
    directory = resolve_dataset_dir(data_dir, name)
    if not Path(directory).is_dir():
        raise ConfigError(f"dataset directory not found: {directory}")
    if (Path(directory) / "train.txt").exists():
        train, val, test = load_zinc_subset(directory)
        graphs = train + val + test
        n1, n2 = len(train), len(train) + len(val)
        split = DatasetSplit(
            train=np.arange(0, n1),
            val=np.arange(n1, n2),
            test=np.arange(n2, len(graphs)),
        )
        return GraphDataset(name, graphs, "regression", presplit=split)
    graphs = parse_tudataset(directory)
    labels = sorted({int(g.target) for g in graphs})
    num_classes = len(labels)
    task = "binary" if num_classes == 2 else "multiclass"
    return GraphDataset(name, graphs, task, num_classes=num_classes)
