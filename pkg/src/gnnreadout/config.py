"""Experiment configuration: a line-oriented ``key = value`` format.

Grammar (documented in the README): blank lines and ``#`` comments are
ignored; ``[section]`` headers group keys; every other line is
``key = value``. Sections: ``[experiment]``, ``[model]``, ``[training]``
for single runs, plus ``[grid]`` for grid sweeps. List values are
comma-separated.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .datasets import DATASET_DEFAULTS
from .errors import ConfigError
from .layers import CONV_KINDS
from .readouts import NONPARAM_KINDS, READOUT_KINDS, ReadoutSpec
from .training import ModelSettings, TrainSettings


@dataclass
class ExperimentConfig:
    dataset: str = "toy"
    data_dir: str = ""
    out_dir: str = "runs"
    seed: int = 0
    repeats: int = 5
    conv: str = "gcn"
    layers: int = 3
    node_dim: int = 128
    graph_dim: int = 128
    readout: str = "sum"
    base_kinds: tuple[str, ...] = ("sum", "mean", "max")
    batch_size: int = 32
    max_epochs: int = 200
    lr: float = 1e-3
    weight_decay: float = 0.01

    def validate(self) -> None:
        if self.conv not in CONV_KINDS:
            raise ConfigError(f"model.conv: unknown convolution {self.conv!r}")
        if self.readout not in READOUT_KINDS:
            raise ConfigError(f"model.readout: unknown readout kind {self.readout!r}")
        bad = [k for k in self.base_kinds if k not in NONPARAM_KINDS]
        if bad:
            raise ConfigError(f"model.base_kinds: invalid kinds {bad}")
        for name in ("layers", "node_dim", "graph_dim", "batch_size", "max_epochs",
                     "repeats"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1")
        if self.lr <= 0:
            raise ConfigError("training.lr: must be positive")

    def readout_spec(self) -> ReadoutSpec:
        return ReadoutSpec(self.readout, self.node_dim, self.graph_dim, self.base_kinds)

    def model_settings(self) -> ModelSettings:
        return ModelSettings(self.conv, self.layers, self.readout_spec())

    def train_settings(self) -> TrainSettings:
        return TrainSettings(self.batch_size, self.max_epochs, self.lr, self.weight_decay)


@dataclass
class GridConfig:
    datasets: tuple[str, ...] = ("toy",)
    convs: tuple[str, ...] = ("gcn",)
    readouts: tuple[str, ...] = ("sum",)
    base: ExperimentConfig = field(default_factory=ExperimentConfig)

    def cells(self):
        for ds in self.datasets:
            for conv in self.convs:
                for readout in self.readouts:
                    cfg = replace_config(self.base, dataset=ds, conv=conv, readout=readout)
                    apply_dataset_defaults(cfg)
                    yield cfg


_SECTION_OF_KEY = {
    "dataset": "experiment", "data_dir": "experiment", "out_dir": "experiment",
    "seed": "experiment", "repeats": "experiment",
    "conv": "model", "layers": "model", "node_dim": "model", "graph_dim": "model",
    "readout": "model", "base_kinds": "model",
    "batch_size": "training", "max_epochs": "training", "lr": "training",
    "weight_decay": "training",
}
_GRID_KEYS = ("datasets", "convs", "readouts")


def replace_config(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    from dataclasses import replace

    return replace(cfg, **kw)


def apply_dataset_defaults(cfg: ExperimentConfig) -> ExperimentConfig:
    """Fill layer count and dims from the known per-dataset defaults unless
    the config set them explicitly (tracked via sentinel -1)."""
    if cfg.dataset in DATASET_DEFAULTS:
        layers, d_v, d_g = DATASET_DEFAULTS[cfg.dataset]
        if cfg.layers == -1:
            cfg.layers = layers
        if cfg.node_dim == -1:
            cfg.node_dim = d_v
        if cfg.graph_dim == -1:
            cfg.graph_dim = d_g
    else:
        if cfg.layers == -1:
            cfg.layers = 3
        if cfg.node_dim == -1:
            cfg.node_dim = 128
        if cfg.graph_dim == -1:
            cfg.graph_dim = 128
    return cfg


def _parse_lines(text: str) -> dict[str, dict[str, str]]:
    sections: dict[str, dict[str, str]] = {}
    current = ""
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"config line {ln}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        sections.setdefault(current, {})[key] = value
    return sections


def _coerce(cfg: ExperimentConfig, key: str, value: str) -> None:
    spec = {f.name: f.type for f in fields(ExperimentConfig)}
    if key not in spec:
        raise ConfigError(f"unknown config key: {key!r}")
    try:
        if key == "base_kinds":
            cfg.base_kinds = tuple(s.strip() for s in value.split(",") if s.strip())
        elif key in ("seed", "repeats", "layers", "node_dim", "graph_dim",
                     "batch_size", "max_epochs"):
            setattr(cfg, key, int(value))
        elif key in ("lr", "weight_decay"):
            setattr(cfg, key, float(value))
        else:
            setattr(cfg, key, value)
    except ValueError as e:
        raise ConfigError(f"{key}: bad value {value!r}") from e


def parse_config(text: str) -> ExperimentConfig:
    sections = _parse_lines(text)
    cfg = ExperimentConfig(layers=-1, node_dim=-1, graph_dim=-1)
    for section, keys in sections.items():
        if section not in ("experiment", "model", "training", ""):
            raise ConfigError(f"unknown config section [{section}]")
        for key, value in keys.items():
            expected = _SECTION_OF_KEY.get(key)
            if expected is None:
                raise ConfigError(f"unknown config key: {key!r}")
            _coerce(cfg, key, value)
    apply_dataset_defaults(cfg)
    cfg.validate()
    return cfg


def parse_grid_config(text: str) -> GridConfig:
    sections = _parse_lines(text)
    if "grid" not in sections:
        raise ConfigError("grid config needs a [grid] section")
    base = ExperimentConfig(layers=-1, node_dim=-1, graph_dim=-1)
    grid = GridConfig(base=base)
    for section, keys in sections.items():
        for key, value in keys.items():
            if section == "grid" and key in _GRID_KEYS:
                setattr(grid, key, tuple(s.strip() for s in value.split(",") if s.strip()))
            elif key in _SECTION_OF_KEY:
                _coerce(base, key, value)
            else:
                raise ConfigError(f"unknown config key: {key!r}")
    for cfg in grid.cells():
        cfg.validate()
    return grid


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = []
    for section in ("experiment", "model", "training"):
        lines.append(f"[{section}]")
        for key, sec in _SECTION_OF_KEY.items():
            if sec != section:
                continue
            value = getattr(cfg, key)
            if key == "base_kinds":
                value = ",".join(value)
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def load_grid_config(path: str | Path) -> GridConfig:
    return parse_grid_config(Path(path).read_text())
