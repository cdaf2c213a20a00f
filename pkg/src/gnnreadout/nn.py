"""Small module system on top of the tensor engine.

Modules register parameters and submodules through attribute assignment
(torch-style) and expose ``named_parameters`` for the optimizer, the
parameter counter and checkpointing.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import tensor as T
from .errors import ContractError
from .tensor import Parameter, Tensor


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, p in self._params.items():
            yield (f"{prefix}{name}", p)
        for name, m in self._modules.items():
            yield from m.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def train(self) -> "Module":
        return self._set_training(True)

    def eval(self) -> "Module":
        return self._set_training(False)

    def _set_training(self, flag: bool) -> "Module":
        object.__setattr__(self, "training", flag)
        for m in self._modules.values():
            m._set_training(flag)
        return self

    def state_dict(self, prefix: str = "") -> dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters(prefix)}
        for name, m in self._modules.items():
            for k, v in m._buffers_dict(f"{prefix}{name}."):
                state[k] = v
        for k, v in self._buffers_dict(prefix, recurse=False):
            state[k] = v
        return state

    def _buffers_dict(self, prefix: str, recurse: bool = True):
        for name in getattr(self, "_buffer_names", ()):
            yield (f"{prefix}{name}", getattr(self, name).copy())
        if recurse:
            for name, m in self._modules.items():
                yield from m._buffers_dict(f"{prefix}{name}.")

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for name, p in self.named_parameters():
            if name not in state:
                raise ContractError(f"missing parameter in state: {name}")
            if state[name].shape != p.data.shape:
                raise ContractError(f"shape mismatch for {name}")
            p.data = state[name].copy()
        self._load_buffers(state, "")

    def _load_buffers(self, state, prefix):
        for name in getattr(self, "_buffer_names", ()):
            key = f"{prefix}{name}"
            if key in state:
                getattr(self, name)[...] = state[key]
        for name, m in self._modules.items():
            m._load_buffers(state, f"{prefix}{name}.")


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = Parameter(uniform_init(rng, (in_dim, out_dim), in_dim))
        self.bias = Parameter(uniform_init(rng, (out_dim,), in_dim)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        out = T.matmul(x, self.weight)
        if self.bias is not None:
            out = T.add(out, self.bias)
        return out

    __call__ = forward


class BatchNorm1d(Module):
    _buffer_names = ("running_mean", "running_var")

    def __init__(self, dim: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self.momentum = momentum
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return T.batch_norm(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            self.training, self.momentum, self.eps,
        )

    __call__ = forward


class Dropout(Module):
    def __init__(self, p: float, rng: np.random.Generator):
        super().__init__()
        self.p = p
        self.rng = rng

    def forward(self, x: Tensor) -> Tensor:
        return T.dropout(x, self.p, self.training, self.rng)

    __call__ = forward


class MLP(Module):
    """Linear stack with ReLU between layers (none after the last)."""

    def __init__(self, dims: list[int], rng: np.random.Generator):
        super().__init__()
        self.num_layers = len(dims) - 1
        for i in range(self.num_layers):
            setattr(self, f"lin{i}", Linear(dims[i], dims[i + 1], rng))

    def forward(self, x: Tensor) -> Tensor:
        for i in range(self.num_layers):
            x = getattr(self, f"lin{i}")(x)
            if i + 1 < self.num_layers:
                x = T.relu(x)
        return x

    __call__ = forward


class GRUCell(Module):
    """Standard GRU cell: sigmoid update/reset gates, tanh candidate."""

    def __init__(self, in_dim: int, hidden_dim: int, rng: np.random.Generator):
        super().__init__()
        self.hidden_dim = hidden_dim
        for gate in ("z", "r", "h"):
            setattr(self, f"W{gate}", Parameter(uniform_init(rng, (in_dim, hidden_dim), in_dim)))
            setattr(self, f"U{gate}", Parameter(uniform_init(rng, (hidden_dim, hidden_dim), hidden_dim)))
            setattr(self, f"b{gate}", Parameter(np.zeros(hidden_dim)))

    def step(self, x: Tensor, h: Tensor) -> Tensor:
        z = T.sigmoid(T.add(T.add(T.matmul(x, self.Wz), T.matmul(h, self.Uz)), self.bz))
        r = T.sigmoid(T.add(T.add(T.matmul(x, self.Wr), T.matmul(h, self.Ur)), self.br))
        cand = T.tanh(T.add(T.add(T.matmul(x, self.Wh), T.matmul(T.mul(r, h), self.Uh)), self.bh))
        one_minus_z = T.sub(Tensor(np.ones_like(z.data)), z)
        return T.add(T.mul(one_minus_z, h), T.mul(z, cand))
