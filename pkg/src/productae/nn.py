"""Fully-connected networks, weight initialization and the Adam optimizer."""

from __future__ import annotations

import math
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor import Tensor, matmul, selu, zero_grad


class DenseLayer:
    """Affine map ``x @ weight + bias``."""

    def __init__(self, in_dim: int, out_dim: int, dtype=np.float64):
        if in_dim <= 0 or out_dim <= 0:
            raise DimensionError(f"dense layer dims must be positive, got {in_dim}x{out_dim}")
        self.weight = Tensor(np.zeros((in_dim, out_dim), dtype=dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(out_dim, dtype=dtype), requires_grad=True)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x: Tensor) -> Tensor:
        return matmul(x, self.weight) + self.bias

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


class Fcnn:
    """SELU multilayer perceptron with ``hidden_count`` hidden layers of ``hidden_width``.

    The output layer is affine only. ``hidden_count=0`` gives a single affine map.
    """

    def __init__(
        self,
        input_dim: int,
        output_dim: int,
        hidden_count: int,
        hidden_width: int,
        dtype=np.float64,
        seed: Optional[int] = None,
    ):
        if hidden_count < 0:
            raise DimensionError(f"hidden_count must be >= 0, got {hidden_count}")
        self.input_dim = input_dim
        self.output_dim = output_dim
        self.hidden_count = hidden_count
        self.hidden_width = hidden_width
        dims = [input_dim] + [hidden_width] * hidden_count + [output_dim]
        self.layers = [DenseLayer(a, b, dtype) for a, b in zip(dims[:-1], dims[1:])]
        if seed is not None:
            init_weights(self, seed)

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.input_dim:
            raise DimensionError(
                f"fcnn expects trailing dimension {self.input_dim}, got shape {x.shape}"
            )
        for layer in self.layers[:-1]:
            x = selu(layer(x))
        return self.layers[-1](x)

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]

    def describe(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "hidden_count": self.hidden_count,
            "hidden_width": self.hidden_width,
        }


def init_weights(net: Fcnn, seed) -> None:
    """Uniform weights with standard deviation ``1/sqrt(fan_in)``; zero biases.

    Deterministic for a given ``seed`` (an int or a sequence of ints).
    """
    rng = np.random.default_rng(seed)
    for layer in net.layers:
        fan_in = layer.in_dim
        bound = math.sqrt(3.0 / fan_in)
        w = rng.uniform(-bound, bound, size=layer.weight.shape)
        layer.weight.data = w.astype(layer.weight.dtype)
        layer.bias.data = np.zeros_like(layer.bias.data)


class Adam:
    """Adam with bias correction. Moment buffers persist across calls to :meth:`step`."""

    def __init__(
        self,
        params: Iterable[Tensor],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        if not math.isfinite(lr) or lr < 0:
            raise ConfigError(f"learning rate must be a finite non-negative number, got {lr}")
        self.params = list(params)
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        zero_grad(self.params)

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            update = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data = p.data - update.astype(p.dtype, copy=False)

    def state_dict(self) -> dict:
        return {
            "lr": self.lr,
            "betas": [self.beta1, self.beta2],
            "eps": self.eps,
            "t": self.t,
            "m": [a.copy() for a in self.m],
            "v": [a.copy() for a in self.v],
        }

    def load_state_dict(self, state: dict) -> None:
        if len(state["m"]) != len(self.params) or len(state["v"]) != len(self.params):
            raise DimensionError("optimizer state does not match parameter count")
        for p, m, v in zip(self.params, state["m"], state["v"]):
            if m.shape != p.shape or v.shape != p.shape:
                raise DimensionError(
                    f"optimizer moment shape {m.shape}/{v.shape} != parameter shape {p.shape}"
                )
        self.lr = float(state["lr"])
        self.beta1, self.beta2 = state["betas"]
        self.eps = float(state["eps"])
        self.t = int(state["t"])
        self.m = [np.array(a, dtype=p.dtype) for a, p in zip(state["m"], self.params)]
        self.v = [np.array(a, dtype=p.dtype) for a, p in zip(state["v"], self.params)]


def accumulate_gradients(
    loss_fn: Callable[[int, int], Tensor], total: int, micro_batch: int
) -> float:
    """Run ``loss_fn(start, stop)`` over consecutive micro-batches and backprop each.

    Each micro-batch loss is scaled by ``micro_batch/total`` before ``backward`` so the
    summed gradient equals that of the mean loss over the whole batch. Gradients are
    accumulated, not zeroed. Returns the full-batch mean loss.
    """
    if total % micro_batch != 0:
        raise ConfigError(f"batch {total} is not a multiple of micro-batch {micro_batch}")
    total_loss = 0.0
    for start in range(0, total, micro_batch):
        loss = loss_fn(start, start + micro_batch)
        scaled = loss * (micro_batch / total)
        scaled.backward()
        total_loss += float(scaled.data)
    return total_loss


def parameters_of(nets: Sequence) -> list[Tensor]:
    return [p for net in nets for p in net.parameters()]
