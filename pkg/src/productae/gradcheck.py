"""Central finite-difference verification of autodiff gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .model import Architecture, ProductAE
from .tensor import Tensor, bce_with_logits, no_grad, zero_grad

# Denominator floor for the relative error, so entries whose true gradient is
# essentially zero are judged on absolute error instead.
REL_FLOOR = 1e-6


def relative_error(analytic, numeric, floor: float = REL_FLOOR):
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def numerical_gradient(loss_fn: Callable[[], Tensor], param: Tensor, index, eps: float = 1e-5) -> float:
    """``(L(p + eps) - L(p - eps)) / (2 eps)`` for one entry of ``param``."""
    original = param.data[index]
    with no_grad():
        param.data[index] = original + eps
        plus = float(loss_fn().data)
        param.data[index] = original - eps
        minus = float(loss_fn().data)
    param.data[index] = original
    return (plus - minus) / (2.0 * eps)


@dataclass
class GradcheckEntry:
    name: str
    index: tuple
    analytic: float
    numeric: float

    @property
    def rel_error(self) -> float:
        return float(relative_error(self.analytic, self.numeric))


@dataclass
class GradcheckReport:
    entries: list[GradcheckEntry]

    @property
    def max_rel_error(self) -> float:
        return max((e.rel_error for e in self.entries), default=0.0)

    @property
    def worst(self) -> Optional[GradcheckEntry]:
        return max(self.entries, key=lambda e: e.rel_error, default=None)

    def passed(self, tol: float) -> bool:
        return self.max_rel_error < tol


def check_parameters(
    loss_fn: Callable[[], Tensor],
    named_params: dict[str, Tensor],
    samples: Sequence[tuple[str, tuple]],
    eps: float = 1e-5,
) -> GradcheckReport:
    """Compare backprop against finite differences at the listed ``(name, index)`` entries."""
    params = list(named_params.values())
    zero_grad(params)
    loss_fn().backward()
    analytic = {name: p.grad.copy() for name, p in named_params.items() if p.grad is not None}
    entries = []
    for name, index in samples:
        a = float(analytic[name][index]) if name in analytic else 0.0
        n = numerical_gradient(loss_fn, named_params[name], index, eps)
        entries.append(GradcheckEntry(name, index, a, n))
    zero_grad(params)
    return GradcheckReport(entries)


def sample_entries(named_params: dict[str, Tensor], count: int, rng: np.random.Generator) -> list[tuple[str, tuple]]:
    """``count`` distinct parameter entries drawn uniformly over all scalars."""
    flat = [(name, idx) for name, p in named_params.items() for idx in np.ndindex(p.shape)]
    count = min(count, len(flat))
    picks = rng.choice(len(flat), size=count, replace=False)
    return [flat[i] for i in sorted(picks)]


TINY_ARCH = dict(k1=2, k2=2, n1=3, n2=3, iterations=2, features=2,
                 enc_layers=2, enc_width=8, dec_layers=2, dec_width=8, dec_last_layers=2)


def tiny_model_gradcheck(
    n_params: int = 200, seed: int = 0, batch: int = 4, snr_db: float = 1.0, eps: float = 1e-5
) -> GradcheckReport:
    """End-to-end check of the loss through encoder, normalization, channel and decoder at f64.

    Biases are randomized after initialization: with all-zero biases an all-zero message
    encodes to the zero codeword, where power normalization is singular.
    """
    rng = np.random.default_rng(seed)
    model = ProductAE.build(Architecture(**TINY_ARCH), seed=seed, dtype=np.float64)
    for name, p in model.named_parameters().items():
        if name.endswith(".bias"):
            p.data = 0.1 * rng.standard_normal(p.shape)
    U = rng.integers(0, 2, size=(batch,) + model.message_shape).astype(np.float64)
    sigma = np.sqrt(10.0 ** (-snr_db / 10.0))
    noise = sigma * rng.standard_normal((batch,) + model.codeword_shape)

    def loss_fn():
        return bce_with_logits(model.forward(U, noise), U)

    named = model.named_parameters()
    return check_parameters(loss_fn, named, sample_entries(named, n_params, rng), eps)
