"""Real-valued AWGN channel, codeword power normalization and SNR conventions.

SNR is the inverse noise variance per real coded symbol (codewords carry unit
average power), so ``sigma^2 = 10**(-snr_db/10)``. Eb/N0 in dB is
``snr_db + 10*log10(1/R)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import erfc

from .errors import ConfigError
from .tensor import Tensor, add, div, l2_norm, mul

NORM_EPS = 1e-12

ArrayLike = Union[float, np.ndarray]


def sigma2_from_snr_db(snr_db: ArrayLike) -> ArrayLike:
    """Noise variance for a given SNR in dB; ``+inf`` gives 0, ``-inf`` gives ``inf``."""
    return np.power(10.0, -np.asarray(snr_db, dtype=np.float64) / 10.0)[()]


def _check_rate(rate: float) -> None:
    if not (0.0 < float(rate) <= 1.0):
        raise ConfigError(f"code rate must satisfy 0 < R <= 1, got {rate}")


def ebn0_db_from_snr_db(snr_db: ArrayLike, rate: float) -> ArrayLike:
    _check_rate(rate)
    return np.asarray(snr_db, dtype=np.float64)[()] + 10.0 * math.log10(1.0 / float(rate))


def snr_db_from_ebn0_db(ebn0_db: ArrayLike, rate: float) -> ArrayLike:
    _check_rate(rate)
    return np.asarray(ebn0_db, dtype=np.float64)[()] - 10.0 * math.log10(1.0 / float(rate))


def q_function(x: ArrayLike) -> ArrayLike:
    """Gaussian tail probability ``Q(x) = 0.5*erfc(x/sqrt(2))``."""
    return (0.5 * erfc(np.asarray(x, dtype=np.float64) / math.sqrt(2.0)))[()]


def power_normalize(c: Tensor, eps: float = NORM_EPS) -> Tensor:
    """Scale each length-n codeword (last axis) to squared norm n.

    Differentiable; ``eps`` is added to the norm so an all-zero codeword maps to zero
    instead of NaN.
    """
    n = c.shape[-1]
    norm = l2_norm(c, axis=-1, keepdims=True)
    return mul(c, div(math.sqrt(n), add(norm, eps)))


@dataclass
class ChannelParams:
    snr_db: float
    rate: float = 1.0
    seed: Optional[int] = None

    @property
    def sigma2(self) -> float:
        return float(sigma2_from_snr_db(self.snr_db))

    @property
    def ebn0_db(self) -> float:
        return float(ebn0_db_from_snr_db(self.snr_db, self.rate))


class AwgnChannel:
    """Adds i.i.d. Gaussian noise; owns its random stream."""

    def __init__(self, seed=None):
        self.rng = np.random.default_rng(seed)

    def noise(self, shape, snr_db: ArrayLike, dtype=np.float64) -> np.ndarray:
        """Noise of the given shape. ``snr_db`` is a scalar or one value per leading index."""
        z = self.rng.standard_normal(shape)
        return scale_noise(z, snr_db).astype(dtype, copy=False)

    def __call__(self, c: Tensor, snr_db: ArrayLike) -> Tensor:
        return add_noise(c, self.noise(c.shape, snr_db, c.dtype))


def scale_noise(z: np.ndarray, snr_db: ArrayLike) -> np.ndarray:
    """Scale standard-normal draws ``z`` to the variance implied by ``snr_db``.

    A per-sample ``snr_db`` array of shape ``(B,)`` broadcasts over the trailing axes of ``z``.
    """
    sigma = np.asarray(np.sqrt(sigma2_from_snr_db(snr_db)), dtype=np.float64)
    if sigma.ndim:
        sigma = sigma.reshape(sigma.shape + (1,) * (z.ndim - sigma.ndim))
    return z * sigma


def add_noise(c: Tensor, noise: np.ndarray) -> Tensor:
    """``y = c + noise`` with the noise treated as a constant (gradients pass to ``c``)."""
    return add(c, Tensor(np.asarray(noise, dtype=c.dtype)))
