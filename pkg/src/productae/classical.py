"""Binary linear codes and their product construction over GF(2).

This is the exact, enumerable counterpart of the neural product code: it is
used to check the product rules for (n, k, d, R), the Kronecker form of the
product generator matrix and the order-independence of per-dimension encoding.

Array conventions
-----------------
An M-dimensional message array has shape ``(k_M, ..., k_2, k_1)``: the last
axis is dimension 1 (rows of a 2D message are encoded by code 1), the first
axis is dimension M. :func:`vectorize` flattens such an array in column-major
(Fortran) order, i.e. with ``i_M`` varying fastest, which is the ordering under
which ``vec(C) = vec(U) @ (G_1 kron G_2 kron ... kron G_M) mod 2`` holds.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import prod
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError, EnumerationLimitError

MAX_ENUMERATION_K = 20


def gf2_rank(matrix: np.ndarray) -> int:
    m = np.array(matrix, dtype=np.uint8) % 2
    rows, cols = m.shape
    rank = 0
    for c in range(cols):
        pivot = next((r for r in range(rank, rows) if m[r, c]), None)
        if pivot is None:
            continue
        m[[rank, pivot]] = m[[pivot, rank]]
        for r in range(rows):
            if r != rank and m[r, c]:
                m[r] ^= m[rank]
        rank += 1
        if rank == rows:
            break
    return rank


@dataclass
class LinearCode:
    """Binary linear ``(n, k)`` code given by a full-rank ``k x n`` generator matrix."""

    G: np.ndarray
    d: Optional[int] = None
    name: str = ""

    def __post_init__(self):
        self.G = np.asarray(self.G, dtype=np.uint8) % 2
        if self.G.ndim != 2:
            raise DimensionError(f"generator matrix must be 2-D, got shape {self.G.shape}")
        k, n = self.G.shape
        if k > n:
            raise DimensionError(f"k={k} exceeds n={n}")
        if gf2_rank(self.G) != k:
            raise ValueError("generator matrix is not full row rank over GF(2)")

    @property
    def k(self) -> int:
        return self.G.shape[0]

    @property
    def n(self) -> int:
        return self.G.shape[1]

    @property
    def rate(self) -> Fraction:
        return Fraction(self.k, self.n)

    def encode(self, u: np.ndarray) -> np.ndarray:
        """Encode along the last axis: ``(..., k) -> (..., n)``."""
        u = np.asarray(u)
        if u.shape[-1] != self.k:
            raise DimensionError(f"message length {u.shape[-1]} != k={self.k}")
        return (u.astype(np.int64) @ self.G) % 2


def repetition_code(n: int) -> LinearCode:
    return LinearCode(np.ones((1, n), dtype=np.uint8), d=n, name=f"rep({n},1)")


def single_parity_check_code(n: int) -> LinearCode:
    G = np.concatenate([np.eye(n - 1, dtype=np.uint8), np.ones((n - 1, 1), dtype=np.uint8)], axis=1)
    return LinearCode(G, d=2, name=f"spc({n},{n - 1})")


def hamming74_code() -> LinearCode:
    P = np.array([[1, 1, 0], [1, 0, 1], [0, 1, 1], [1, 1, 1]], dtype=np.uint8)
    return LinearCode(np.concatenate([np.eye(4, dtype=np.uint8), P], axis=1), d=3, name="hamming(7,4)")


@dataclass
class ProductCodeParams:
    """Parameters of an M-dimensional product code from its ``(n_m, k_m)`` components."""

    components: list[tuple[int, int]]
    distances: Optional[list[int]] = field(default=None)

    def __post_init__(self):
        self.components = [(int(n), int(k)) for n, k in self.components]
        for n, k in self.components:
            if not 0 < k <= n:
                raise DimensionError(f"component (n={n}, k={k}) is invalid")
        if self.distances is not None and len(self.distances) != len(self.components):
            raise DimensionError("one distance per component is required")

    @classmethod
    def from_codes(cls, codes: Sequence[LinearCode]) -> "ProductCodeParams":
        ds = [c.d for c in codes]
        return cls([(c.n, c.k) for c in codes], None if any(d is None for d in ds) else ds)

    @property
    def M(self) -> int:
        return len(self.components)

    @property
    def n(self) -> int:
        return prod(n for n, _ in self.components)

    @property
    def k(self) -> int:
        return prod(k for _, k in self.components)

    @property
    def rate(self) -> Fraction:
        return prod((Fraction(k, n) for n, k in self.components), start=Fraction(1))

    @property
    def d(self) -> Optional[int]:
        return None if self.distances is None else prod(self.distances)


def kronecker(G1: np.ndarray, G2: np.ndarray) -> np.ndarray:
    return np.kron(np.asarray(G1, dtype=np.uint8), np.asarray(G2, dtype=np.uint8)) % 2


def product_generator(codes: Sequence[LinearCode]) -> np.ndarray:
    """``G_1 kron G_2 kron ... kron G_M``."""
    G = codes[0].G
    for code in codes[1:]:
        G = kronecker(G, code.G)
    return G


def product_code(codes: Sequence[LinearCode]) -> LinearCode:
    params = ProductCodeParams.from_codes(codes)
    name = " x ".join(c.name or f"({c.n},{c.k})" for c in codes)
    return LinearCode(product_generator(codes), d=params.d, name=name)


def vectorize(array: np.ndarray) -> np.ndarray:
    """Flatten a message or codeword array in column-major order."""
    return np.asarray(array).flatten(order="F")


def unvectorize(vec: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    return np.asarray(vec).reshape(tuple(shape), order="F")


def _encode_axis(array: np.ndarray, code: LinearCode, axis: int) -> np.ndarray:
    moved = np.moveaxis(array, axis, -1)
    return np.moveaxis(code.encode(moved), -1, axis)


def encode_product(
    codes: Sequence[LinearCode], U: np.ndarray, order: Optional[Sequence[int]] = None
) -> np.ndarray:
    """Encode a ``(k_M, ..., k_1)`` message array into a ``(n_M, ..., n_1)`` codeword.

    ``order`` lists the 1-based dimensions in encoding order; the default ``(1, 2, ..., M)``
    encodes rows first for M=2. Every order yields the same codeword.
    """
    U = np.asarray(U)
    M = len(codes)
    expected = tuple(c.k for c in reversed(codes))
    if U.shape != expected:
        raise DimensionError(f"message shape {U.shape} != expected {expected}")
    order = tuple(order) if order is not None else tuple(range(1, M + 1))
    if sorted(order) != list(range(1, M + 1)):
        raise ValueError(f"order {order} is not a permutation of 1..{M}")
    C = U.astype(np.int64) % 2
    for m in order:
        C = _encode_axis(C, codes[m - 1], M - m)
    return C.astype(np.uint8)


def encode_via_generator(codes: Sequence[LinearCode], U: np.ndarray) -> np.ndarray:
    """Same mapping as :func:`encode_product`, computed as ``vec(U) @ G`` and unvectorized."""
    U = np.asarray(U)
    out_shape = tuple(c.n for c in reversed(codes))
    vec = (vectorize(U).astype(np.int64) @ product_generator(codes)) % 2
    return unvectorize(vec, out_shape).astype(np.uint8)


def all_messages(k: int) -> np.ndarray:
    """All ``2**k`` binary vectors of length k, as rows (bit 0 is the most significant)."""
    if k > MAX_ENUMERATION_K:
        raise EnumerationLimitError(f"k={k} exceeds enumeration bound {MAX_ENUMERATION_K}")
    idx = np.arange(2**k, dtype=np.int64)
    shifts = np.arange(k - 1, -1, -1)
    return ((idx[:, None] >> shifts) & 1).astype(np.uint8)


def min_distance_bruteforce(code: LinearCode, chunk: int = 1 << 14) -> int:
    """Minimum Hamming weight over all nonzero codewords (``k <= 20``)."""
    if code.k > MAX_ENUMERATION_K:
        raise EnumerationLimitError(
            f"k={code.k} exceeds enumeration bound {MAX_ENUMERATION_K}; refusing to enumerate"
        )
    G = code.G.astype(np.int64)
    shifts = np.arange(code.k - 1, -1, -1)
    best = code.n
    for start in range(1, 2**code.k, chunk):
        idx = np.arange(start, min(start + chunk, 2**code.k), dtype=np.int64)
        msgs = (idx[:, None] >> shifts) & 1
        weights = ((msgs @ G) % 2).sum(axis=1)
        best = min(best, int(weights.min()))
    return best


def codeword_set(codes: Sequence[LinearCode]) -> set[bytes]:
    """Every product codeword (flattened row-major) obtained by per-dimension encoding."""
    shape = tuple(c.k for c in reversed(codes))
    out = set()
    for bits in itertools.product((0, 1), repeat=prod(shape)):
        U = np.array(bits, dtype=np.uint8).reshape(shape)
        out.add(encode_product(codes, U).tobytes())
    return out
