"""Monte-Carlo BER/BLER estimation and SNR sweeps.

Batches are simulated in a fixed order, each with its own RNG derived from
``(seed, snr_index, batch_index)``. A run stops after the batch in which the
block-error count reaches ``min_block_errors`` or the block count reaches
``max_blocks`` (the last batch is truncated to ``max_blocks``). The reported
counts are exactly those used; stopping on an error count makes the BLER
estimate slightly biased upward, as usual for this kind of sequential rule.

With ``workers > 1`` batches are computed concurrently but merged in batch
order, so results do not depend on the worker count.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .channel import ebn0_db_from_snr_db, q_function, scale_noise
from .tensor import Tensor, no_grad

Z95 = 1.959963984540054
CSV_FIELDS = ("snr_db", "ebn0_db", "ber", "bler", "ber_ci", "bler_ci", "bits", "blocks")


def ci_halfwidth(errors: int, trials: int, z: float = Z95) -> float:
    """95% binomial CI half-width: normal approximation, Wilson interval below 30 errors."""
    if trials == 0:
        return math.nan
    p = errors / trials
    if errors >= 30:
        return z * math.sqrt(p * (1.0 - p) / trials)
    denom = 1.0 + z * z / trials
    spread = z * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials)) / denom
    return spread


@dataclass
class EvalResult:
    snr_db: float
    ebn0_db: float
    bits_sent: int
    bit_errors: int
    blocks_sent: int
    block_errors: int

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits_sent if self.bits_sent else math.nan

    @property
    def bler(self) -> float:
        return self.block_errors / self.blocks_sent if self.blocks_sent else math.nan

    @property
    def ber_ci(self) -> float:
        return ci_halfwidth(self.bit_errors, self.bits_sent)

    @property
    def bler_ci(self) -> float:
        return ci_halfwidth(self.block_errors, self.blocks_sent)

    def row(self) -> dict:
        return {
            "snr_db": self.snr_db,
            "ebn0_db": self.ebn0_db,
            "ber": self.ber,
            "bler": self.bler,
            "ber_ci": self.ber_ci,
            "bler_ci": self.bler_ci,
            "bits": self.bits_sent,
            "blocks": self.blocks_sent,
        }

    def to_dict(self) -> dict:
        return dict(asdict(self), ber=self.ber, bler=self.bler, ber_ci=self.ber_ci, bler_ci=self.bler_ci)


class UncodedBpsk:
    """Identity "code" sending each bit as ``2b - 1``; the decoder returns ``y`` as the logit."""

    def __init__(self, k: int = 64, dtype=np.float64):
        self.k = k
        self.message_shape = (1, k)
        self.codeword_shape = (1, k)
        self.rate = Fraction(1)
        self.dtype = np.dtype(dtype)

    def encode(self, U) -> Tensor:
        u = U.data if isinstance(U, Tensor) else np.asarray(U)
        return Tensor(2.0 * u.astype(self.dtype) - 1.0)

    def decode(self, Y) -> Tensor:
        return Y if isinstance(Y, Tensor) else Tensor(np.asarray(Y, dtype=self.dtype))


def uncoded_bpsk_ber(snr_db) -> float:
    """``Q(sqrt(SNR))``; ``+inf`` dB gives 0 and ``-inf`` dB gives 0.5."""
    return q_function(np.sqrt(np.power(10.0, np.asarray(snr_db, dtype=np.float64) / 10.0)))


def _count_errors(model, snr_db: float, batch: int, seed) -> tuple[int, np.ndarray]:
    rng = np.random.default_rng(seed)
    U = rng.integers(0, 2, size=(batch,) + tuple(model.message_shape)).astype(model.dtype)
    z = rng.standard_normal((batch,) + tuple(model.codeword_shape))
    with no_grad():
        c = model.encode(U)
        y = c.data + scale_noise(z, snr_db).astype(c.dtype)
        logits = model.decode(Tensor(y)).data
    wrong = (logits > 0) != (U > 0.5)
    per_block = wrong.reshape(batch, -1).sum(axis=1)
    return int(per_block.sum()), per_block


def monte_carlo_eval(
    model,
    snr_db: float,
    min_block_errors: int = 100,
    max_blocks: int = 1_000_000,
    batch_size: int = 1000,
    seed: int = 0,
    workers: int = 1,
    point_index: int = 0,
) -> EvalResult:
    """Estimate BER and BLER of ``model`` at one SNR (dB)."""
    if min_block_errors <= 0 or max_blocks <= 0 or batch_size <= 0:
        raise ValueError("stop thresholds and batch size must be positive")
    k = int(np.prod(model.message_shape))
    bits = bit_err = blocks = block_err = 0
    batch_index = 0
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while block_err < min_block_errors and blocks < max_blocks:
            sizes = []
            remaining = max_blocks - blocks
            for _ in range(max(workers, 1)):
                if remaining <= 0:
                    break
                sizes.append(min(batch_size, remaining))
                remaining -= sizes[-1]
            seeds = [(seed, point_index, batch_index + j) for j in range(len(sizes))]
            if pool is None:
                outcomes = [_count_errors(model, snr_db, b, s) for b, s in zip(sizes, seeds)]
            else:
                outcomes = list(pool.map(lambda a: _count_errors(model, snr_db, *a), zip(sizes, seeds)))
            for size, (errs, per_block) in zip(sizes, outcomes):
                batch_index += 1
                bits += size * k
                bit_err += errs
                blocks += size
                block_err += int(np.count_nonzero(per_block))
                if block_err >= min_block_errors or blocks >= max_blocks:
                    break
    finally:
        if pool is not None:
            pool.shutdown()
    return EvalResult(
        snr_db=float(snr_db),
        ebn0_db=float(ebn0_db_from_snr_db(snr_db, float(model.rate))),
        bits_sent=bits,
        bit_errors=bit_err,
        blocks_sent=blocks,
        block_errors=block_err,
    )


def sweep(
    model,
    snr_list_db: Sequence[float],
    min_block_errors: int = 100,
    max_blocks: int = 1_000_000,
    batch_size: int = 1000,
    seed: int = 0,
    workers: int = 1,
    csv_path=None,
) -> list[EvalResult]:
    if len(snr_list_db) == 0:
        raise ValueError("sweep needs at least one SNR point")
    results = [
        monte_carlo_eval(model, snr, min_block_errors, max_blocks, batch_size, seed, workers, point_index=i)
        for i, snr in enumerate(snr_list_db)
    ]
    if csv_path is not None:
        write_csv(csv_path, results)
    return results


def write_csv(path, results: Sequence[EvalResult]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for r in results:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.row().items()})


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [
            {k: (int(v) if k in ("bits", "blocks") else float(v)) for k, v in row.items()}
            for row in csv.DictReader(fh)
        ]
