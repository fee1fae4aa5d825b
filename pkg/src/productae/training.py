"""Alternating decoder/encoder training of a ProductAE.

Each epoch runs ``dec_steps`` decoder-only updates (per-sample SNRs drawn
uniformly in dB from ``[gamma + low_offset, gamma + high_offset]``) followed by
``enc_steps`` encoder-only updates at the single SNR ``gamma``. Every step
draws fresh messages and noise. A step over a batch of ``B`` messages may be
split into ``B / B_s`` micro-batches whose gradients are accumulated before
the single optimizer update.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .channel import scale_noise
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .errors import CheckpointError, ConfigError
from .model import Architecture, ProductAE
from .nn import Adam, accumulate_gradients
from .tensor import bce_with_logits, frozen

logger = logging.getLogger(__name__)

DTYPES = {"float32": np.float32, "float64": np.float64}


@dataclass
class FinetuneConfig:
    batch_size: int
    micro_batch_size: int
    epochs: int = 1

    def validate(self) -> None:
        if self.batch_size <= 0 or self.micro_batch_size <= 0 or self.epochs < 0:
            raise ConfigError("finetune sizes must be positive and epochs non-negative", "training.finetune")
        if self.batch_size % self.micro_batch_size:
            raise ConfigError(
                f"batch_size {self.batch_size} is not a multiple of micro_batch_size {self.micro_batch_size}",
                "training.finetune",
            )


@dataclass
class TrainingConfig:
    batch_size: int = 5000
    micro_batch_size: Optional[int] = None
    dec_steps: int = 500
    enc_steps: int = 100
    lr_enc: float = 2e-4
    lr_dec: float = 2e-4
    gamma_db: float = 3.0
    dec_snr_low_offset: float = -2.5
    dec_snr_high_offset: float = 1.0
    epochs: int = 100
    seed: int = 0
    dtype: str = "float32"
    finetune: Optional[FinetuneConfig] = None

    def __post_init__(self):
        if self.micro_batch_size is None:
            self.micro_batch_size = self.batch_size
        if isinstance(self.finetune, dict):
            self.finetune = FinetuneConfig(**self.finetune)
        self.validate()

    @property
    def accumulation_steps(self) -> int:
        return self.batch_size // self.micro_batch_size

    @property
    def dec_snr_range(self) -> tuple[float, float]:
        return (self.gamma_db + self.dec_snr_low_offset, self.gamma_db + self.dec_snr_high_offset)

    @property
    def np_dtype(self):
        return DTYPES[self.dtype]

    def validate(self) -> None:
        if self.batch_size <= 0 or self.micro_batch_size <= 0:
            raise ConfigError("batch sizes must be positive", "training.batch_size")
        if self.batch_size % self.micro_batch_size:
            raise ConfigError(
                f"batch_size {self.batch_size} is not a multiple of micro_batch_size {self.micro_batch_size}",
                "training.micro_batch_size",
            )
        for name in ("dec_steps", "enc_steps", "epochs"):
            if getattr(self, name) < 0:
                raise ConfigError("must be non-negative", f"training.{name}")
        for name in ("lr_enc", "lr_dec"):
            lr = getattr(self, name)
            if not (math.isfinite(lr) and lr > 0):
                raise ConfigError(f"learning rate must be positive, got {lr}", f"training.{name}")
        if not self.dec_snr_low_offset < self.dec_snr_high_offset:
            raise ConfigError("low offset must be below high offset", "training.dec_snr_low_offset")
        if self.dtype not in DTYPES:
            raise ConfigError(f"must be one of {sorted(DTYPES)}", "training.dtype")
        if self.finetune is not None:
            self.finetune.validate()

    def to_dict(self) -> dict:
        return asdict(self)


def decoder_snrs(rng: np.random.Generator, batch_size: int, cfg: TrainingConfig) -> np.ndarray:
    """One SNR (dB) per sample, uniform over the decoder training range."""
    low, high = cfg.dec_snr_range
    return rng.uniform(low, high, size=batch_size)


def encoder_snrs(batch_size: int, cfg: TrainingConfig) -> np.ndarray:
    return np.full(batch_size, float(cfg.gamma_db))


def sample_batch(rng: np.random.Generator, model: ProductAE, snr_db: np.ndarray):
    """Uniform random messages and matching channel noise for one batch."""
    B = len(snr_db)
    U = rng.integers(0, 2, size=(B,) + model.message_shape).astype(model.dtype)
    z = rng.standard_normal((B,) + model.codeword_shape)
    return U, scale_noise(z, snr_db).astype(model.dtype)


def batch_gradient_step(
    model: ProductAE, optimizer: Adam, frozen_params, U: np.ndarray, noise: np.ndarray, micro_batch: int
) -> float:
    """Zero grads, accumulate over micro-batches with ``frozen_params`` held fixed, take one step."""
    optimizer.zero_grad()

    def loss_fn(a, b):
        return bce_with_logits(model.forward(U[a:b], noise[a:b]), U[a:b])

    with frozen(frozen_params):
        loss = accumulate_gradients(loss_fn, len(U), micro_batch)
    optimizer.step()
    return loss


@dataclass
class EpochStats:
    epoch: int
    dec_loss: float
    enc_loss: float
    dec_steps: int
    enc_steps: int
    wall_ms: float
    improved: bool = False
    phase: str = "train"


class TrainingLog:
    """CSV log with one row per schedule phase: epoch, kind, mean_loss, wall_ms."""

    FIELDS = ("epoch", "kind", "mean_loss", "wall_ms")

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self.rows: list[dict] = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "w", newline="") as fh:
                csv.writer(fh).writerow(self.FIELDS)

    def record(self, epoch: int, kind: str, mean_loss: float, wall_ms: float) -> None:
        row = {"epoch": epoch, "kind": kind, "mean_loss": repr(float(mean_loss)), "wall_ms": f"{wall_ms:.1f}"}
        self.rows.append(row)
        if self.path is not None:
            with open(self.path, "a", newline="") as fh:
                csv.writer(fh).writerow([row[f] for f in self.FIELDS])


class Trainer:
    """Owns a model, its two Adam optimizers, the data RNG and best-loss bookkeeping."""

    def __init__(
        self,
        model: ProductAE,
        cfg: TrainingConfig,
        checkpoint_path=None,
        log: Optional[TrainingLog] = None,
    ):
        self.model = model
        self.cfg = cfg
        self.enc_opt = Adam(model.encoder_parameters(), cfg.lr_enc)
        self.dec_opt = Adam(model.decoder_parameters(), cfg.lr_dec)
        self.rng = np.random.default_rng(cfg.seed)
        self.checkpoint_path = Path(checkpoint_path) if checkpoint_path is not None else None
        self.log = log if log is not None else TrainingLog()
        self.epoch = 0
        self.best_loss = math.inf
        self.history: list[EpochStats] = []

    @classmethod
    def from_config(cls, arch: Architecture, cfg: TrainingConfig, **kwargs) -> "Trainer":
        return cls(ProductAE.build(arch, seed=cfg.seed, dtype=cfg.np_dtype), cfg, **kwargs)

    # -- single steps ---------------------------------------------------------
    def train_decoder_step(self, batch_size: Optional[int] = None, micro_batch: Optional[int] = None) -> float:
        B = batch_size or self.cfg.batch_size
        snr = decoder_snrs(self.rng, B, self.cfg)
        U, noise = sample_batch(self.rng, self.model, snr)
        return batch_gradient_step(
            self.model, self.dec_opt, self.model.encoder_parameters(), U, noise,
            micro_batch or (self.cfg.micro_batch_size if batch_size is None else B),
        )

    def train_encoder_step(self, batch_size: Optional[int] = None, micro_batch: Optional[int] = None) -> float:
        B = batch_size or self.cfg.batch_size
        snr = encoder_snrs(B, self.cfg)
        U, noise = sample_batch(self.rng, self.model, snr)
        return batch_gradient_step(
            self.model, self.enc_opt, self.model.decoder_parameters(), U, noise,
            micro_batch or (self.cfg.micro_batch_size if batch_size is None else B),
        )

    # -- epochs -----------------------------------------------------------------
    def run_epoch(self, batch_size: Optional[int] = None, micro_batch: Optional[int] = None, phase: str = "train") -> EpochStats:
        self.epoch += 1
        t0 = time.perf_counter()
        dec = [self.train_decoder_step(batch_size, micro_batch) for _ in range(self.cfg.dec_steps)]
        t1 = time.perf_counter()
        enc = [self.train_encoder_step(batch_size, micro_batch) for _ in range(self.cfg.enc_steps)]
        t2 = time.perf_counter()
        dec_loss = float(np.mean(dec)) if dec else math.nan
        enc_loss = float(np.mean(enc)) if enc else math.nan
        prefix = "" if phase == "train" else f"{phase}-"
        self.log.record(self.epoch, prefix + "decoder", dec_loss, (t1 - t0) * 1e3)
        self.log.record(self.epoch, prefix + "encoder", enc_loss, (t2 - t1) * 1e3)
        improved = bool(dec) and dec_loss < self.best_loss
        if improved:
            self.best_loss = dec_loss
            if self.checkpoint_path is not None:
                self.save(self.checkpoint_path)
        stats = EpochStats(self.epoch, dec_loss, enc_loss, len(dec), len(enc), (t2 - t0) * 1e3, improved, phase)
        self.history.append(stats)
        logger.info(
            "epoch %d %s: dec %.5f enc %.5f (%.0f ms)%s",
            stats.epoch, phase, dec_loss, enc_loss, stats.wall_ms, " *" if improved else "",
        )
        return stats

    def fit(self, epochs: Optional[int] = None) -> list[EpochStats]:
        n = self.cfg.epochs if epochs is None else epochs
        return [self.run_epoch() for _ in range(n)]

    # -- checkpointing -----------------------------------------------------------
    def to_checkpoint(self) -> Checkpoint:
        return Checkpoint(
            arch=self.model.arch.to_dict(),
            params={k: p.data.copy() for k, p in self.model.named_parameters().items()},
            optimizers={"encoder": self.enc_opt.state_dict(), "decoder": self.dec_opt.state_dict()},
            epoch=self.epoch,
            best_loss=None if math.isinf(self.best_loss) else self.best_loss,
            training=self.cfg.to_dict(),
            rng_state=self.rng.bit_generator.state,
        )

    def save(self, path) -> None:
        save_checkpoint(path, self.to_checkpoint())

    def restore(self, ckpt: Checkpoint) -> None:
        """Load parameters, optimizer state, counters and RNG state from ``ckpt``."""
        named = self.model.named_parameters()
        if set(ckpt.params) != set(named):
            missing = sorted(set(named) ^ set(ckpt.params))[:4]
            raise CheckpointError("shape-mismatch", f"parameter names differ from model: {missing}")
        for name, p in named.items():
            arr = ckpt.params[name]
            if arr.shape != p.shape:
                raise CheckpointError("shape-mismatch", f"{name}: checkpoint {arr.shape} vs model {p.shape}")
        for name, p in named.items():
            p.data = ckpt.params[name].astype(p.dtype, copy=True)
        try:
            for group, opt in (("encoder", self.enc_opt), ("decoder", self.dec_opt)):
                if group in ckpt.optimizers:
                    opt.load_state_dict(ckpt.optimizers[group])
        except Exception as exc:
            raise CheckpointError("shape-mismatch", f"optimizer state: {exc}") from None
        self.epoch = ckpt.epoch
        self.best_loss = math.inf if ckpt.best_loss is None else float(ckpt.best_loss)
        if ckpt.rng_state is not None:
            self.rng.bit_generator.state = ckpt.rng_state

    @classmethod
    def from_checkpoint(cls, path, cfg: Optional[TrainingConfig] = None, **kwargs) -> "Trainer":
        ckpt = load_checkpoint(path)
        return cls.from_loaded(ckpt, cfg, **kwargs)

    @classmethod
    def from_loaded(cls, ckpt: Checkpoint, cfg: Optional[TrainingConfig] = None, **kwargs) -> "Trainer":
        if cfg is None:
            if ckpt.training is None:
                raise CheckpointError("bad-header", "checkpoint carries no training configuration")
            cfg = TrainingConfig(**ckpt.training)
        arch = Architecture(**ckpt.arch)
        trainer = cls(ProductAE.build(arch, seed=cfg.seed, dtype=cfg.np_dtype), cfg, **kwargs)
        trainer.restore(ckpt)
        return trainer


def model_from_checkpoint(path) -> ProductAE:
    """Rebuild just the model (parameters in the checkpoint's precision)."""
    ckpt = load_checkpoint(path)
    arch = Architecture(**ckpt.arch)
    dtype = next(iter(ckpt.params.values())).dtype if ckpt.params else np.float64
    model = ProductAE.build(arch, dtype=dtype)
    named = model.named_parameters()
    for name, p in named.items():
        if name not in ckpt.params or ckpt.params[name].shape != p.shape:
            raise CheckpointError("shape-mismatch", f"parameter {name} missing or mis-shaped", path)
        p.data = ckpt.params[name].copy()
    return model


def large_batch_finetune(trainer: Trainer, checkpoint_path, finetune: Optional[FinetuneConfig] = None) -> list[EpochStats]:
    """Reload the best checkpoint, then train a few epochs at a large accumulated batch."""
    ft = finetune or trainer.cfg.finetune
    if ft is None:
        raise ConfigError("no finetune settings given", "training.finetune")
    ft.validate()
    ckpt = load_checkpoint(checkpoint_path)
    if ft.epochs == 0:
        return []
    trainer.restore(ckpt)
    return [
        trainer.run_epoch(batch_size=ft.batch_size, micro_batch=ft.micro_batch_size, phase="finetune")
        for _ in range(ft.epochs)
    ]
