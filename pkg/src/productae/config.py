"""TOML run configurations and the shipped presets.

A run config has a top-level ``format`` (currently 1) and ``seed`` plus the
tables ``[code]``, ``[model]``, ``[training]`` (optionally
``[training.finetune]``), ``[eval]`` and ``[paths]``. Unknown keys are
rejected. Relative paths are interpreted relative to the working directory.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError, DimensionError
from .model import Architecture
from .training import FinetuneConfig, TrainingConfig

FORMAT_VERSION = 1
PRESETS = ("productae-15-10", "productae-21-14", "desk")


@dataclass
class EvalConfig:
    snr_db: list[float] = field(default_factory=lambda: [0.0, 1.0, 2.0, 3.0])
    min_block_errors: int = 100
    max_blocks: int = 1_000_000
    batch_size: int = 1000


@dataclass
class PathsConfig:
    checkpoint_dir: str = "runs/default"
    results_csv: str = "runs/default/sweep.csv"
    log_csv: Optional[str] = None

    @property
    def best_checkpoint(self) -> Path:
        return Path(self.checkpoint_dir) / "best.pae"

    @property
    def final_checkpoint(self) -> Path:
        return Path(self.checkpoint_dir) / "final.pae"

    @property
    def training_log(self) -> Path:
        return Path(self.log_csv) if self.log_csv else Path(self.checkpoint_dir) / "train_log.csv"


@dataclass
class RunConfig:
    arch: Architecture
    training: TrainingConfig
    eval: EvalConfig = field(default_factory=EvalConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    seed: int = 0

    # -- serialization ------------------------------------------------------------
    def to_dict(self) -> dict:
        a = self.arch
        training = {
            f.name: getattr(self.training, f.name)
            for f in fields(TrainingConfig)
            if f.name not in ("seed", "finetune")
        }
        if self.training.finetune is not None:
            ft = self.training.finetune
            training["finetune"] = {
                "batch_size": ft.batch_size,
                "micro_batch_size": ft.micro_batch_size,
                "epochs": ft.epochs,
            }
        paths = {"checkpoint_dir": self.paths.checkpoint_dir, "results_csv": self.paths.results_csv}
        if self.paths.log_csv:
            paths["log_csv"] = self.paths.log_csv
        return {
            "format": FORMAT_VERSION,
            "seed": self.seed,
            "code": {"k1": a.k1, "k2": a.k2, "n1": a.n1, "n2": a.n2},
            "model": {
                k: getattr(a, k)
                for k in ("iterations", "features", "enc_layers", "enc_width", "dec_layers", "dec_width", "dec_last_layers")
            },
            "training": training,
            "eval": {
                "snr_db": [float(s) for s in self.eval.snr_db],
                "min_block_errors": self.eval.min_block_errors,
                "max_blocks": self.eval.max_blocks,
                "batch_size": self.eval.batch_size,
            },
            "paths": paths,
        }

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def save(self, path) -> None:
        Path(path).write_text(self.to_toml())

    @classmethod
    def from_toml(cls, text: str) -> "RunConfig":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            m = re.search(r"line (\d+)", str(exc))
            raise ConfigError(f"TOML syntax error: {exc}", line=int(m.group(1)) if m else None) from None
        return cls.from_dict(data, text)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_toml(Path(path).read_text())

    @classmethod
    def from_dict(cls, data: dict, text: Optional[str] = None) -> "RunConfig":
        reader = _Reader(text)
        reader.keys(data, "", {"format", "seed", "code", "model", "training", "eval", "paths"})
        fmt = data.get("format", FORMAT_VERSION)
        if fmt != FORMAT_VERSION:
            raise reader.error(f"unsupported format {fmt!r} (expected {FORMAT_VERSION})", "format")
        seed = reader.integer(data, "", "seed", 0, minimum=0)

        code = reader.table(data, "code", {"k1", "k2", "n1", "n2"}, required=True)
        model = reader.table(
            data, "model",
            {"iterations", "features", "enc_layers", "enc_width", "dec_layers", "dec_width", "dec_last_layers"},
        )
        arch_kwargs = {k: reader.integer(code, "code", k, None, minimum=1) for k in ("k1", "k2", "n1", "n2")}
        defaults = Architecture(1, 1, 1, 1)
        for key in ("iterations", "features", "enc_width", "dec_width"):
            arch_kwargs[key] = reader.integer(model, "model", key, getattr(defaults, key), minimum=1)
        for key in ("enc_layers", "dec_layers", "dec_last_layers"):
            arch_kwargs[key] = reader.integer(model, "model", key, getattr(defaults, key), minimum=0)
        try:
            arch = Architecture(**arch_kwargs)
        except DimensionError as exc:
            raise reader.error(str(exc), "code") from None

        tr = reader.table(
            data, "training",
            {f.name for f in fields(TrainingConfig) if f.name != "seed"},
        )
        td = TrainingConfig.__dataclass_fields__
        kwargs: dict[str, Any] = {"seed": seed}
        for key in ("batch_size", "dec_steps", "enc_steps", "epochs"):
            kwargs[key] = reader.integer(tr, "training", key, td[key].default, minimum=1 if key == "batch_size" else 0)
        kwargs["micro_batch_size"] = reader.integer(tr, "training", "micro_batch_size", kwargs["batch_size"], minimum=1)
        for key in ("lr_enc", "lr_dec", "gamma_db", "dec_snr_low_offset", "dec_snr_high_offset"):
            kwargs[key] = reader.real(tr, "training", key, td[key].default)
        kwargs["dtype"] = reader.string(tr, "training", "dtype", td["dtype"].default)
        if "finetune" in tr:
            ft = reader.table(tr, "finetune", {"batch_size", "micro_batch_size", "epochs"}, prefix="training.")
            kwargs["finetune"] = FinetuneConfig(
                batch_size=reader.integer(ft, "training.finetune", "batch_size", None, minimum=1),
                micro_batch_size=reader.integer(ft, "training.finetune", "micro_batch_size", None, minimum=1),
                epochs=reader.integer(ft, "training.finetune", "epochs", 1, minimum=0),
            )
        try:
            training = TrainingConfig(**kwargs)
        except ConfigError as exc:
            raise reader.error(str(exc).split(": ", 1)[-1], exc.field or "training") from None

        ev = reader.table(data, "eval", {"snr_db", "min_block_errors", "max_blocks", "batch_size"})
        snrs = ev.get("snr_db", EvalConfig().snr_db)
        if not isinstance(snrs, list) or not all(_is_number(s) for s in snrs):
            raise reader.error("must be a list of numbers", "eval.snr_db")
        eval_cfg = EvalConfig(
            snr_db=[float(s) for s in snrs],
            min_block_errors=reader.integer(ev, "eval", "min_block_errors", 100, minimum=1),
            max_blocks=reader.integer(ev, "eval", "max_blocks", 1_000_000, minimum=1),
            batch_size=reader.integer(ev, "eval", "batch_size", 1000, minimum=1),
        )

        pa = reader.table(data, "paths", {"checkpoint_dir", "results_csv", "log_csv"})
        paths = PathsConfig(
            checkpoint_dir=reader.string(pa, "paths", "checkpoint_dir", PathsConfig.checkpoint_dir),
            results_csv=reader.string(pa, "paths", "results_csv", PathsConfig.results_csv),
            log_csv=reader.string(pa, "paths", "log_csv", None),
        )
        return cls(arch=arch, training=training, eval=eval_cfg, paths=paths, seed=seed)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


class _Reader:
    """Typed field access that reports the dotted key and, when possible, its source line."""

    def __init__(self, text: Optional[str]):
        self.lines = text.splitlines() if text else []

    def line_of(self, dotted: str) -> Optional[int]:
        if not self.lines:
            return None
        *sections, key = dotted.split(".")
        section = ".".join(sections)
        current = ""
        for no, raw in enumerate(self.lines, start=1):
            line = raw.strip()
            header = re.match(r"^\[([^\]]+)\]", line)
            if header:
                current = header.group(1).strip()
                if current == dotted:
                    return no
                continue
            if current == section and re.match(rf"^{re.escape(key)}\s*=", line):
                return no
        return None

    def error(self, message: str, dotted: str) -> ConfigError:
        return ConfigError(message, field=dotted, line=self.line_of(dotted))

    def keys(self, table: dict, section: str, allowed: set) -> None:
        for key in table:
            if key not in allowed:
                dotted = f"{section}.{key}" if section else key
                raise self.error(f"unknown key (allowed: {', '.join(sorted(allowed))})", dotted)

    def table(self, data: dict, name: str, allowed: set, required: bool = False, prefix: str = "") -> dict:
        if name not in data:
            if required:
                raise self.error("missing required table", prefix + name)
            return {}
        value = data[name]
        if not isinstance(value, dict):
            raise self.error("must be a table", prefix + name)
        self.keys(value, prefix + name, allowed)
        return value

    def integer(self, table: dict, section: str, key: str, default, minimum: Optional[int] = None) -> int:
        dotted = f"{section}.{key}" if section else key
        if key not in table:
            if default is None:
                raise self.error("missing required key", dotted)
            return default
        value = table[key]
        if not isinstance(value, int) or isinstance(value, bool):
            raise self.error(f"must be an integer, got {value!r}", dotted)
        if minimum is not None and value < minimum:
            raise self.error(f"must be >= {minimum}, got {value}", dotted)
        return value

    def real(self, table: dict, section: str, key: str, default: float) -> float:
        if key not in table:
            return default
        value = table[key]
        if not _is_number(value):
            raise self.error(f"must be a number, got {value!r}", f"{section}.{key}")
        return float(value)

    def string(self, table: dict, section: str, key: str, default: Optional[str]) -> Optional[str]:
        if key not in table:
            return default
        value = table[key]
        if not isinstance(value, str):
            raise self.error(f"must be a string, got {value!r}", f"{section}.{key}")
        return value


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r} (available: {', '.join(PRESETS)})", field="preset")
    return resources.files("productae.presets").joinpath(f"{name}.toml").read_text()


def load_preset(name: str) -> RunConfig:
    return RunConfig.from_toml(preset_text(name))
