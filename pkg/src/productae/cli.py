"""Command-line interface: ``productae {train,eval,sweep,gradcheck,oracle}``.

Exit codes: 0 success, 1 verification threshold exceeded, 2 usage or invalid
configuration, 3 I/O failure, 4 unreadable or incompatible checkpoint.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import classical
from .channel import snr_db_from_ebn0_db
from .config import PRESETS, RunConfig, load_preset
from .errors import CheckpointError, ConfigError
from .evaluation import sweep as run_sweep
from .gradcheck import tiny_model_gradcheck
from .training import Trainer, TrainingLog, large_batch_finetune, model_from_checkpoint

logger = logging.getLogger("productae")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO, EXIT_CHECKPOINT = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


def parse_points(spec: str) -> list[float]:
    """``"a:b:step"`` (inclusive of b) or a comma-separated list of numbers."""
    spec = spec.strip()
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise UsageError(f"range {spec!r} must look like start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise UsageError(f"range {spec!r} needs a positive step")
        count = math.floor((stop - start) / step + 1e-9) + 1
        return [round(start + i * step, 12) for i in range(max(count, 0))]
    return [float(p) for p in spec.split(",") if p.strip()]


def _load_config(args) -> RunConfig:
    if args.preset and args.config:
        raise UsageError("use either --config or --preset, not both")
    if args.preset:
        cfg = load_preset(args.preset)
    elif args.config:
        cfg = RunConfig.load(args.config)
    else:
        raise UsageError("one of --config or --preset is required")
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.training.seed = args.seed
    return cfg


def _print_results(results) -> None:
    print(f"{'snr_db':>8} {'ebn0_db':>8} {'ber':>11} {'bler':>11} {'bits':>10} {'blocks':>9}")
    for r in results:
        print(f"{r.snr_db:8.3f} {r.ebn0_db:8.3f} {r.ber:11.4e} {r.bler:11.4e} {r.bits_sent:10d} {r.blocks_sent:9d}")


# -- commands -----------------------------------------------------------------
def cmd_train(args) -> int:
    cfg = _load_config(args)
    if args.epochs is not None:
        cfg.training.epochs = args.epochs
    if args.out:
        cfg.paths.checkpoint_dir = args.out
        cfg.paths.log_csv = None
    paths = cfg.paths
    Path(paths.checkpoint_dir).mkdir(parents=True, exist_ok=True)
    cfg.save(Path(paths.checkpoint_dir) / "config.toml")
    trainer = Trainer.from_config(
        cfg.arch, cfg.training, checkpoint_path=paths.best_checkpoint, log=TrainingLog(paths.training_log)
    )
    trainer.fit(cfg.training.epochs)
    ft = cfg.training.finetune
    if ft is not None and ft.epochs > 0 and cfg.training.epochs > 0 and not args.no_finetune:
        large_batch_finetune(trainer, paths.best_checkpoint, ft)
    trainer.save(paths.final_checkpoint)
    print(f"trained {trainer.epoch} epochs; best decoder loss {trainer.best_loss:.6g}")
    print(f"checkpoints in {paths.checkpoint_dir}, log {paths.training_log}")
    return EXIT_OK


def _eval_points(args, rate: float) -> list[float]:
    if args.snr and args.ebn0:
        raise UsageError("use either --snr or --ebn0, not both")
    if args.snr:
        points = parse_points(args.snr)
    elif args.ebn0:
        ebn0 = parse_points(args.ebn0)
        r = args.rate if args.rate is not None else rate
        points = [float(snr_db_from_ebn0_db(e, r)) for e in ebn0]
    else:
        points = []
    if not points:
        raise UsageError("empty sweep: give at least one point with --snr or --ebn0")
    return points


def cmd_eval(args) -> int:
    model = model_from_checkpoint(args.checkpoint)
    rate = float(model.rate)
    points = _eval_points(args, rate)
    results = run_sweep(
        model, points,
        min_block_errors=args.min_block_errors, max_blocks=args.max_blocks,
        batch_size=args.batch_size, seed=args.seed or 0, workers=args.workers, csv_path=args.out,
    )
    _print_results(results)
    if args.out:
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    checkpoint = args.checkpoint or cfg.paths.best_checkpoint
    model = model_from_checkpoint(checkpoint)
    points = parse_points(args.snr) if args.snr else list(cfg.eval.snr_db)
    if not points:
        raise UsageError("empty sweep")
    out = args.out or cfg.paths.results_csv
    results = run_sweep(
        model, points,
        min_block_errors=args.min_block_errors or cfg.eval.min_block_errors,
        max_blocks=args.max_blocks or cfg.eval.max_blocks,
        batch_size=cfg.eval.batch_size, seed=cfg.seed, workers=args.workers, csv_path=out,
    )
    _print_results(results)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    report = tiny_model_gradcheck(n_params=args.params, seed=args.seed or 0)
    worst = report.worst
    print(f"checked {len(report.entries)} parameters; max relative error {report.max_rel_error:.3e}")
    if not report.passed(args.tol):
        print(f"FAIL: {worst.name}{list(worst.index)} analytic={worst.analytic:.6e} "
              f"numeric={worst.numeric:.6e} exceeds {args.tol:g}")
        return EXIT_FAIL
    print("PASS")
    return EXIT_OK


def run_oracle_checks(out=print) -> bool:
    ok = True
    spc, ham = classical.single_parity_check_code(3), classical.hamming74_code()
    for label, comp in (("SPC(3,2)^2", spc), ("Hamming(7,4)^2", ham)):
        codes = [comp, comp]
        params = classical.ProductCodeParams.from_codes(codes)
        prod_code = classical.product_code(codes)
        d = classical.min_distance_bruteforce(prod_code)
        d_comp = classical.min_distance_bruteforce(comp)
        checks = {
            "n": prod_code.n == params.n == comp.n ** 2,
            "k": prod_code.k == params.k == comp.k ** 2,
            "R": prod_code.rate == params.rate == comp.rate ** 2,
            "d": d == d_comp ** 2 == params.d,
        }
        kron_ok = commute_ok = True
        shape = (comp.k, comp.k)
        for m in classical.all_messages(params.k):
            U = m.reshape(shape)
            C = classical.encode_product(codes, U)
            kron_ok &= bool(np.array_equal(C, classical.encode_via_generator(codes, U)))
            commute_ok &= bool(np.array_equal(C, classical.encode_product(codes, U, order=(2, 1))))
        checks["kronecker"] = kron_ok
        checks["commutativity"] = commute_ok
        passed = all(checks.values())
        ok &= passed
        out(f"{label}: n={params.n} k={params.k} R={params.rate} d={d} "
            + " ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items())
            + (" PASS" if passed else " FAIL"))
    return ok


def cmd_oracle(args) -> int:
    ok = run_oracle_checks()
    print("PASS" if ok else "FAIL: classical oracle")
    return EXIT_OK if ok else EXIT_FAIL


# -- argument parsing -----------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="productae", description="Train and evaluate ProductAE neural product codes.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def config_args(p):
        p.add_argument("--config", help="TOML run configuration file")
        p.add_argument("--preset", choices=PRESETS, help="use a shipped configuration")
        p.add_argument("--seed", type=int, help="override the configured seed")

    def stop_args(p, defaults=True):
        p.add_argument("--min-block-errors", type=int, default=100 if defaults else None)
        p.add_argument("--max-blocks", type=int, default=1_000_000 if defaults else None)
        p.add_argument("--workers", type=int, default=1, help="parallel evaluation threads (default 1)")

    p = sub.add_parser("train", help="train a ProductAE from a configuration")
    config_args(p)
    p.add_argument("--epochs", type=int, help="override the number of epochs (0 writes the initial checkpoint only)")
    p.add_argument("--out", help="checkpoint directory (overrides paths.checkpoint_dir)")
    p.add_argument("--no-finetune", action="store_true", help="skip the configured large-batch fine-tuning")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="measure BER/BLER of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--snr", help="SNR points in dB: start:stop:step or a,b,c")
    p.add_argument("--ebn0", help="Eb/N0 points in dB: start:stop:step or a,b,c")
    p.add_argument("--rate", type=float, help="code rate for --ebn0 (default: from checkpoint)")
    p.add_argument("--rate-from-checkpoint", action="store_true", help="take the rate for --ebn0 from the checkpoint (default)")
    p.add_argument("--batch-size", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV output path")
    stop_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="evaluate the configured SNR list for a trained run")
    config_args(p)
    p.add_argument("--checkpoint", help="checkpoint (default: best checkpoint of the run)")
    p.add_argument("--snr", help="override SNR points: start:stop:step or a,b,c")
    p.add_argument("--out", help="CSV output path (default: paths.results_csv)")
    stop_args(p, defaults=False)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference check of backprop on a tiny model")
    p.add_argument("--params", type=int, default=200, help="number of sampled parameters")
    p.add_argument("--tol", type=float, default=1e-3, help="maximum allowed relative error")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("oracle", help="exhaustive checks of the classical product-code rules")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except ConfigError as exc:
        print(f"productae: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CheckpointError as exc:
        print(f"productae: bad checkpoint: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except OSError as exc:
        print(f"productae: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
