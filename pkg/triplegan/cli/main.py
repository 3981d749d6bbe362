"""``triplegan`` command line.

Exit codes: 0 on success, 1 on a failed verification or a runtime/I/O error,
2 on a usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

from triplegan.autodiff.random import RngStream
from triplegan.cli.checkpoint import read_checkpoint
from triplegan.cli.export import export_benchmark, generated_dataset, interpolation_csv, write_csv
from triplegan.core.errors import ConfigError, TripleGanError
from triplegan.core.settings import Config, load_config
from triplegan.data.splits import make_benchmark
from triplegan.evaluation.judge import evaluate_checkpoint
from triplegan.game.gradient_suite import GRADIENT_TOLERANCE, run_gradient_suite, worst_error
from triplegan.game.state import TrainState
from triplegan.game.training import run_training
from triplegan.oracle.verify import OracleSuite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _at_least(minimum: int) -> Callable[[str], int]:
    def parse(text: str) -> int:
        try:
            value = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
        if value < minimum:
            raise argparse.ArgumentTypeError(f"must be >= {minimum}, got {value}")
        return value

    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="triplegan", description="Triple-GAN at desk scale.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log at DEBUG level")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="pretrain C, then play the three-player game")
    train.add_argument("--config", required=True, type=Path)
    train.add_argument("--out", type=Path, help="output directory (overrides [run] out_dir)")
    train.add_argument("--seed", type=int, help="overrides [data] seed")
    train.add_argument("--resume", type=Path, help="continue from this checkpoint")
    train.add_argument("--serial", action="store_true", help="no prefetch thread; bitwise reproducible")

    evaluate = commands.add_parser("eval", help="error rates, fidelity and MMD² of a checkpoint")
    evaluate.add_argument("--checkpoint", required=True, type=Path)
    evaluate.add_argument("--n", type=_at_least(2), default=200, help="generated samples per class")
    evaluate.add_argument("--seed", type=int, default=0)

    sample = commands.add_parser("sample", help="dump per-class samples and latent interpolations")
    sample.add_argument("--checkpoint", required=True, type=Path)
    sample.add_argument("--n", type=_at_least(1), default=100, help="samples per class")
    sample.add_argument("--steps", type=_at_least(2), default=10, help="points per interpolation path")
    sample.add_argument("--out", type=Path, default=Path("samples"))
    sample.add_argument("--seed", type=int, default=0)

    data_gen = commands.add_parser("data-gen", help="write the configured benchmark as CSV")
    data_gen.add_argument("--config", required=True, type=Path)
    data_gen.add_argument("--out", type=Path, default=Path("data"))
    data_gen.add_argument("--seed", type=int, help="overrides [data] seed")

    oracle = commands.add_parser("verify-oracle", help="check the tabular equilibrium theory")
    oracle.add_argument("--seeds", type=_at_least(1), default=5)
    oracle.add_argument("--iters", type=_at_least(1), default=2000)
    oracle.add_argument("--out", type=Path, help="CSV of per-round distances")

    grad_check = commands.add_parser("grad-check", help="finite-difference check of every game loss")
    grad_check.add_argument("--config", type=Path, help="network sizes (defaults when omitted)")
    grad_check.add_argument("--seed", type=int, default=0)
    grad_check.add_argument(
        "--coords", type=_at_least(0), default=8, help="coordinates sampled per parameter; 0 checks every one"
    )
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    overrides: dict[str, Any] = {}
    if getattr(args, "seed", None) is not None:
        overrides["data"] = {"seed": args.seed}
    run: dict[str, Any] = {}
    if getattr(args, "out", None) is not None:
        run["out_dir"] = str(args.out)
    if getattr(args, "serial", False):
        run["serial"] = True
    if run:
        overrides["run"] = run
    return overrides


def cmd_train(args: argparse.Namespace) -> int:
    config = load_config(args.config, **_overrides(args))
    result = run_training(config, resume=args.resume)
    print(f"trained {result.iterations} iterations; checkpoint {result.checkpoint}; metrics {result.metrics}")
    if result.last_row is not None:
        row = result.last_row
        print(f"validation error: student {row.err_val_student:.4f}, teacher {row.err_val_teacher:.4f}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    report = evaluate_checkpoint(args.checkpoint, n_per_class=args.n, seed=args.seed)
    print(report.to_text())
    return EXIT_OK


def cmd_sample(args: argparse.Namespace) -> int:
    state = TrainState.from_entries(read_checkpoint(args.checkpoint))
    generator = state.model.generator
    rng = RngStream(args.seed, "sample")
    spec = state.data.benchmark.train.spec
    write_csv(args.out / "samples.csv", generated_dataset(generator, spec, args.n, rng).to_csv())
    write_csv(args.out / "interpolation.csv", interpolation_csv(generator, args.steps, rng))
    print(f"wrote samples.csv and interpolation.csv to {args.out}")
    return EXIT_OK


def cmd_data_gen(args: argparse.Namespace) -> int:
    seed = {"data": {"seed": args.seed}} if args.seed is not None else {}
    config = load_config(args.config, **seed)
    paths = export_benchmark(make_benchmark(config.data), args.out)
    print("\n".join(str(p) for p in paths))
    return EXIT_OK


def cmd_verify_oracle(args: argparse.Namespace) -> int:
    report = OracleSuite(seeds=args.seeds, iters=args.iters).run()
    print(report.to_text())
    if args.out is not None:
        write_csv(args.out, report.distance_csv())
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_grad_check(args: argparse.Namespace) -> int:
    config = load_config(args.config) if args.config is not None else Config()
    coords = args.coords or None
    results = run_gradient_suite(config, seed=args.seed, max_coords=coords)
    if coords is None:
        print("checked every coordinate")
    else:
        print(f"sampled up to {coords} coordinates per parameter")
    for result in results:
        print(f"{result.name:<36} {result.max_error:.3e} {'ok' if result.passed else 'FAIL'}")
    worst = worst_error(results)
    print(f"max relative error {worst:.3e} (tolerance {GRADIENT_TOLERANCE:.0e})")
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "sample": cmd_sample,
    "data-gen": cmd_data_gen,
    "verify-oracle": cmd_verify_oracle,
    "grad-check": cmd_grad_check,
}


def run_command(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TripleGanError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
