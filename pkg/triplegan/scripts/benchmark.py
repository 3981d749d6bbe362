"""Paired Triple-GAN vs classifier-only calibration runs.

For every seed the same configuration is trained twice: once as the full
three-player game and once with the classifier alone (R_C + α_U·R_U for every
iteration). Test errors, judge fidelity and per-class MMD² go to
``calibration/<config name>.json``.

Usage:
    uv run python -m triplegan.scripts.benchmark --config configs/default.ini --seeds 5
"""

from __future__ import annotations

import argparse
import logging
import tempfile
from pathlib import Path

import numpy as np
from pydantic import BaseModel, Field

from triplegan.core.settings import Config, load_config
from triplegan.evaluation.judge import evaluate_state
from triplegan.evaluation.metrics import error_rate
from triplegan.game.state import TrainState
from triplegan.game.training import run_training

logger = logging.getLogger(__name__)


class SeedResult(BaseModel):
    seed: int
    triple_gan_error: float
    baseline_error: float
    fidelity: float
    mmd2_mean: float
    mmd2_reference: float
    judge_reliable: bool
    class_faithful: bool


FIDELITY_THRESHOLD = 0.90
MMD_REFERENCE_FACTOR = 3.0


class CalibrationReport(BaseModel):
    config: str = ""
    regime: str
    labels_per_class: int
    sigma: float
    iters: int
    mmd2_sample_size: int = 0
    seeds: list[SeedResult] = Field(default_factory=list)

    @property
    def mean_triple_gan_error(self) -> float:
        return float(np.mean([s.triple_gan_error for s in self.seeds]))

    @property
    def mean_baseline_error(self) -> float:
        return float(np.mean([s.baseline_error for s in self.seeds]))


def with_seed(config: Config, seed: int, out_dir: Path) -> Config:
    return config.model_copy(
        update={
            "data": config.data.model_copy(update={"seed": seed}),
            "run": config.run.model_copy(update={"out_dir": str(out_dir), "serial": True}),
        }
    )


def classifier_only(config: Config) -> Config:
    """The same run with every iteration spent in classifier pretraining."""
    run = config.run.model_copy(update={"pretrain_iters": config.run.iters})
    return config.model_copy(update={"run": run})


def _reported_error(state: TrainState) -> float:
    model, test = state.model, state.data.benchmark.test
    if state.hyper.regularizer == "mean_teacher":
        return error_rate(model.teacher.classifier, test)
    return error_rate(model.classifier, test)


def run_calibration(
    config: Config, seeds: int, work_dir: Path, n_per_class: int = 200, name: str = ""
) -> CalibrationReport:
    report = CalibrationReport(
        config=name,
        regime=config.data.regime,
        labels_per_class=config.data.labels_per_class,
        sigma=config.data.sigma,
        iters=config.run.iters,
    )
    for seed in range(seeds):
        seeded = with_seed(config, seed, work_dir / f"triple_gan_{seed}")
        triple = run_training(seeded).state
        baseline_cfg = classifier_only(with_seed(config, seed, work_dir / f"baseline_{seed}"))
        baseline = run_training(baseline_cfg).state
        evaluation = evaluate_state(triple, n_per_class=n_per_class, seed=seed)
        result = SeedResult(
            seed=seed,
            triple_gan_error=evaluation.err_test_reported,
            baseline_error=_reported_error(baseline),
            fidelity=evaluation.fidelity.overall,
            mmd2_mean=evaluation.mmd2.mean,
            mmd2_reference=evaluation.mmd2_reference.mean,
            judge_reliable=evaluation.judge_reliable,
            class_faithful=evaluation.judge_reliable
            and evaluation.fidelity.overall >= FIDELITY_THRESHOLD
            and evaluation.mmd2.mean < MMD_REFERENCE_FACTOR * evaluation.mmd2_reference.mean,
        )
        report.mmd2_sample_size = evaluation.mmd2.sample_size
        logger.info(
            "seed %d: triple-gan %.4f vs baseline %.4f, fidelity %.3f, MMD² %.5f (reference %.5f)",
            seed,
            result.triple_gan_error,
            result.baseline_error,
            result.fidelity,
            result.mmd2_mean,
            result.mmd2_reference,
        )
        report.seeds.append(result)
    return report


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0] if __doc__ else None)
    parser.add_argument("--config", type=Path, default=Path("configs/default.ini"))
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--out", type=Path, help="defaults to calibration/<config name>.json")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    config = load_config(args.config)
    with tempfile.TemporaryDirectory(prefix="triplegan-calibration-") as work:
        report = run_calibration(config, args.seeds, Path(work), name=args.config.name)
    out = args.out or Path("calibration") / f"{args.config.stem}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.model_dump_json(indent=2), encoding="utf-8")
    print(
        f"{report.regime}: triple-gan {report.mean_triple_gan_error:.4f} "
        f"vs classifier-only {report.mean_baseline_error:.4f} over {len(report.seeds)} seeds, "
        f"{sum(s.class_faithful for s in report.seeds)} class-faithful; wrote {out}"
    )


if __name__ == "__main__":
    main()
