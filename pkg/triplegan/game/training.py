"""The training loop: classifier pretraining, then alternating D → C → G updates.

Each step draws its batches, updates the discriminator on real pairs against
classifier-labelled and generated pairs, updates the classifier with the
label-marginalised adversarial term plus its regularizers, updates the
generator, and finally moves the EMA teacher.
"""

from __future__ import annotations

import logging
import time
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict

from triplegan.autodiff.optim import adam_step
from triplegan.autodiff.random import RngStream
from triplegan.autodiff.tensor import GradientMap, Parameter, Tensor, grad
from triplegan.cli.checkpoint import read_checkpoint, write_checkpoint
from triplegan.core.errors import CheckpointError
from triplegan.core.settings import Config
from triplegan.data.batching import Prefetcher
from triplegan.data.splits import Benchmark, make_benchmark
from triplegan.evaluation.metrics import MetricsRow, error_rate
from triplegan.game.hyperparams import GameHyperparams
from triplegan.game.losses import (
    Pairs,
    classifier_loss,
    discriminator_loss,
    generator_loss,
    supervised_loss,
)
from triplegan.game.state import Batch, StepLosses, TrainState
from triplegan.models.classifier import Classifier
from triplegan.models.module import Module
from triplegan.models.triple_gan import TripleGanModel

logger = logging.getLogger(__name__)

CONFIG_ECHO = "config.ini"
METRICS_FILE = "metrics.csv"
LAST_CHECKPOINT = "last.tgan"


def label_classifier(model: TripleGanModel, hyper: GameHyperparams) -> Classifier:
    """The classifier that labels unlabelled x for the discriminator (teacher or student)."""
    return model.teacher.classifier if hyper.uses_teacher_labels else model.classifier


def pseudo_pair_augment(
    labeler: Classifier, x_unlabeled: np.ndarray, rho: float, m_d: int, rng: RngStream
) -> Pairs:
    """Pseudo-labelled positives for D: round(ρ·m_d) unlabelled rows with ŷ ~ p_c(y|x).

    Labels are sampled from eval-mode probabilities; nothing here is differentiated.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"pseudo-label fraction must lie in [0, 1], got {rho}")
    k = min(int(round(rho * m_d)), len(x_unlabeled))
    if k == 0:
        return x_unlabeled[:0], np.empty(0, dtype=np.int64)
    x = x_unlabeled[:k]
    return x, rng.categorical(labeler.probabilities(x))


def _by_name(grads: GradientMap) -> dict[str, np.ndarray]:
    return {param.name or "": g for param, g in grads.items()}


def _update(module: Module, loss: Tensor, state: TrainState, key: str, lr_scale: float) -> None:
    params: dict[str, Parameter] = module.parameters()
    grads = grad(loss, params.values())
    adam_step(params, _by_name(grads), state.optimizers[key], lr_scale)


@contextmanager
def _phase(iteration: int, phase: str) -> Iterator[None]:
    try:
        yield
    except Exception:
        logger.exception("TRAINING ERROR [iter=%s] %s", iteration, phase)
        raise


def train_step(state: TrainState, batch: Batch) -> StepLosses:
    """One full three-player iteration on ``batch``."""
    model, hyper, streams = state.model, state.hyper, state.streams
    it = state.iteration
    alpha = hyper.alpha
    lr_scale = hyper.lr_rampup.value(it)
    labeler = label_classifier(model, hyper)
    state.data_state = batch.source_state

    with _phase(it, "discriminator-update"):
        x_g = model.generator.generate(batch.y_g, batch.z_g)
        y_c = streams.pseudo.categorical(labeler.probabilities(batch.x_c))
        x_pos, y_pos = batch.x_d, batch.y_d
        if hyper.uses_unlabeled and hyper.pseudo_fraction > 0:
            x_ps, y_ps = pseudo_pair_augment(
                labeler, batch.x_p, hyper.pseudo_fraction, hyper.batch_d, streams.pseudo
            )
            keep = len(batch.x_d) - len(x_ps)
            x_pos = np.concatenate([batch.x_d[:keep], x_ps])
            y_pos = np.concatenate([batch.y_d[:keep], y_ps])
        loss_d = discriminator_loss(model, (x_pos, y_pos), (batch.x_c, y_c), (x_g, batch.y_g), alpha)
        _update(model.discriminator, loss_d, state, "d", lr_scale)

    with _phase(it, "classifier-update"):
        labeled = (batch.x_d, batch.y_d)
        closs = classifier_loss(model, batch.x_c, labeled, (x_g, batch.y_g), hyper, it, streams)
        _update(model.classifier, closs.total, state, "c", lr_scale)

    with _phase(it, "generator-update"):
        loss_g = generator_loss(model, batch.y_g, batch.z_g, alpha, hyper.generator_loss)
        _update(model.generator, loss_g, state, "g", lr_scale)

    model.teacher.ema_update(model.classifier)
    state.iteration += 1
    return StepLosses(
        loss_d=loss_d.item(),
        loss_g=loss_g.item(),
        loss_c_adv=closs.adversarial,
        r_c=closs.r_c,
        r_p=closs.r_p,
        r_u=closs.r_u,
        alpha_p_eff=closs.alpha_p,
        alpha_u_eff=closs.alpha_u,
    )


def pretrain_step(state: TrainState, batch: Batch) -> StepLosses:
    """Classifier-only iteration on R_C + α_U·R_U."""
    model, hyper = state.model, state.hyper
    it = state.iteration
    state.data_state = batch.source_state
    with _phase(it, "pretrain-update"):
        x_u = batch.x_c if hyper.uses_unlabeled else None
        closs = supervised_loss(model, (batch.x_d, batch.y_d), x_u, hyper, it, state.streams)
        _update(model.classifier, closs.total, state, "c", hyper.lr_rampup.value(it))
    model.teacher.ema_update(model.classifier)
    state.iteration += 1
    return StepLosses(r_c=closs.r_c, r_u=closs.r_u, alpha_u_eff=closs.alpha_u)


# ---------------------------------------------------------------------------
# Full runs
# ---------------------------------------------------------------------------


class TrainingResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    out_dir: Path
    iterations: int
    checkpoint: Path
    metrics: Path
    last_row: MetricsRow | None
    state: TrainState


def _metrics_row(state: TrainState, benchmark: Benchmark, serial: bool) -> MetricsRow:
    losses = state.accumulator.mean()
    return MetricsRow(
        iter=state.iteration,
        err_val_student=error_rate(state.model.classifier, benchmark.val),
        err_val_teacher=error_rate(state.model.teacher.classifier, benchmark.val),
        time_ms=0.0 if serial else state.accumulator.mean_time_ms(),
        **losses.model_dump(),
    )


def _prepare_metrics(path: Path, resume_iteration: int | None) -> None:
    """Fresh header, or, on resume, drop rows written after the checkpoint."""
    if resume_iteration is None or not path.exists():
        path.write_text(MetricsRow.csv_header() + "\n", encoding="utf-8")
        return
    lines = path.read_text(encoding="utf-8").splitlines()
    kept = [lines[0]] + [
        line for line in lines[1:] if line and int(line.split(",", 1)[0]) <= resume_iteration
    ]
    path.write_text("\n".join(kept) + "\n", encoding="utf-8")


def run_training(
    config: Config,
    resume: str | Path | None = None,
    out_dir: str | Path | None = None,
    serial: bool | None = None,
    benchmark: Benchmark | None = None,
    on_row: Callable[[MetricsRow], None] | None = None,
) -> TrainingResult:
    """Pretrain the classifier, then run the three-player game, writing metrics and checkpoints.

    ``out_dir`` receives ``config.ini`` (the fully resolved configuration),
    ``metrics.csv`` and ``checkpoint_<iter>.tgan`` / ``last.tgan``.
    """
    run = config.run
    serial = run.serial if serial is None else serial
    out = Path(out_dir or run.out_dir)
    benchmark = benchmark or make_benchmark(config.data)
    state = TrainState.create(config, benchmark)

    resume_iteration: int | None = None
    if resume is not None:
        state.load_entries(read_checkpoint(resume))
        resume_iteration = state.iteration
        logger.info("resumed from %s at iteration %d", resume, state.iteration)

    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / CONFIG_ECHO).write_text(config.to_ini(), encoding="utf-8")
        metrics_path = out / METRICS_FILE
        _prepare_metrics(metrics_path, resume_iteration)
    except OSError as exc:
        raise CheckpointError(f"cannot prepare output directory {out}: {exc.strerror or exc}") from exc

    pretrain = config.pretrain_iters
    total = run.iters
    last_row: MetricsRow | None = None
    prefetcher: Prefetcher[Batch] | None = None
    if not serial and state.iteration < total:
        prefetcher = Prefetcher(state.data.next_batch, depth=run.prefetch_depth, limit=total - state.iteration)
    if state.iteration < pretrain:
        logger.info("classifier pretraining for %d iterations", pretrain - state.iteration)

    try:
        with metrics_path.open("a", encoding="utf-8") as metrics_file:
            while state.iteration < total:
                batch = prefetcher.get() if prefetcher else state.data.next_batch()
                started = time.perf_counter()
                if state.iteration < pretrain:
                    losses = pretrain_step(state, batch)
                else:
                    if state.iteration == pretrain:
                        logger.info("adversarial training starts at iteration %d", state.iteration)
                    losses = train_step(state, batch)
                state.accumulator.add(losses, (time.perf_counter() - started) * 1000.0)

                if state.iteration % run.metrics_interval == 0 or state.iteration == total:
                    last_row = _metrics_row(state, benchmark, serial)
                    metrics_file.write(last_row.to_csv() + "\n")
                    metrics_file.flush()
                    state.accumulator.reset()
                    logger.info(
                        "iter %d: loss_d=%.4f loss_g=%.4f r_c=%.4f err_val=%.3f/%.3f",
                        last_row.iter,
                        last_row.loss_d,
                        last_row.loss_g,
                        last_row.r_c,
                        last_row.err_val_student,
                        last_row.err_val_teacher,
                    )
                    if on_row is not None:
                        on_row(last_row)
                if state.iteration % run.checkpoint_interval == 0:
                    write_checkpoint(out / f"checkpoint_{state.iteration:06d}.tgan", state.to_entries())
    finally:
        if prefetcher is not None:
            prefetcher.close()

    checkpoint = write_checkpoint(out / LAST_CHECKPOINT, state.to_entries())
    return TrainingResult(
        out_dir=out,
        iterations=state.iteration,
        checkpoint=checkpoint,
        metrics=metrics_path,
        last_row=last_row,
        state=state,
    )
