"""The fully supervised judge classifier and whole-checkpoint evaluation."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict

from triplegan.autodiff.functional import cross_entropy
from triplegan.autodiff.optim import AdamState, adam_step
from triplegan.autodiff.random import RngStream
from triplegan.autodiff.tensor import grad
from triplegan.cli.checkpoint import read_checkpoint
from triplegan.data.batching import Batcher
from triplegan.data.synthetic import Dataset
from triplegan.evaluation.generation import (
    FidelityReport,
    MmdReport,
    conditional_fidelity,
    mean_true_log_density,
    mmd2_per_class,
    mmd2_real_reference,
)
from triplegan.evaluation.metrics import error_rate
from triplegan.game.state import TrainState
from triplegan.models.classifier import Classifier

logger = logging.getLogger(__name__)

JUDGE_ERROR_THRESHOLD = 0.02


class Judge(BaseModel):
    """A classifier trained on every training label, plus its held-out error."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    classifier: Classifier
    test_error: float
    reliable: bool

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.classifier.predict(x)


def train_oracle_classifier(
    train: Dataset,
    seed: int,
    test: Dataset | None = None,
    widths: Sequence[int] = (64, 64),
    iters: int = 1500,
    batch_size: int = 128,
    lr: float = 3e-3,
) -> Judge:
    """Fit a noise-free, dropout-free classifier on the fully labelled ``train`` set.

    The judge counts as unreliable when its error on ``test`` (or on ``train``
    when no test set is given) reaches 2%; metrics built on it should say so.
    """
    rng = RngStream(seed, "judge/init")
    judge = Classifier(train.dim, train.n_classes, widths, rng, input_noise=0.0, dropout_rate=0.0)
    params = judge.parameters()
    optimizer = AdamState(lr=lr, beta1=0.9, beta2=0.999)
    batches = Batcher(np.arange(len(train)), min(batch_size, len(train)), seed, name="judge", wrap=True)
    for _ in range(iters):
        idx = next(batches)
        loss = cross_entropy(judge.forward(train.features[idx], "train"), train.labels[idx])
        grads = grad(loss, params.values())
        adam_step(params, {name: grads[p] for name, p in params.items()}, optimizer)

    held_out = test if test is not None else train
    test_error = error_rate(judge, held_out)
    reliable = test_error < JUDGE_ERROR_THRESHOLD
    if not reliable:
        logger.warning(
            "judge classifier error %.4f is above %.2f; fidelity numbers are unreliable",
            test_error,
            JUDGE_ERROR_THRESHOLD,
        )
    return Judge(classifier=judge, test_error=test_error, reliable=reliable)


class EvaluationReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    iteration: int
    err_test_student: float
    err_test_teacher: float
    err_test_reported: float
    judge_error: float
    judge_reliable: bool
    fidelity: FidelityReport
    mmd2: MmdReport
    mmd2_reference: MmdReport
    mean_log_density: float | None

    def to_text(self) -> str:
        density = "n/a" if self.mean_log_density is None else f"{self.mean_log_density:.4f}"
        reliability = "" if self.judge_reliable else " (UNRELIABLE)"
        return "\n".join(
            [
                f"iteration            {self.iteration}",
                f"test error student   {self.err_test_student:.4f}",
                f"test error teacher   {self.err_test_teacher:.4f}",
                f"test error reported  {self.err_test_reported:.4f}",
                f"judge test error     {self.judge_error:.4f}{reliability}",
                f"fidelity overall     {self.fidelity.overall:.4f}",
                f"fidelity per class   {', '.join(f'{v:.3f}' for v in self.fidelity.per_class)}",
                f"MMD² mean            {self.mmd2.mean:.6f} (h={self.mmd2.bandwidth:.4f}, "
                f"n={self.mmd2.sample_size}, {self.mmd2.estimator})",
                f"MMD² real reference  {self.mmd2_reference.mean:.6f}",
                f"mean true log p(x|y) {density}",
            ]
        )


def evaluate_state(state: TrainState, n_per_class: int = 200, seed: int = 0) -> EvaluationReport:
    """Test errors, judge fidelity, per-class MMD² and true log-density for a run."""
    benchmark = state.data.benchmark
    model = state.model
    student = error_rate(model.classifier, benchmark.test)
    teacher = error_rate(model.teacher.classifier, benchmark.test)
    reported = teacher if state.hyper.regularizer == "mean_teacher" else student

    judge = train_oracle_classifier(benchmark.train, seed, test=benchmark.test)
    rng = RngStream(seed, "evaluation")
    fidelity = conditional_fidelity(model.generator, judge, n_per_class, rng)
    mmd2 = mmd2_per_class(model.generator, benchmark.test, None, n_per_class, rng)
    reference = mmd2_real_reference(benchmark.test, mmd2.bandwidth, rng, n=n_per_class)
    spec = benchmark.train.spec
    density = mean_true_log_density(model.generator, spec, n_per_class, rng) if spec.sigma > 0 else None
    return EvaluationReport(
        iteration=state.iteration,
        err_test_student=student,
        err_test_teacher=teacher,
        err_test_reported=reported,
        judge_error=judge.test_error,
        judge_reliable=judge.reliable,
        fidelity=fidelity,
        mmd2=mmd2,
        mmd2_reference=reference,
        mean_log_density=density,
    )


def evaluate_checkpoint(path: str | Path, n_per_class: int = 200, seed: int = 0) -> EvaluationReport:
    state = TrainState.from_entries(read_checkpoint(path))
    logger.info("evaluating %s at iteration %d", path, state.iteration)
    return evaluate_state(state, n_per_class, seed)
