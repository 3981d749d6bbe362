"""Unlabelled-data regularizers R_U: predictive entropy, consistency and mean teacher."""

from __future__ import annotations

from typing import Literal

import numpy as np

from triplegan.autodiff.functional import log_softmax_rows, mse, softmax_rows
from triplegan.autodiff.random import RngStreams
from triplegan.autodiff.tensor import Tensor
from triplegan.core.errors import ContractError
from triplegan.models.classifier import Classifier
from triplegan.models.teacher import Teacher

UnlabeledKind = Literal["entropy", "consistency", "mean_teacher"]


def _stochastic_probs(classifier: Classifier, x: np.ndarray, streams: RngStreams) -> Tensor:
    return softmax_rows(classifier.forward(x, "train", streams.noise, streams.dropout))


def unlabeled_regularizer(
    kind: UnlabeledKind,
    classifier: Classifier,
    x: np.ndarray,
    streams: RngStreams,
    teacher: Teacher | None = None,
) -> Tensor:
    if kind == "entropy":
        logits = classifier.forward(x, "train", streams.noise, streams.dropout)
        p = softmax_rows(logits)
        return -(p * log_softmax_rows(logits)).sum(axis=1).mean()
    if kind == "consistency":
        return mse(_stochastic_probs(classifier, x, streams), _stochastic_probs(classifier, x, streams))
    if kind == "mean_teacher":
        if teacher is None:
            raise ContractError("mean_teacher regularizer needs a teacher")
        student = _stochastic_probs(classifier, x, streams)
        target = _stochastic_probs(teacher.classifier.frozen(), x, streams).detach()
        return mse(student, target)
    raise ValueError(f"unknown unlabelled regularizer {kind!r}")
