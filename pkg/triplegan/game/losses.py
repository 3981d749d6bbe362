"""Per-player losses of the three-player game, written for minimisation.

Each loss reads the other players through ``frozen()`` views, so its gradient
map is nonzero only on the parameters of the player it trains.
"""

from __future__ import annotations

import numpy as np
from pydantic import BaseModel, ConfigDict

from triplegan.autodiff.functional import bce_logit, cross_entropy, softmax_rows
from triplegan.autodiff.random import RngStreams
from triplegan.autodiff.tensor import Tensor, softplus
from triplegan.core.errors import ContractError, DimensionError
from triplegan.game.hyperparams import GameHyperparams
from triplegan.game.regularizers import unlabeled_regularizer
from triplegan.models.triple_gan import TripleGanModel

Pairs = tuple[np.ndarray, np.ndarray]


def _nonempty(name: str, pairs: Pairs) -> None:
    x, y = pairs
    if len(x) == 0 or len(y) == 0:
        raise ContractError(f"{name} batch is empty")
    if len(x) != len(y):
        raise DimensionError(f"{name} batch has {len(x)} inputs but {len(y)} labels")


def discriminator_loss(
    model: TripleGanModel, real: Pairs, from_classifier: Pairs, generated: Pairs, alpha: float
) -> Tensor:
    """-[mean log D(real) + α·mean log(1-D(x_c,y_c)) + (1-α)·mean log(1-D(x_g,y_g))]."""
    for name, pairs in (("real", real), ("classifier", from_classifier), ("generated", generated)):
        _nonempty(name, pairs)
    d = model.discriminator
    return (
        bce_logit(d(*real), 1.0)
        + alpha * bce_logit(d(*from_classifier), 0.0)
        + (1.0 - alpha) * bce_logit(d(*generated), 0.0)
    )


class ClassifierLoss(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    total: Tensor
    adversarial: float
    r_c: float
    r_p: float
    r_u: float
    alpha_p: float
    alpha_u: float


def adversarial_classifier_term(
    model: TripleGanModel, logits: Tensor, x: np.ndarray, alpha: float
) -> Tensor:
    """α·mean_x Σ_y p_c(y|x)·log(1 - D(x, y)) with y integrated out exactly."""
    all_labels = model.discriminator.frozen().all_labels(x)
    log_fake = Tensor(log_one_minus_d(all_labels.data))
    return alpha * (softmax_rows(logits) * log_fake).sum(axis=1).mean()


def classifier_loss(
    model: TripleGanModel,
    x_c: np.ndarray,
    labeled: Pairs,
    generated: Pairs,
    hyper: GameHyperparams,
    iteration: int,
    streams: RngStreams,
    x_u: np.ndarray | None = None,
) -> ClassifierLoss:
    """Adversarial term + R_C + α_P·R_P + α_U·R_U; terms with a zero coefficient are left out.

    ``x_u`` feeds R_U and defaults to ``x_c``.
    """
    c = model.classifier
    if c.n_classes != model.discriminator.n_classes:
        raise DimensionError(
            f"classifier has {c.n_classes} classes, discriminator {model.discriminator.n_classes}"
        )
    _nonempty("labelled", labeled)
    if len(x_c) == 0:
        raise ContractError("classifier batch is empty")

    logits_c = c.forward(x_c, "train", streams.noise, streams.dropout)
    adversarial = adversarial_classifier_term(model, logits_c, x_c, hyper.alpha)
    r_c = cross_entropy(c.forward(labeled[0], "train", streams.noise, streams.dropout), labeled[1])
    total = adversarial + r_c

    alpha_p = hyper.alpha_p_at(iteration)
    r_p_value = 0.0
    if alpha_p > 0:
        _nonempty("generated", generated)
        x_g, y_g = generated
        r_p = cross_entropy(c.forward(x_g, "train", streams.noise, streams.dropout), y_g)
        total = total + alpha_p * r_p
        r_p_value = r_p.item()

    alpha_u = hyper.alpha_u_at(iteration)
    r_u_value = 0.0
    if alpha_u > 0 and hyper.regularizer != "none":
        x_reg = x_c if x_u is None else x_u
        r_u = unlabeled_regularizer(hyper.regularizer, c, x_reg, streams, model.teacher)
        total = total + alpha_u * r_u
        r_u_value = r_u.item()

    return ClassifierLoss(
        total=total,
        adversarial=adversarial.item(),
        r_c=r_c.item(),
        r_p=r_p_value,
        r_u=r_u_value,
        alpha_p=alpha_p,
        alpha_u=alpha_u,
    )


def supervised_loss(
    model: TripleGanModel,
    labeled: Pairs,
    x_u: np.ndarray | None,
    hyper: GameHyperparams,
    iteration: int,
    streams: RngStreams,
) -> ClassifierLoss:
    """R_C + α_U·R_U only: the classifier pretraining objective and the classifier-only baseline."""
    c = model.classifier
    _nonempty("labelled", labeled)
    r_c = cross_entropy(c.forward(labeled[0], "train", streams.noise, streams.dropout), labeled[1])
    total = r_c
    alpha_u = hyper.alpha_u_at(iteration)
    r_u_value = 0.0
    if alpha_u > 0 and hyper.regularizer != "none" and x_u is not None and len(x_u):
        r_u = unlabeled_regularizer(hyper.regularizer, c, x_u, streams, model.teacher)
        total = total + alpha_u * r_u
        r_u_value = r_u.item()
    return ClassifierLoss(
        total=total, adversarial=0.0, r_c=r_c.item(), r_p=0.0, r_u=r_u_value, alpha_p=0.0, alpha_u=alpha_u
    )


def generator_loss(
    model: TripleGanModel, y_g: np.ndarray, z: np.ndarray, alpha: float, variant: str = "minimax"
) -> Tensor:
    """minimax: (1-α)·mean log(1 - D(G(y,z), y)); nonsaturating: -(1-α)·mean log D(G(y,z), y)."""
    x_g = model.generator(y_g, z)
    logits = model.discriminator.frozen()(x_g, y_g)
    if variant == "minimax":
        return -(1.0 - alpha) * bce_logit(logits, 0.0)
    if variant == "nonsaturating":
        return (1.0 - alpha) * bce_logit(logits, 1.0)
    raise ValueError(f"unknown generator loss variant {variant!r}")


def log_one_minus_d(logits: np.ndarray) -> np.ndarray:
    """log(1 - sigmoid(l)) = -softplus(l), elementwise."""
    return -softplus(Tensor(logits)).data
