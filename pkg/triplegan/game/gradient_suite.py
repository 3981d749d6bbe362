"""Finite-difference checks of every composite game loss on freshly built networks."""

from __future__ import annotations

import logging
from collections.abc import Callable

from pydantic import BaseModel, ConfigDict

from triplegan.autodiff.gradcheck import grad_check
from triplegan.autodiff.random import RngStream, RngStreams
from triplegan.autodiff.tensor import Tensor
from triplegan.core.settings import Config
from triplegan.game.hyperparams import GameHyperparams, Schedule
from triplegan.game.losses import classifier_loss, discriminator_loss, generator_loss
from triplegan.models.module import Module
from triplegan.models.triple_gan import build_model

logger = logging.getLogger(__name__)

GRADIENT_TOLERANCE = 1e-4


class GradientCheck(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    max_error: float

    @property
    def passed(self) -> bool:
        return self.max_error < GRADIENT_TOLERANCE


def run_gradient_suite(
    config: Config | None = None, seed: int = 0, batch: int = 8, max_coords: int | None = 8
) -> list[GradientCheck]:
    """Max relative FD error for D's loss, C's loss under each R_U kind and both G losses."""
    config = config or Config()
    if config.run.dtype != "f64":
        config = config.model_copy(update={"run": config.run.model_copy(update={"dtype": "f64"})})
    in_dim, n_classes = config.data.dim, config.data.n_classes
    rng = RngStream(seed, "gradcheck/data")
    model = build_model(config, in_dim, n_classes, RngStream(seed, "gradcheck/init"))
    for param in model.teacher.classifier.parameters().values():
        param.data += 0.01 * rng.normal(param.shape)

    x_d = rng.uniform((batch, in_dim)) * 2 - 1
    y_d = rng.integers(0, n_classes, batch)
    x_c = rng.uniform((batch, in_dim)) * 2 - 1
    y_c = rng.integers(0, n_classes, batch)
    y_g = rng.integers(0, n_classes, batch)
    z_g = rng.normal((batch, config.model.latent_dim))
    x_g = model.generator.generate(y_g, z_g)

    def check(name: str, module: Module, builder: Callable[[], Tensor]) -> GradientCheck:
        error = grad_check(builder, module.parameters(), max_coords=max_coords, seed=seed)
        logger.info("gradient check %s: max relative error %.3e", name, error)
        return GradientCheck(name=name, max_error=error)

    results = [
        check(
            "discriminator_loss",
            model.discriminator,
            lambda: discriminator_loss(model, (x_d, y_d), (x_c, y_c), (x_g, y_g), config.game.alpha),
        )
    ]
    for kind in ("entropy", "consistency", "mean_teacher"):
        hyper = GameHyperparams(
            alpha=config.game.alpha,
            alpha_p=Schedule(kind="constant", max_value=0.3),
            alpha_u=Schedule(kind="constant", max_value=1.0),
            regularizer=kind,
        )

        def build(hyper: GameHyperparams = hyper) -> Tensor:
            streams = RngStreams(seed)
            return classifier_loss(model, x_c, (x_d, y_d), (x_g, y_g), hyper, 0, streams).total

        results.append(check(f"classifier_loss[{kind}]", model.classifier, build))
    for variant in ("minimax", "nonsaturating"):
        results.append(
            check(
                f"generator_loss[{variant}]",
                model.generator,
                lambda variant=variant: generator_loss(model, y_g, z_g, config.game.alpha, variant),
            )
        )
    return results


def worst_error(results: list[GradientCheck]) -> float:
    return max((r.max_error for r in results), default=0.0)
