"""The three players plus the EMA teacher, built from a run configuration."""

from __future__ import annotations

from collections.abc import Mapping

import numpy as np

from triplegan.autodiff.random import RngStream
from triplegan.autodiff.tensor import DType, Parameter
from triplegan.core.errors import CheckpointError
from triplegan.core.settings import Config
from triplegan.models.classifier import Classifier
from triplegan.models.discriminator import Discriminator
from triplegan.models.generator import Generator
from triplegan.models.teacher import Teacher


class TripleGanModel:
    def __init__(
        self,
        classifier: Classifier,
        generator: Generator,
        discriminator: Discriminator,
        teacher: Teacher,
    ) -> None:
        if classifier.n_classes != discriminator.n_classes or generator.n_classes != classifier.n_classes:
            raise ValueError(
                f"class counts disagree: C={classifier.n_classes}, G={generator.n_classes}, "
                f"D={discriminator.n_classes}"
            )
        self.classifier = classifier
        self.generator = generator
        self.discriminator = discriminator
        self.teacher = teacher

    @property
    def n_classes(self) -> int:
        return self.classifier.n_classes

    @property
    def dtype(self) -> DType:
        return self.classifier.dtype

    def modules(self) -> dict[str, Classifier | Generator | Discriminator]:
        return {
            "c": self.classifier,
            "g": self.generator,
            "d": self.discriminator,
            "t": self.teacher.classifier,
        }

    def parameters(self) -> dict[str, Parameter]:
        out: dict[str, Parameter] = {}
        for module in self.modules().values():
            out.update(module.parameters())
        return out

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: param.data for name, param in self.parameters().items()}

    def load_state_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        for module in self.modules().values():
            try:
                module.load_state_arrays(arrays)
            except KeyError as exc:
                raise CheckpointError(f"checkpoint is missing parameter {exc.args[0]}") from exc
            except ValueError as exc:
                raise CheckpointError(str(exc)) from exc


def build_model(config: Config, in_dim: int, n_classes: int, rng: RngStream) -> TripleGanModel:
    """Initialise C, G and D from ``rng`` (in that order) and seed the teacher with C."""
    model_cfg = config.model
    dtype = config.run.dtype
    classifier = Classifier(
        in_dim,
        n_classes,
        model_cfg.classifier_widths,
        rng,
        input_noise=model_cfg.input_noise,
        dropout_rate=model_cfg.dropout,
        dtype=dtype,
    )
    generator = Generator(n_classes, model_cfg.latent_dim, in_dim, model_cfg.generator_widths, rng, dtype=dtype)
    discriminator = Discriminator(
        in_dim, n_classes, model_cfg.trunk_widths, rng, variant=model_cfg.discriminator, dtype=dtype
    )
    return TripleGanModel(classifier, generator, discriminator, Teacher(classifier, config.game.ema_decay))
