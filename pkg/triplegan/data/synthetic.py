"""Synthetic labelled datasets with known class-conditional densities.

Three families are available:

* ``mixture``: class c is an isotropic Gaussian centred on a circle of radius
  ``radius`` at angle 2πc/K.
* ``moons``: the two interleaving half circles (K = 2).
* ``rings``: class c lies on a circle of radius (c + 1)/K.

Each ``Dataset`` carries the ``DatasetSpec`` that generated it, so evaluation
can score samples under the true p(x|y).
"""

from __future__ import annotations

import logging
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import logsumexp

from triplegan.autodiff.random import RngStream
from triplegan.core.errors import DataError, LabelIndexError

logger = logging.getLogger(__name__)

DatasetKind = Literal["mixture", "moons", "rings"]
SplitTag = Literal["train", "val", "test", "generated"]

MOONS_OFFSET = (0.5, 0.25)
MOONS_HALF_WIDTH = 1.5
QUADRATURE_POINTS = 512


class DatasetSpec(BaseModel):
    """Everything needed to regenerate a dataset or evaluate its true density."""

    model_config = ConfigDict(frozen=True)

    kind: DatasetKind
    n_classes: int = Field(ge=2)
    dim: int = Field(default=2, ge=2)
    radius: float = 0.75
    sigma: float = Field(ge=0)
    scale: float = 1.0

    def class_means(self) -> np.ndarray:
        """Mixture component centres after scaling, K×d."""
        if self.kind != "mixture":
            raise DataError(f"class means are only defined for mixtures, not {self.kind}")
        angles = 2.0 * np.pi * np.arange(self.n_classes) / self.n_classes
        means = np.zeros((self.n_classes, self.dim))
        means[:, 0] = self.radius * np.cos(angles)
        means[:, 1] = self.radius * np.sin(angles)
        return means * self.scale

    def curve(self, label: int, t: np.ndarray) -> np.ndarray:
        """Noise-free points of class ``label`` at curve parameters ``t`` ∈ [0, 1), after scaling."""
        if self.kind == "mixture":
            return np.repeat(self.class_means()[label][None, :], len(t), axis=0)
        out = np.zeros((len(t), self.dim))
        if self.kind == "moons":
            angle = np.pi * t
            if label == 0:
                out[:, 0], out[:, 1] = np.cos(angle), np.sin(angle)
            else:
                out[:, 0], out[:, 1] = 1.0 - np.cos(angle), 0.5 - np.sin(angle)
            out[:, 0] -= MOONS_OFFSET[0]
            out[:, 1] -= MOONS_OFFSET[1]
        else:
            angle = 2.0 * np.pi * t
            r = (label + 1) / self.n_classes
            out[:, 0], out[:, 1] = r * np.cos(angle), r * np.sin(angle)
        return out * self.scale

    def log_density(self, x: np.ndarray, labels: np.ndarray) -> np.ndarray:
        """True log p(x | y) per row."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        labels = np.asarray(labels)
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise LabelIndexError(f"class ids must lie in [0, {self.n_classes})")
        if self.sigma == 0:
            raise DataError("true density is singular when sigma = 0")
        s = self.sigma * self.scale
        norm = -0.5 * self.dim * np.log(2.0 * np.pi * s * s)
        out = np.empty(len(x))
        if self.kind == "mixture":
            diff = x - self.class_means()[labels]
            return norm - 0.5 * (diff * diff).sum(axis=1) / (s * s)
        grid = (np.arange(QUADRATURE_POINTS) + 0.5) / QUADRATURE_POINTS
        for c in np.unique(labels):
            rows = labels == c
            centres = self.curve(int(c), grid)
            sq = ((x[rows, None, :] - centres[None, :, :]) ** 2).sum(axis=2)
            out[rows] = logsumexp(norm - 0.5 * sq / (s * s), axis=1) - np.log(QUADRATURE_POINTS)
        return out


class Dataset(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    features: np.ndarray
    labels: np.ndarray
    split: SplitTag = "train"
    spec: DatasetSpec

    @property
    def n_classes(self) -> int:
        return self.spec.n_classes

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def subset(self, indices: np.ndarray) -> Dataset:
        return Dataset(
            features=self.features[indices], labels=self.labels[indices], split=self.split, spec=self.spec
        )

    def to_csv(self) -> str:
        """``x0..x{d-1},label`` rows with a header line."""
        header = ",".join([f"x{i}" for i in range(self.dim)] + ["label"])
        rows = [
            ",".join([*(repr(float(v)) for v in x), str(int(y))])
            for x, y in zip(self.features, self.labels, strict=True)
        ]
        return "\n".join([header, *rows]) + "\n"


def _sample(spec: DatasetSpec, n_per_class: int, seed: int, split: SplitTag) -> Dataset:
    if n_per_class < 1:
        raise DataError(f"n_per_class must be positive, got {n_per_class}")
    rng = RngStream(seed, f"{spec.kind}/{split}")
    labels = np.repeat(np.arange(spec.n_classes), n_per_class)
    t = rng.uniform(len(labels))
    noise = rng.normal((len(labels), spec.dim))
    clean = np.empty((len(labels), spec.dim))
    for c in range(spec.n_classes):
        rows = labels == c
        clean[rows] = spec.curve(c, t[rows])
    features = clean + spec.sigma * spec.scale * noise
    logger.debug("generated %s/%s: %d rows, K=%d", spec.kind, split, len(labels), spec.n_classes)
    return Dataset(features=features, labels=labels, split=split, spec=spec)


def make_mixture(
    n_classes: int,
    n_per_class: int,
    radius: float = 0.75,
    sigma: float = 0.08,
    dim: int = 2,
    seed: int = 0,
    split: SplitTag = "train",
) -> Dataset:
    if n_classes < 2:
        raise DataError(f"a mixture needs K >= 2 classes, got {n_classes}")
    scale = 1.0 / max(1.0, radius + 3.0 * sigma)
    spec = DatasetSpec(kind="mixture", n_classes=n_classes, dim=dim, radius=radius, sigma=sigma, scale=scale)
    return _sample(spec, n_per_class, seed, split)


def make_moons(
    n_per_class: int, sigma: float = 0.08, seed: int = 0, dim: int = 2, split: SplitTag = "train"
) -> Dataset:
    scale = 1.0 / (MOONS_HALF_WIDTH + 3.0 * sigma)
    spec = DatasetSpec(kind="moons", n_classes=2, dim=dim, sigma=sigma, scale=scale)
    return _sample(spec, n_per_class, seed, split)


def make_rings(
    n_classes: int, n_per_class: int, sigma: float = 0.08, seed: int = 0, dim: int = 2, split: SplitTag = "train"
) -> Dataset:
    if n_classes < 2:
        raise DataError(f"rings need K >= 2 classes, got {n_classes}")
    spec = DatasetSpec(kind="rings", n_classes=n_classes, dim=dim, sigma=sigma)
    return _sample(spec, n_per_class, seed, split)
