"""Train/val/test generation and the labelled/unlabelled split of the training set."""

from __future__ import annotations

import logging
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict

from triplegan.autodiff.random import RngStream
from triplegan.core.errors import DataError
from triplegan.core.settings import DataSection
from triplegan.data.synthetic import Dataset, SplitTag, make_mixture, make_moons, make_rings

logger = logging.getLogger(__name__)

Regime = Literal["semi", "low_data"]


class SemiSplit(BaseModel):
    """Indices into the training set: a class-balanced labelled subset and the rest."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    labeled: np.ndarray
    unlabeled: np.ndarray
    seed: int
    regime: Regime = "semi"


def split_semi(dataset: Dataset, labels_per_class: int, seed: int, regime: Regime = "semi") -> SemiSplit:
    """Keep ``labels_per_class`` labels per class; the remainder becomes the unlabelled pool.

    In the ``low_data`` regime the unlabelled pool is empty.
    """
    counts = dataset.class_counts()
    if labels_per_class < 1:
        raise DataError(f"labels_per_class must be positive, got {labels_per_class}")
    if labels_per_class > counts.min():
        raise DataError(
            f"labels_per_class={labels_per_class} exceeds the smallest class ({int(counts.min())} examples)"
        )
    rng = RngStream(seed, "split")
    labeled: list[np.ndarray] = []
    unlabeled: list[np.ndarray] = []
    for c in range(dataset.n_classes):
        members = np.flatnonzero(dataset.labels == c)
        shuffled = members[rng.permutation(len(members))]
        labeled.append(shuffled[:labels_per_class])
        unlabeled.append(shuffled[labels_per_class:])
    labeled_idx = np.sort(np.concatenate(labeled))
    unlabeled_idx = np.sort(np.concatenate(unlabeled)) if regime == "semi" else np.empty(0, dtype=np.int64)
    return SemiSplit(labeled=labeled_idx, unlabeled=unlabeled_idx, seed=seed, regime=regime)


def make_dataset(cfg: DataSection, n_per_class: int, split: SplitTag) -> Dataset:
    if cfg.kind == "mixture":
        return make_mixture(cfg.n_classes, n_per_class, cfg.radius, cfg.sigma, cfg.dim, cfg.seed, split)
    if cfg.kind == "moons":
        return make_moons(n_per_class, cfg.sigma, cfg.seed, cfg.dim, split)
    return make_rings(cfg.n_classes, n_per_class, cfg.sigma, cfg.seed, cfg.dim, split)


class Benchmark(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    train: Dataset
    val: Dataset
    test: Dataset
    split: SemiSplit

    @property
    def labeled(self) -> Dataset:
        return self.train.subset(self.split.labeled)

    @property
    def unlabeled(self) -> Dataset:
        return self.train.subset(self.split.unlabeled)


def make_benchmark(cfg: DataSection) -> Benchmark:
    """Train/val/test sets from independent streams of ``cfg.seed`` plus the semi-supervised split."""
    train = make_dataset(cfg, cfg.n_per_class, "train")
    val = make_dataset(cfg, cfg.n_val_per_class, "val")
    test = make_dataset(cfg, cfg.n_test_per_class, "test")
    split = split_semi(train, cfg.labels_per_class, cfg.seed, cfg.regime)
    logger.info(
        "benchmark %s K=%d: %d labelled, %d unlabelled, %d val, %d test",
        cfg.kind,
        cfg.n_classes,
        len(split.labeled),
        len(split.unlabeled),
        len(val),
        len(test),
    )
    return Benchmark(train=train, val=val, test=test, split=split)
