"""Sample-quality metrics for the conditional generator.

Fidelity asks a fully supervised judge whether class-conditioned samples carry
the right label; MMD² with a Gaussian kernel measures distribution match per
class; the true log-density is available because the datasets are synthetic.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from typing import Literal, Protocol

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.spatial.distance import cdist, pdist

from triplegan.autodiff.random import RngStream
from triplegan.core.errors import DataError
from triplegan.data.synthetic import Dataset, DatasetSpec
from triplegan.evaluation.metrics import Predictor
from triplegan.models.generator import sample_latent

logger = logging.getLogger(__name__)

MmdEstimator = Literal["biased", "unbiased"]


class Sampler(Protocol):
    n_classes: int
    latent_dim: int

    def generate(self, y: np.ndarray, z: np.ndarray) -> np.ndarray: ...


def class_samples(generator: Sampler, label: int, n: int, rng: RngStream) -> np.ndarray:
    y = np.full(n, label, dtype=np.int64)
    return generator.generate(y, sample_latent(n, generator.latent_dim, rng))


# ---------------------------------------------------------------------------
# Fidelity
# ---------------------------------------------------------------------------


class FidelityReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    per_class: list[float]
    overall: float


def conditional_fidelity(
    generator: Sampler, judge: Predictor, n_per_class: int, rng: RngStream
) -> FidelityReport:
    """Fraction of generated samples the judge assigns to their conditioning class."""
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be positive, got {n_per_class}")
    per_class = []
    for label in range(generator.n_classes):
        predicted = judge.predict(class_samples(generator, label, n_per_class, rng))
        per_class.append(float(np.mean(predicted == label)))
    return FidelityReport(per_class=per_class, overall=float(np.mean(per_class)))


# ---------------------------------------------------------------------------
# Maximum mean discrepancy
# ---------------------------------------------------------------------------


def gaussian_kernel(a: np.ndarray, b: np.ndarray, bandwidth: float) -> np.ndarray:
    return np.exp(-cdist(a, b, "sqeuclidean") / (2.0 * bandwidth * bandwidth))


def median_bandwidth(samples: np.ndarray) -> float:
    """Median pairwise Euclidean distance; 1.0 when every point coincides."""
    distances = pdist(np.asarray(samples, dtype=np.float64))
    median = float(np.median(distances)) if distances.size else 0.0
    return median if median > 0 else 1.0


def _off_diagonal_sum(k: np.ndarray) -> float:
    return float(k.sum() - np.trace(k))


def mmd2_unbiased(x: np.ndarray, y: np.ndarray, bandwidth: float) -> float:
    """Unbiased MMD² estimate with a Gaussian kernel of width ``bandwidth``.

    With equal sample sizes the cross term also skips i = j, so two identical
    sets give exactly zero.
    """
    if bandwidth <= 0:
        raise ValueError(f"kernel bandwidth must be positive, got {bandwidth}")
    m, n = len(x), len(y)
    if m < 2 or n < 2:
        raise DataError(f"MMD² needs at least two samples per set, got {m} and {n}")
    k_xx = _off_diagonal_sum(gaussian_kernel(x, x, bandwidth)) / (m * (m - 1))
    k_yy = _off_diagonal_sum(gaussian_kernel(y, y, bandwidth)) / (n * (n - 1))
    k_xy = gaussian_kernel(x, y, bandwidth)
    cross = _off_diagonal_sum(k_xy) / (m * (m - 1)) if m == n else float(k_xy.mean())
    return k_xx + k_yy - 2.0 * cross


def mmd2_biased(x: np.ndarray, y: np.ndarray, bandwidth: float) -> float:
    """Biased (V-statistic) MMD² estimate: the squared distance between mean embeddings.

    Never negative, and zero only when the two empirical distributions coincide.
    """
    if bandwidth <= 0:
        raise ValueError(f"kernel bandwidth must be positive, got {bandwidth}")
    if len(x) == 0 or len(y) == 0:
        raise DataError(f"MMD² needs non-empty sample sets, got {len(x)} and {len(y)}")
    k_xx = float(gaussian_kernel(x, x, bandwidth).mean())
    k_yy = float(gaussian_kernel(y, y, bandwidth).mean())
    k_xy = float(gaussian_kernel(x, y, bandwidth).mean())
    return max(k_xx + k_yy - 2.0 * k_xy, 0.0)


_ESTIMATORS: dict[str, Callable[[np.ndarray, np.ndarray, float], float]] = {
    "biased": mmd2_biased,
    "unbiased": mmd2_unbiased,
}


class MmdReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    per_class: list[float]
    bandwidth: float
    sample_size: int
    estimator: MmdEstimator = "biased"

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_class))


def _class_rows(dataset: Dataset, label: int) -> np.ndarray:
    rows = dataset.features[dataset.labels == label]
    if len(rows) < 4:
        raise DataError(f"class {label} needs four real samples to split, has {len(rows)}")
    return rows


def comparison_size(dataset: Dataset, n: int) -> int:
    """Per-set sample size shared by the generated and the real-vs-real comparisons.

    At most half of the smallest class, so two disjoint real subsets of that size exist.
    """
    if n < 2:
        raise ValueError(f"MMD² needs n >= 2, got {n}")
    smallest = min(len(_class_rows(dataset, label)) for label in range(dataset.n_classes))
    return min(n, smallest // 2)


def mmd2_per_class(
    generator: Sampler,
    dataset: Dataset,
    bandwidth: float | None,
    n: int,
    rng: RngStream,
    estimator: MmdEstimator = "biased",
) -> MmdReport:
    """MMD² between generated and real samples of each class, ``comparison_size`` of each.

    ``bandwidth=None`` uses the median heuristic over the whole real set.
    """
    h = median_bandwidth(dataset.features) if bandwidth is None else bandwidth
    size = comparison_size(dataset, n)
    score = _ESTIMATORS[estimator]
    values = []
    for label in range(dataset.n_classes):
        real = _class_rows(dataset, label)
        real = real[np.sort(rng.permutation(len(real))[:size])]
        values.append(score(class_samples(generator, label, size, rng), real, h))
    return MmdReport(per_class=values, bandwidth=h, sample_size=size, estimator=estimator)


def mmd2_real_reference(
    dataset: Dataset,
    bandwidth: float | None,
    rng: RngStream,
    n: int | None = None,
    estimator: MmdEstimator = "biased",
) -> MmdReport:
    """MMD² between two disjoint random real subsets of each class.

    With the same ``n`` and estimator as ``mmd2_per_class`` both reports share a
    sample size, so a generator that matches the data scores about the reference.
    ``n=None`` splits each class into halves.
    """
    h = median_bandwidth(dataset.features) if bandwidth is None else bandwidth
    size = comparison_size(dataset, len(dataset) if n is None else n)
    score = _ESTIMATORS[estimator]
    values = []
    for label in range(dataset.n_classes):
        real = _class_rows(dataset, label)
        order = rng.permutation(len(real))
        values.append(score(real[order[:size]], real[order[size : 2 * size]], h))
    return MmdReport(per_class=values, bandwidth=h, sample_size=size, estimator=estimator)


# ---------------------------------------------------------------------------
# Interpolation and true likelihood
# ---------------------------------------------------------------------------


def latent_interpolation(
    generator: Sampler, label: int, z0: np.ndarray, z1: np.ndarray, steps: int
) -> np.ndarray:
    """G(y, (1-t)·z0 + t·z1) for ``steps`` evenly spaced t ∈ [0, 1]."""
    if steps < 2:
        raise ValueError(f"interpolation needs at least 2 steps, got {steps}")
    t = np.linspace(0.0, 1.0, steps)[:, None]
    z = (1.0 - t) * np.asarray(z0)[None, :] + t * np.asarray(z1)[None, :]
    return generator.generate(np.full(steps, label, dtype=np.int64), z)


def interpolation_jump_bound(lipschitz: float, z0: np.ndarray, z1: np.ndarray, steps: int) -> float:
    """Largest possible distance between consecutive interpolation points."""
    return lipschitz * float(np.linalg.norm(np.asarray(z1) - np.asarray(z0))) / (steps - 1)


def mean_true_log_density(generator: Sampler, spec: DatasetSpec, n_per_class: int, rng: RngStream) -> float:
    """Average ground-truth log p(x | y) of class-conditioned samples."""
    total = 0.0
    for label in range(generator.n_classes):
        x = class_samples(generator, label, n_per_class, rng)
        total += float(spec.log_density(x, np.full(n_per_class, label)).sum())
    value = total / (generator.n_classes * n_per_class)
    if not np.isfinite(value):
        logger.warning("mean true log-density is not finite (%s)", value)
    return value
