"""Conditional generator G: x = G(y, z) with one-hot label conditioning and a tanh head."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from triplegan.autodiff.functional import concat_cols, one_hot
from triplegan.autodiff.random import RngStream
from triplegan.autodiff.tensor import NUMPY_DTYPES, DType, Tensor, tanh
from triplegan.core.errors import DimensionError, NumericError
from triplegan.models.module import MLP, Module


def _largest_below_one(dtype: DType) -> np.floating:
    kind = NUMPY_DTYPES[dtype]
    return np.nextafter(kind(1.0), kind(0.0))


def sample_latent(n: int, latent_dim: int, rng: RngStream) -> np.ndarray:
    """i.i.d. standard normal latent codes, n×L."""
    if n <= 0 or latent_dim <= 0:
        raise ValueError(f"sample_latent needs positive sizes, got n={n}, L={latent_dim}")
    return rng.normal((n, latent_dim))


class Generator(Module):
    def __init__(
        self,
        n_classes: int,
        latent_dim: int,
        out_dim: int,
        widths: Sequence[int],
        rng: RngStream,
        dtype: DType = "f64",
        prefix: str = "g",
    ) -> None:
        super().__init__(prefix, dtype)
        self.n_classes = n_classes
        self.latent_dim = latent_dim
        self.out_dim = out_dim
        self.net = MLP(self, "", [n_classes + latent_dim, *widths, out_dim], "relu", rng)

    def forward(self, y: np.ndarray, z: Tensor | np.ndarray) -> Tensor:
        z = z if isinstance(z, Tensor) else Tensor(z, dtype=self.dtype)
        y = np.asarray(y)
        if z.ndim != 2 or z.shape != (len(y), self.latent_dim):
            raise DimensionError(f"expected z of shape ({len(y)}, {self.latent_dim}), got {z.shape}")
        if not np.all(np.isfinite(z.data)):
            raise NumericError("latent codes contain non-finite values")
        h = concat_cols([one_hot(y, self.n_classes, self.dtype), z])
        # tanh rounds to exactly ±1 once saturated; outputs stay strictly inside (-1, 1)
        return tanh(self.net(self, h)) * _largest_below_one(self.dtype)

    __call__ = forward

    def generate(self, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Detached samples as a plain array."""
        return self.forward(y, z).data

    def lipschitz_bound(self) -> float:
        """Upper bound on the Lipschitz constant of z ↦ G(y, z) for a fixed y.

        ReLU and tanh are 1-Lipschitz, so the product of the layer spectral norms
        (first layer restricted to its latent rows) bounds the whole map.
        """
        weights = self.net.weights(self)
        bound = float(np.linalg.norm(weights[0][self.n_classes :], 2))
        for w in weights[1:]:
            bound *= float(np.linalg.norm(w, 2))
        return bound
