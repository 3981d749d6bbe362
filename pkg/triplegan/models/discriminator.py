"""Pair discriminator D(x, y) = sigmoid(logit).

Two variants:

* ``projection``: logit = ψ(φ(x)) + <V[y], φ(x)>. Scoring every label only needs
  one trunk pass per x, so ``all_labels`` is the primary computation and
  ``forward`` selects from it.
* ``concat``: logit = ψ(φ([x, onehot(y)])). Scoring every label needs K trunk
  passes.
"""

from __future__ import annotations

from collections.abc import Sequence
from typing import Literal

import numpy as np

from triplegan.autodiff.functional import affine, concat_cols, one_hot, pick
from triplegan.autodiff.random import RngStream
from triplegan.autodiff.tensor import DType, Tensor, matmul, reshape
from triplegan.core.errors import NumericError
from triplegan.models.module import MLP, Module

Variant = Literal["projection", "concat"]


class Discriminator(Module):
    def __init__(
        self,
        in_dim: int,
        n_classes: int,
        trunk_widths: Sequence[int],
        rng: RngStream,
        variant: Variant = "projection",
        dtype: DType = "f64",
        prefix: str = "d",
    ) -> None:
        super().__init__(prefix, dtype)
        self.in_dim = in_dim
        self.n_classes = n_classes
        self.variant: Variant = variant
        self.feature_dim = trunk_widths[-1]
        trunk_in = in_dim if variant == "projection" else in_dim + n_classes
        self.trunk = MLP(self, "phi", [trunk_in, *trunk_widths], "lrelu", rng, final_activation=True)
        self.add_parameter("psiW", rng.normal((self.feature_dim, 1)) * np.sqrt(1.0 / self.feature_dim))
        self.add_parameter("psib", np.zeros(1))
        if variant == "projection":
            self.add_parameter("V", rng.normal((n_classes, self.feature_dim)) * np.sqrt(1.0 / self.feature_dim))
        self.trunk_calls = 0

    def _as_input(self, x: Tensor | np.ndarray) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x, dtype=self.dtype)
        if not np.all(np.isfinite(x.data)):
            raise NumericError("discriminator input contains non-finite values")
        return x

    def features(self, x: Tensor) -> Tensor:
        """Trunk φ; every call counts one evaluation per row."""
        self.trunk_calls += x.shape[0]
        return self.trunk(self, x)

    def _head(self, phi: Tensor) -> Tensor:
        return affine(phi, self.p("psiW"), self.p("psib"))

    def _concat_scores(self, x: Tensor, y: np.ndarray) -> Tensor:
        phi = self.features(concat_cols([x, one_hot(y, self.n_classes, self.dtype)]))
        return self._head(phi)

    def all_labels(self, x: Tensor | np.ndarray) -> Tensor:
        """Logits for every (x, y) with y in [0, K), n×K."""
        x = self._as_input(x)
        n = x.shape[0]
        if self.variant == "projection":
            phi = self.features(x)
            return matmul(phi, self.p("V").T) + self._head(phi)
        columns = [self._concat_scores(x, np.full(n, k)) for k in range(self.n_classes)]
        return concat_cols(columns)

    def forward(self, x: Tensor | np.ndarray, y: np.ndarray) -> Tensor:
        """One logit per pair (x_i, y_i)."""
        x = self._as_input(x)
        if self.variant == "projection":
            return pick(self.all_labels(x), np.asarray(y))
        return reshape(self._concat_scores(x, np.asarray(y)), (x.shape[0],))

    __call__ = forward
