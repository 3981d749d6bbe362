"""Classifier C: an lReLU MLP whose softmax is p_c(y|x)."""

from __future__ import annotations

from collections.abc import Sequence
from typing import Literal

import numpy as np

from triplegan.autodiff.functional import dropout, gaussian_noise, softmax_rows
from triplegan.autodiff.random import RngStream
from triplegan.autodiff.tensor import DType, Tensor
from triplegan.core.errors import ContractError, NumericError
from triplegan.models.module import MLP, Module

Mode = Literal["train", "eval"]


class Classifier(Module):
    def __init__(
        self,
        in_dim: int,
        n_classes: int,
        widths: Sequence[int],
        rng: RngStream,
        input_noise: float = 0.05,
        dropout_rate: float = 0.1,
        dtype: DType = "f64",
        prefix: str = "c",
    ) -> None:
        super().__init__(prefix, dtype)
        self.in_dim = in_dim
        self.n_classes = n_classes
        self.input_noise = input_noise
        self.dropout_rate = dropout_rate
        self.net = MLP(self, "", [in_dim, *widths, n_classes], "lrelu", rng)

    def forward(
        self,
        x: Tensor | np.ndarray,
        mode: Mode = "eval",
        noise: RngStream | None = None,
        drop: RngStream | None = None,
    ) -> Tensor:
        """Logits n×K. Train mode adds input noise and hidden dropout drawn from ``noise``/``drop``."""
        x = x if isinstance(x, Tensor) else Tensor(x, dtype=self.dtype)
        if not np.all(np.isfinite(x.data)):
            raise NumericError("classifier input contains non-finite values")
        train = mode == "train"
        if train and ((self.input_noise > 0 and noise is None) or (self.dropout_rate > 0 and drop is None)):
            raise ContractError("train-mode classifier pass needs noise and dropout streams")
        if train and self.input_noise > 0:
            assert noise is not None
            x = gaussian_noise(x, self.input_noise, noise, train=True)
        if not (train and self.dropout_rate > 0):
            return self.net(self, x)
        assert drop is not None
        stream, rate = drop, self.dropout_rate

        def hidden_dropout(h: Tensor) -> Tensor:
            return dropout(h, rate, stream, train=True)

        return self.net(self, x, hidden_dropout)

    __call__ = forward

    def probabilities(self, x: Tensor | np.ndarray) -> np.ndarray:
        """Eval-mode p_c(y|x) as a plain array."""
        return softmax_rows(self.forward(x, "eval")).data

    def predict(self, x: Tensor | np.ndarray) -> np.ndarray:
        return np.argmax(self.forward(x, "eval").data, axis=1)
