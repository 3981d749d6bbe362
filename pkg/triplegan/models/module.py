"""Parameter containers shared by the three players."""

from __future__ import annotations

import copy
from collections.abc import Callable, Mapping, Sequence
from typing import Self

import numpy as np

from triplegan.autodiff.functional import ActivationKind, activation, affine
from triplegan.autodiff.random import RngStream
from triplegan.autodiff.tensor import DType, NUMPY_DTYPES, Parameter, Tensor
from triplegan.core.errors import DimensionError


class Module:
    """Owns named parameters; ``frozen()`` yields a view that reads them as constants."""

    def __init__(self, prefix: str, dtype: DType = "f64") -> None:
        self.prefix = prefix
        self.dtype: DType = dtype
        self._params: dict[str, Parameter] = {}
        self._frozen = False

    def add_parameter(self, name: str, value: np.ndarray) -> Parameter:
        full = f"{self.prefix}.{name}"
        param = Parameter(np.asarray(value, dtype=NUMPY_DTYPES[self.dtype]), full)
        self._params[name] = param
        return param

    def p(self, name: str) -> Tensor:
        param = self._params[name]
        return Tensor(param.data) if self._frozen else param

    def parameters(self) -> dict[str, Parameter]:
        """Trainable leaves keyed by their full name (``c.W0``, ``d.V``...)."""
        return {param.name or key: param for key, param in self._params.items()}

    def local_parameters(self) -> dict[str, Parameter]:
        """Parameters keyed by their name inside this module (no prefix)."""
        return dict(self._params)

    @property
    def is_frozen(self) -> bool:
        return self._frozen

    def frozen(self) -> Self:
        view = copy.copy(self)
        view._frozen = True
        return view

    def zero_(self) -> Self:
        for param in self._params.values():
            param.data[...] = 0.0
        return self

    def copy(self, prefix: str | None = None) -> Self:
        clone = copy.copy(self)
        clone.prefix = prefix or self.prefix
        clone._frozen = False
        clone._params = {}
        for name, param in self._params.items():
            clone.add_parameter(name, param.data.copy())
        return clone

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: param.data for name, param in self.parameters().items()}

    def load_state_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        for name, param in self.parameters().items():
            if name not in arrays:
                raise KeyError(name)
            value = np.asarray(arrays[name])
            if value.shape != param.shape:
                raise DimensionError(f"{name}: stored shape {value.shape} != parameter shape {param.shape}")
            param.data[...] = value


class MLP:
    """Affine layers with a shared hidden activation; the last layer is linear."""

    def __init__(
        self,
        owner: Module,
        tag: str,
        sizes: Sequence[int],
        hidden: ActivationKind,
        rng: RngStream,
        final_activation: bool = False,
    ) -> None:
        self.tag = tag
        self.sizes = list(sizes)
        self.hidden = hidden
        self.final_activation = final_activation
        gain = 2.0 if hidden in ("relu", "lrelu") else 1.0
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:], strict=True)):
            owner.add_parameter(f"{tag}W{i}", rng.normal((fan_in, fan_out)) * np.sqrt(gain / fan_in))
            owner.add_parameter(f"{tag}b{i}", np.zeros(fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def weights(self, module: Module) -> list[np.ndarray]:
        return [module.p(f"{self.tag}W{i}").data for i in range(self.n_layers)]

    def __call__(
        self, module: Module, x: Tensor, between: Callable[[Tensor], Tensor] | None = None
    ) -> Tensor:
        """Apply the layers reading parameters from ``module`` (which may be a frozen view)."""
        if x.ndim != 2 or x.shape[1] != self.sizes[0]:
            raise DimensionError(f"{module.prefix}: expected input width {self.sizes[0]}, got shape {x.shape}")
        h = x
        for i in range(self.n_layers):
            h = affine(h, module.p(f"{self.tag}W{i}"), module.p(f"{self.tag}b{i}"))
            last = i == self.n_layers - 1
            if not last or self.final_activation:
                h = activation(self.hidden, h)
                if between is not None and not last:
                    h = between(h)
        return h
