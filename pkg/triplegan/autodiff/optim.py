"""Adam with in-place moment updates and per-step bias correction."""

from __future__ import annotations

from collections.abc import Mapping

import numpy as np

from triplegan.autodiff.tensor import Tensor
from triplegan.core.errors import DimensionError


class AdamState:
    """Moments keyed by parameter name, the step counter and the hyperparameters."""

    def __init__(
        self,
        lr: float = 3e-4,
        beta1: float = 0.5,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def __repr__(self) -> str:
        return f"AdamState(lr={self.lr}, beta1={self.beta1}, beta2={self.beta2}, t={self.t})"

    def init_moments(self, params: Mapping[str, Tensor]) -> None:
        for name, param in params.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(param.data)
                self.v[name] = np.zeros_like(param.data)

    def arrays(self) -> dict[str, np.ndarray]:
        """Moments flattened into ``m/<name>`` and ``v/<name>`` entries."""
        out = {f"m/{name}": value for name, value in self.m.items()}
        out.update({f"v/{name}": value for name, value in self.v.items()})
        return out

    def load_arrays(self, arrays: Mapping[str, np.ndarray], t: int) -> None:
        self.t = t
        for key, value in arrays.items():
            kind, _, name = key.partition("/")
            target = self.m if kind == "m" else self.v
            target[name] = np.array(value, copy=True)


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr_scale: float = 1.0,
) -> None:
    """One bias-corrected Adam update of ``params`` in place; missing gradients count as zero."""
    state.init_moments(params)
    state.t += 1

    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    lr = state.lr * lr_scale
    step_size = lr / bc1

    for name, param in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(param.data)
        elif g.shape != param.shape:
            raise DimensionError(f"gradient for {name} has shape {g.shape}, parameter has {param.shape}")

        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)

        if lr == 0.0:
            continue
        denom = np.sqrt(v * (1.0 / bc2)) + state.eps
        param.data -= (step_size * m / denom).astype(param.data.dtype, copy=False)
