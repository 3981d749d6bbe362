"""Central finite-difference check of reverse-mode gradients."""

from __future__ import annotations

import logging
from collections.abc import Callable, Mapping

import numpy as np

from triplegan.autodiff.random import RngStream
from triplegan.autodiff.tensor import Parameter, Tensor, grad
from triplegan.core.errors import ContractError

logger = logging.getLogger(__name__)


def _value(builder: Callable[[], Tensor]) -> float:
    return float(builder().data)


def grad_check(
    builder: Callable[[], Tensor],
    params: Mapping[str, Parameter],
    h: float = 1e-5,
    max_coords: int | None = None,
    seed: int = 0,
) -> float:
    """Largest ``|autodiff - FD| / max(1, |FD|)`` over the checked coordinates.

    ``builder`` must rebuild the scalar loss from the current parameter values
    and be deterministic. With ``max_coords`` set, at most that many coordinates
    per parameter are sampled.
    """
    for name, param in params.items():
        if param.data.dtype != np.float64:
            raise ContractError(f"grad_check needs f64 parameters; {name} is {param.dtype}")

    loss = builder()
    if float(loss.data) != _value(builder):
        raise ContractError("builder is not deterministic: two evaluations disagree")
    analytic = grad(loss, params.values())

    picker = RngStream(seed, "gradcheck")
    worst = 0.0
    for name, param in params.items():
        flat = param.data.flat
        coords = np.arange(param.size)
        if max_coords is not None and param.size > max_coords:
            coords = np.sort(picker.permutation(param.size)[:max_coords])
        auto = analytic[param].reshape(-1)
        for i in coords:
            original = flat[i]
            flat[i] = original + h
            plus = _value(builder)
            flat[i] = original - h
            minus = _value(builder)
            flat[i] = original
            fd = (plus - minus) / (2.0 * h)
            worst = max(worst, abs(auto[i] - fd) / max(1.0, abs(fd)))
        logger.debug("grad_check %s: %d coordinates, running max error %.3e", name, len(coords), worst)
    return worst
