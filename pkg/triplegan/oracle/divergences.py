"""KL and Jensen-Shannon divergences between probability tables, in nats."""

from __future__ import annotations

import numpy as np
from scipy.special import rel_entr

from triplegan.core.errors import DimensionError
from triplegan.oracle.tabular import JointLike, as_table


def _pair(q1: JointLike, q2: JointLike) -> tuple[np.ndarray, np.ndarray]:
    a, b = as_table(q1), as_table(q2)
    if a.shape != b.shape:
        raise DimensionError(f"cannot compare tables of shapes {a.shape} and {b.shape}")
    return a, b


def kl(q1: JointLike, q2: JointLike) -> float:
    """Σ q1·ln(q1/q2) with 0·ln 0 = 0; +inf when q1 has mass where q2 has none."""
    a, b = _pair(q1, q2)
    return float(max(rel_entr(a, b).sum(), 0.0))


def jsd(q1: JointLike, q2: JointLike) -> float:
    """Symmetric, finite, and at most ln 2."""
    a, b = _pair(q1, q2)
    m = 0.5 * (a + b)
    value = 0.5 * rel_entr(a, m).sum() + 0.5 * rel_entr(b, m).sum()
    return float(min(max(value, 0.0), np.log(2.0)))
