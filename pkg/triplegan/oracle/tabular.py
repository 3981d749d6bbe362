"""Finite-space joints and the tabular three-player game.

Every distribution is an explicit |X|×|Y| probability table. Conditionals are
parameterised by logits whose rows go through a softmax, so iterates stay
strictly inside the simplex.
"""

from __future__ import annotations

from typing import Self

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.special import expit, logit, softmax

from triplegan.autodiff.random import RngStream

SUM_TOLERANCE = 1e-12


class TabularJoint(BaseModel):
    """A nonnegative |X|×|Y| table summing to one."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    table: np.ndarray

    @field_validator("table", mode="before")
    @classmethod
    def _as_float_table(cls, value: object) -> np.ndarray:
        table = np.array(value, dtype=np.float64)
        if table.ndim != 2 or 0 in table.shape:
            raise ValueError(f"a joint table must be a non-empty matrix, got shape {table.shape}")
        if not np.all(np.isfinite(table)) or np.any(table < 0):
            raise ValueError("joint table entries must be finite and nonnegative")
        total = table.sum()
        if abs(total - 1.0) > SUM_TOLERANCE:
            raise ValueError(f"joint table sums to {total!r}, not 1")
        return table

    @classmethod
    def of(cls, table: np.ndarray | TabularJoint) -> TabularJoint:
        return table if isinstance(table, TabularJoint) else cls(table=table)

    @classmethod
    def normalized(cls, weights: np.ndarray) -> TabularJoint:
        """Rescale nonnegative ``weights`` so they sum to one (up to one final rounding fix)."""
        table = np.asarray(weights, dtype=np.float64)
        table = table / table.sum()
        table.flat[np.argmax(table)] += 1.0 - table.sum()
        return cls(table=table)

    @property
    def shape(self) -> tuple[int, int]:
        rows, cols = self.table.shape
        return rows, cols


JointLike = TabularJoint | np.ndarray


def as_table(q: JointLike) -> np.ndarray:
    return TabularJoint.of(q).table


def marginals(q: JointLike) -> tuple[np.ndarray, np.ndarray]:
    """(p(x), p(y)): row sums and column sums of the joint."""
    table = as_table(q)
    return table.sum(axis=1), table.sum(axis=0)


def random_joint(n_x: int, n_y: int, rng: RngStream, scale: float = 1.0) -> TabularJoint:
    """A strictly positive joint from softmax of Gaussian logits over all cells."""
    return TabularJoint.normalized(softmax(scale * rng.normal((n_x, n_y))))


class TabularGame(BaseModel):
    """The three players on a finite X×Y grid.

    ``c_logits`` is |X|×|Y| (rows give p_c(y|x)), ``g_logits`` is |Y|×|X|
    (rows give p_g(x|y)), and ``d_logits`` is |X|×|Y| with D = sigmoid(d_logits).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    p: TabularJoint
    c_logits: np.ndarray
    g_logits: np.ndarray
    d_logits: np.ndarray
    alpha: float

    @model_validator(mode="after")
    def _check_shapes(self) -> Self:
        n_x, n_y = self.p.shape
        expected = {"c_logits": (n_x, n_y), "g_logits": (n_y, n_x), "d_logits": (n_x, n_y)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"α ∈ (0,1) required, got {self.alpha}")
        return self

    @property
    def p_x(self) -> np.ndarray:
        return self.p.table.sum(axis=1)

    @property
    def p_y(self) -> np.ndarray:
        return self.p.table.sum(axis=0)

    @property
    def c_conditional(self) -> np.ndarray:
        """p_c(y|x), |X|×|Y|."""
        return softmax(self.c_logits, axis=1)

    @property
    def g_conditional(self) -> np.ndarray:
        """p_g(x|y), |Y|×|X|."""
        return softmax(self.g_logits, axis=1)

    @property
    def p_c(self) -> np.ndarray:
        return self.p_x[:, None] * self.c_conditional

    @property
    def p_g(self) -> np.ndarray:
        return (self.p_y[:, None] * self.g_conditional).T

    @property
    def p_alpha(self) -> np.ndarray:
        return (1.0 - self.alpha) * self.p_g + self.alpha * self.p_c

    @property
    def discriminator(self) -> np.ndarray:
        return expit(self.d_logits)

    def with_logits(
        self,
        c_logits: np.ndarray | None = None,
        g_logits: np.ndarray | None = None,
        d_logits: np.ndarray | None = None,
    ) -> TabularGame:
        return TabularGame(
            p=self.p,
            c_logits=self.c_logits if c_logits is None else c_logits,
            g_logits=self.g_logits if g_logits is None else g_logits,
            d_logits=self.d_logits if d_logits is None else d_logits,
            alpha=self.alpha,
        )


def conditional_logits(p: JointLike) -> tuple[np.ndarray, np.ndarray]:
    """Logits that reproduce p(y|x) and p(x|y) exactly; empty rows map to uniform."""
    table = as_table(p)
    p_x, p_y = marginals(table)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(p_x[:, None] > 0, np.log(table / p_x[:, None]), 0.0)
        g = np.where(p_y[:, None] > 0, np.log(table.T / p_y[:, None]), 0.0)
    return c, g


def random_game(
    n_x: int, n_y: int, alpha: float, rng: RngStream, p: JointLike | None = None
) -> TabularGame:
    """A game with Gaussian logits for all three players over a random (or given) target."""
    target = random_joint(n_x, n_y, rng) if p is None else TabularJoint.of(p)
    n_x, n_y = target.shape
    return TabularGame(
        p=target,
        c_logits=rng.normal((n_x, n_y)),
        g_logits=rng.normal((n_y, n_x)),
        d_logits=rng.normal((n_x, n_y)),
        alpha=alpha,
    )


def constructed_equilibrium_game(p: JointLike, alpha: float, rng: RngStream) -> TabularGame:
    """A game whose mixture p_α equals p exactly while p_c and p_g differ from p.

    p_c = p + (1-α)Δ and p_g = p - αΔ for a random Δ with zero row and column
    sums, scaled so both tables stay nonnegative. The discriminator sits at 1/2.
    """
    target = TabularJoint.of(p)
    table = target.table
    raw = rng.normal(table.shape)
    delta = raw - raw.mean(axis=1, keepdims=True) - raw.mean(axis=0, keepdims=True) + raw.mean()
    peak = np.abs(delta).max()
    if peak > 0:
        delta *= 0.5 * table.min() / (peak * max(alpha, 1.0 - alpha))
    p_c = table + (1.0 - alpha) * delta
    p_g = table - alpha * delta
    c_logits, _ = conditional_logits(TabularJoint.normalized(np.clip(p_c, 0.0, None)))
    _, g_logits = conditional_logits(TabularJoint.normalized(np.clip(p_g, 0.0, None)))
    return TabularGame(
        p=target,
        c_logits=c_logits,
        g_logits=g_logits,
        d_logits=np.zeros(table.shape),
        alpha=alpha,
    )


def discriminator_logits(d: np.ndarray) -> np.ndarray:
    return logit(np.asarray(d, dtype=np.float64))
