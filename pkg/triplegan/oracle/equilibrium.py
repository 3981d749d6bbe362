"""Exact values, optimal discriminators and equilibrium search on tabular games.

The classifier and generator are updated by row-preconditioned gradient
descent: each conditional's logit gradient is divided by the marginal weight
of its row (p(x) for the classifier, p(y) for the generator), which keeps a
fixed step size stable whatever the target looks like. The discriminator is
set to its closed-form optimum every round.
"""

from __future__ import annotations

import logging
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.special import expit, xlogy

from triplegan.autodiff.functional import log_softmax_rows
from triplegan.autodiff.random import RngStream
from triplegan.autodiff.tensor import Parameter, Tensor, grad
from triplegan.oracle.divergences import jsd, kl
from triplegan.oracle.tabular import (
    JointLike,
    TabularGame,
    TabularJoint,
    as_table,
    conditional_logits,
    discriminator_logits,
)

logger = logging.getLogger(__name__)

LN4 = float(np.log(4.0))
DIVERGENCE_PATIENCE = 50

Objective = Literal["full", "adversarial", "gan"]
Init = Literal["random", "target"]


# ---------------------------------------------------------------------------
# Discriminator and game values
# ---------------------------------------------------------------------------


def mixture(p_c: JointLike, p_g: JointLike, alpha: float) -> np.ndarray:
    return (1.0 - alpha) * as_table(p_g) + alpha * as_table(p_c)


def _optimal_d(p: np.ndarray, p_alpha: np.ndarray) -> np.ndarray:
    total = p + p_alpha
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(total > 0, p / total, 0.5)


def optimal_discriminator(p: JointLike, p_c: JointLike, p_g: JointLike, alpha: float) -> np.ndarray:
    """p/(p + p_α) cellwise; 1/2 where both are zero."""
    return _optimal_d(as_table(p), mixture(p_c, p_g, alpha))


def exact_u_table(p: np.ndarray, p_alpha: np.ndarray, d: np.ndarray) -> float:
    """Σ p·ln D + p_α·ln(1-D); -inf when a weighted cell has D at 0 or 1."""
    with np.errstate(divide="ignore"):
        value = float(np.sum(xlogy(p, d)) + np.sum(xlogy(p_alpha, 1.0 - d)))
    if np.isneginf(value):
        logger.warning("exact value is -inf: D reaches 0 or 1 on a cell with positive weight")
    return value


def exact_u(game: TabularGame) -> float:
    """The adversarial value U(C, G, D) of the game's current tables."""
    return exact_u_table(game.p.table, game.p_alpha, game.discriminator)


class ExactValue(BaseModel):
    model_config = ConfigDict(frozen=True)

    plug_in: float
    jsd_form: float

    @property
    def difference(self) -> float:
        return abs(self.plug_in - self.jsd_form)


def exact_v(p: JointLike, p_c: JointLike, p_g: JointLike, alpha: float) -> ExactValue:
    """V(C, G) two ways: U at the optimal D, and -ln 4 + 2·JSD(p‖p_α)."""
    table = as_table(p)
    p_alpha = mixture(p_c, p_g, alpha)
    plug_in = exact_u_table(table, p_alpha, _optimal_d(table, p_alpha))
    return ExactValue(plug_in=plug_in, jsd_form=-LN4 + 2.0 * jsd(table, p_alpha))


def numerical_optimal_discriminator(
    p: JointLike, p_alpha: JointLike, iters: int = 500, step: float = 4.0
) -> np.ndarray:
    """Maximise exact U over discriminator logits by preconditioned gradient ascent.

    The gradient p - (p + p_α)·D is divided by p + p_α, so each cell moves by
    ``step``·(D* - D). Cells where both weights vanish keep D = 1/2.
    """
    table, mix = as_table(p), as_table(p_alpha)
    weight = table + mix
    active = weight > 0
    logits = np.zeros_like(table)
    for _ in range(iters):
        d = expit(logits)
        ascent = np.zeros_like(table)
        ascent[active] = (table[active] - weight[active] * d[active]) / weight[active]
        logits += step * ascent
    return expit(logits)


def random_perturbation_check(
    p: JointLike, p_alpha: JointLike, rng: RngStream, n: int = 100, scale: float = 1.0
) -> float:
    """Smallest U(D*) - U(D') over ``n`` Gaussian perturbations D' of D* in logit space.

    A nonnegative result means no perturbation beat the closed-form discriminator.
    """
    table, mix = as_table(p), as_table(p_alpha)
    d_star = _optimal_d(table, mix)
    best = exact_u_table(table, mix, d_star)
    base_logits = discriminator_logits(d_star)
    margin = np.inf
    for _ in range(n):
        perturbed = expit(base_logits + scale * rng.normal(table.shape))
        margin = min(margin, best - exact_u_table(table, mix, perturbed))
    return float(margin)


# ---------------------------------------------------------------------------
# Gradients with respect to the conditional logits
# ---------------------------------------------------------------------------


def _softmax(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _softmax_back(s: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    return s * (upstream - (s * upstream).sum(axis=1, keepdims=True))


def _per_row(grad_rows: np.ndarray, weights: np.ndarray) -> np.ndarray:
    out = np.zeros_like(grad_rows)
    positive = weights > 0
    out[positive] = grad_rows[positive] / weights[positive, None]
    return out


def pair_kl_gradients(game: TabularGame) -> tuple[float, np.ndarray, np.ndarray]:
    """KL(p_c‖p_g) and its gradients with respect to ``c_logits`` and ``g_logits``."""
    p_c, p_g = game.p_c, game.p_g
    value = kl(TabularJoint.normalized(p_c), TabularJoint.normalized(p_g))
    with np.errstate(divide="ignore", invalid="ignore"):
        d_pc = np.where(p_c > 0, np.log(p_c) - np.log(p_g) + 1.0, 0.0)
        d_pg = np.where(p_c > 0, -p_c / p_g, 0.0)
    grad_c = game.p_x[:, None] * _softmax_back(game.c_conditional, d_pc)
    grad_g = game.p_y[:, None] * _softmax_back(game.g_conditional, d_pg.T)
    return value, grad_c, grad_g


def pseudo_discriminative_loss(game: TabularGame) -> float:
    """R_P = Σ p_g(x,y)·(-ln p_c(y|x))."""
    return float(-np.sum(game.p_g * _log_softmax(game.c_logits)))


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _kl_generated_to_classifier(game: TabularGame, c_logits: np.ndarray) -> float:
    p_g = game.p_g
    with np.errstate(divide="ignore"):
        log_pc = np.log(game.p_x)[:, None] + _log_softmax(c_logits)
    return float(np.sum(xlogy(p_g, p_g)) - np.sum(np.where(p_g > 0, p_g * log_pc, 0.0)))


class RpKlCheck(BaseModel):
    model_config = ConfigDict(frozen=True)

    grad_gap: float
    value_gap_drift: float
    r_p: float
    kl: float


def rp_kl_equivalence_check(game: TabularGame, rng: RngStream, n_perturb: int = 5) -> RpKlCheck:
    """Compare ∇R_P (reverse-mode) with ∇KL(p_g‖p_c) (closed form) over ``c_logits``.

    Also reports how far R_P - KL(p_g‖p_c) moves under random logit perturbations;
    the difference depends on the generator only.
    """
    c = Parameter(game.c_logits.copy(), "c_logits")
    r_p = -(Tensor(game.p_g) * log_softmax_rows(c)).sum()
    autodiff_grad = grad(r_p, [c])[c]

    p_g = game.p_g
    kl_grad = p_g.sum(axis=1)[:, None] * game.c_conditional - p_g
    gap = float(np.max(np.abs(autodiff_grad - kl_grad)))

    base = r_p.item() - _kl_generated_to_classifier(game, game.c_logits)
    drift = 0.0
    for _ in range(n_perturb):
        logits = game.c_logits + rng.normal(game.c_logits.shape)
        moved = game.with_logits(c_logits=logits)
        value = pseudo_discriminative_loss(moved) - _kl_generated_to_classifier(moved, logits)
        drift = max(drift, abs(value - base))
    return RpKlCheck(
        grad_gap=gap,
        value_gap_drift=drift,
        r_p=r_p.item(),
        kl=_kl_generated_to_classifier(game, game.c_logits),
    )


# ---------------------------------------------------------------------------
# Equilibrium search
# ---------------------------------------------------------------------------


class EquilibriumResult(BaseModel):
    """Final joints plus one row (dist_c, dist_g, dist_alpha) per round, round 0 first."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    p_c: np.ndarray
    p_g: np.ndarray
    trajectory: np.ndarray
    diverged: bool
    objective: Objective

    @property
    def dist_c(self) -> float:
        return float(self.trajectory[-1, 0])

    @property
    def dist_g(self) -> float:
        return float(self.trajectory[-1, 1])

    @property
    def dist_alpha(self) -> float:
        return float(self.trajectory[-1, 2])

    @property
    def rounds(self) -> int:
        return len(self.trajectory) - 1


def _distances(p: np.ndarray, p_c: np.ndarray, p_g: np.ndarray, p_alpha: np.ndarray) -> np.ndarray:
    return np.array([np.abs(p_c - p).max(), np.abs(p_g - p).max(), np.abs(p_alpha - p).max()])


def solve_equilibrium(
    p: JointLike,
    alpha: float,
    alpha_p: float,
    rng: RngStream,
    iters: int = 2000,
    step: float = 0.5,
    objective: Objective = "full",
    extra_kl: float = 0.0,
    init: Init = "random",
    init_scale: float = 1.0,
) -> EquilibriumResult:
    """Alternate an analytic best-response D with descent steps for C and G.

    ``full`` minimises U + R_C + α_P·R_P (R_P moves the classifier only);
    ``adversarial`` minimises U alone; ``gan`` is the two-player game with
    p_α := p_g, where only the generator moves. ``extra_kl`` adds
    λ·KL(p_c‖p_g) for both players. A run whose tracked distance grows for
    50 consecutive rounds is flagged as diverged but runs to completion.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"α ∈ (0,1) required, got {alpha}")
    if alpha_p < 0 or (objective == "full" and alpha_p == 0):
        raise ValueError(f"α_P must be positive for the full objective, got {alpha_p}")
    if extra_kl < 0:
        raise ValueError(f"extra KL weight must be nonnegative, got {extra_kl}")

    target = TabularJoint.of(p)
    table = target.table
    n_x, n_y = target.shape
    p_x, p_y = table.sum(axis=1), table.sum(axis=0)
    if init == "target":
        c_logits, g_logits = conditional_logits(target)
    else:
        c_logits = init_scale * rng.normal((n_x, n_y))
        g_logits = init_scale * rng.normal((n_y, n_x))
    p_y_cond = np.where(p_x[:, None] > 0, table / np.where(p_x > 0, p_x, 1.0)[:, None], 0.0)

    trajectory = np.empty((iters + 1, 3))
    diverged = False
    growing = 0
    tracked_prev = np.inf
    rounds = iters
    for t in range(iters + 1):
        s_c, s_g = _softmax(c_logits), _softmax(g_logits)
        p_c = p_x[:, None] * s_c
        p_g = (p_y[:, None] * s_g).T
        p_alpha = p_g if objective == "gan" else (1.0 - alpha) * p_g + alpha * p_c
        trajectory[t] = _distances(table, p_c, p_g, p_alpha)

        tracked = trajectory[t, 2] if objective == "adversarial" else max(trajectory[t, 0], trajectory[t, 1])
        if not np.all(np.isfinite(trajectory[t])):
            logger.warning("equilibrium search produced non-finite tables at round %d", t)
            diverged = True
            rounds = t
            break
        growing = growing + 1 if tracked > tracked_prev else 0
        tracked_prev = tracked
        if growing >= DIVERGENCE_PATIENCE and not diverged:
            logger.warning("equilibrium search diverging: distance grew for %d rounds (round %d)", growing, t)
            diverged = True
        if t == iters:
            break

        with np.errstate(divide="ignore"):
            log_fake = np.log(p_alpha) - np.log(table + p_alpha)
        up_c = np.zeros_like(table)
        up_g = log_fake if objective == "gan" else (1.0 - alpha) * log_fake
        if objective != "gan":
            up_c = alpha * log_fake
        if extra_kl > 0:
            up_c = up_c + extra_kl * (np.log(p_c) - np.log(p_g))
            up_g = up_g - extra_kl * p_c / p_g

        grad_c = _softmax_back(s_c, up_c)
        if objective == "full":
            grad_c += s_c - p_y_cond
            generated_x = p_g.sum(axis=1)
            grad_c += alpha_p * _per_row(generated_x[:, None] * s_c - p_g, p_x)
        grad_g = _softmax_back(s_g, up_g.T)

        if objective != "gan":
            c_logits = c_logits - step * grad_c
        g_logits = g_logits - step * grad_g

    final_c = p_x[:, None] * _softmax(c_logits)
    final_g = (p_y[:, None] * _softmax(g_logits)).T
    return EquilibriumResult(
        p_c=final_c,
        p_g=final_g,
        trajectory=trajectory[: rounds + 1],
        diverged=diverged,
        objective=objective,
    )


class InvarianceCheck(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    extra_kl: float
    base: EquilibriumResult
    regularized: EquilibriumResult

    @property
    def trajectories_identical(self) -> bool:
        return bool(np.array_equal(self.base.trajectory, self.regularized.trajectory))


def regularizer_invariance_check(
    p: JointLike,
    alpha: float,
    alpha_p: float,
    extra_kl: float,
    seed: int = 0,
    iters: int = 2000,
    step: float = 0.5,
) -> InvarianceCheck:
    """Solve the full game with and without λ·KL(p_c‖p_g) from the same initial logits."""
    if extra_kl < 0:
        raise ValueError(f"extra KL weight must be nonnegative, got {extra_kl}")
    base = solve_equilibrium(p, alpha, alpha_p, RngStream(seed, "equilibrium"), iters, step)
    regularized = solve_equilibrium(
        p, alpha, alpha_p, RngStream(seed, "equilibrium"), iters, step, extra_kl=extra_kl
    )
    return InvarianceCheck(extra_kl=extra_kl, base=base, regularized=regularized)


def value_at(game: TabularGame) -> ExactValue:
    return exact_v(game.p, TabularJoint.normalized(game.p_c), TabularJoint.normalized(game.p_g), game.alpha)
