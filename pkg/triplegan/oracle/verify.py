"""The oracle verification suite behind ``triplegan verify-oracle``."""

from __future__ import annotations

import logging
import time

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from triplegan.autodiff.random import RngStream
from triplegan.oracle.equilibrium import (
    LN4,
    EquilibriumResult,
    Objective,
    numerical_optimal_discriminator,
    optimal_discriminator,
    random_perturbation_check,
    regularizer_invariance_check,
    rp_kl_equivalence_check,
    solve_equilibrium,
    value_at,
)
from triplegan.oracle.tabular import (
    constructed_equilibrium_game,
    marginals,
    random_game,
    random_joint,
)

logger = logging.getLogger(__name__)

DISTANCE_COLUMNS = ("check", "target", "seed", "round", "dist_c", "dist_g", "dist_alpha")
EQUILIBRIUM_TOLERANCE = 0.02
MIXTURE_TOLERANCE = 1e-3


class CheckResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


class DistanceRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    check: str
    target: int
    seed: int
    round: int
    dist_c: float
    dist_g: float
    dist_alpha: float

    def to_csv(self) -> str:
        return (
            f"{self.check},{self.target},{self.seed},{self.round},"
            f"{self.dist_c!r},{self.dist_g!r},{self.dist_alpha!r}"
        )


class OracleReport(BaseModel):
    checks: list[CheckResult] = Field(default_factory=list)
    distances: list[DistanceRow] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def to_text(self) -> str:
        lines = []
        for check in self.checks:
            status = "PASS" if check.passed else "FAIL"
            lines.append(f"[{status}] {check.name}: {check.detail} ({check.seconds:.2f}s)")
        passed = sum(check.passed for check in self.checks)
        lines.append(f"{passed}/{len(self.checks)} checks passed")
        return "\n".join(lines)

    def distance_csv(self) -> str:
        return "\n".join([",".join(DISTANCE_COLUMNS), *(row.to_csv() for row in self.distances)]) + "\n"


def _rows(check: str, target: int, seed: int, result: EquilibriumResult, stride: int) -> list[DistanceRow]:
    picked = list(range(0, result.rounds + 1, stride))
    if picked[-1] != result.rounds:
        picked.append(result.rounds)
    return [
        DistanceRow(
            check=check,
            target=target,
            seed=seed,
            round=r,
            dist_c=float(result.trajectory[r, 0]),
            dist_g=float(result.trajectory[r, 1]),
            dist_alpha=float(result.trajectory[r, 2]),
        )
        for r in picked
    ]


class OracleSuite:
    """Runs every tabular check; each ``check_*`` method appends one result."""

    def __init__(
        self,
        seeds: int = 5,
        base_seed: int = 0,
        shape: tuple[int, int] = (4, 3),
        alpha: float = 0.5,
        alpha_p: float = 0.5,
        iters: int = 2000,
        step: float = 0.5,
        stride: int = 10,
    ) -> None:
        if seeds < 1:
            raise ValueError(f"at least one seed is required, got {seeds}")
        self.seeds = seeds
        self.base_seed = base_seed
        self.shape = shape
        self.alpha = alpha
        self.alpha_p = alpha_p
        self.iters = iters
        self.step = step
        self.stride = stride
        self.report = OracleReport()
        self._targets = [
            random_joint(*shape, RngStream(base_seed + i, "oracle/target")) for i in range(5)
        ]

    def _record(self, name: str, passed: bool, detail: str, started: float) -> None:
        result = CheckResult(name=name, passed=passed, detail=detail, seconds=time.perf_counter() - started)
        log = logger.info if passed else logger.warning
        log("oracle check %s: %s", name, detail)
        self.report.checks.append(result)

    def _rng(self, name: str) -> RngStream:
        return RngStream(self.base_seed, f"oracle/{name}")

    def check_optimal_discriminator(self, n_games: int = 20, n_perturb: int = 100) -> None:
        started = time.perf_counter()
        rng = self._rng("lemma1")
        worst_gap, worst_margin = 0.0, np.inf
        for _ in range(n_games):
            game = random_game(*self.shape, self.alpha, rng)
            d_star = optimal_discriminator(game.p, game.p_c, game.p_g, self.alpha)
            numeric = numerical_optimal_discriminator(game.p, game.p_alpha)
            worst_gap = max(worst_gap, float(np.abs(numeric - d_star).max()))
            worst_margin = min(worst_margin, random_perturbation_check(game.p, game.p_alpha, rng, n_perturb))
        passed = worst_gap < 1e-3 and worst_margin >= -1e-12
        detail = f"max |D_num - D*| = {worst_gap:.2e}, min U(D*) - U(D') = {worst_margin:.2e}"
        self._record("optimal-discriminator", passed, detail, started)

    def check_value_identity(self, n_games: int = 100) -> None:
        started = time.perf_counter()
        rng = self._rng("lemma2")
        worst, lowest = 0.0, np.inf
        for _ in range(n_games):
            value = value_at(random_game(*self.shape, self.alpha, rng))
            worst = max(worst, value.difference)
            lowest = min(lowest, value.plug_in)
        value = value_at(constructed_equilibrium_game(self._targets[0], self.alpha, rng))
        optimum_gap = abs(value.plug_in + LN4)
        passed = worst < 1e-10 and optimum_gap < 1e-9 and lowest >= -LN4 - 1e-12
        detail = f"max |plug-in - JSD form| = {worst:.2e}, |V + ln 4| at p_α = p: {optimum_gap:.2e}"
        self._record("value-identity", passed, detail, started)

    def check_marginals(self, n_games: int = 20) -> None:
        started = time.perf_counter()
        rng = self._rng("marginals")
        worst = 0.0
        for i in range(n_games):
            game = constructed_equilibrium_game(self._targets[i % len(self._targets)], self.alpha, rng)
            px, py = marginals(game.p)
            for joint in (game.p_c, game.p_g):
                jx, jy = joint.sum(axis=1), joint.sum(axis=0)
                worst = max(worst, float(np.abs(jx - px).max()), float(np.abs(jy - py).max()))
        self._record("shared-marginals", worst < 1e-10, f"max marginal gap = {worst:.2e}", started)

    def check_pseudo_discriminative(self, n_games: int = 20) -> None:
        started = time.perf_counter()
        rng = self._rng("rp-kl")
        grad_gap, drift = 0.0, 0.0
        for _ in range(n_games):
            check = rp_kl_equivalence_check(random_game(*self.shape, self.alpha, rng), rng)
            grad_gap = max(grad_gap, check.grad_gap)
            drift = max(drift, check.value_gap_drift)
        passed = grad_gap < 1e-10 and drift < 1e-10
        detail = f"max gradient gap = {grad_gap:.2e}, max R_P - KL drift = {drift:.2e}"
        self._record("pseudo-discriminative-kl", passed, detail, started)

    def _solve(
        self, target: int, seed: int, alpha_p: float, objective: Objective = "full"
    ) -> EquilibriumResult:
        return solve_equilibrium(
            self._targets[target],
            self.alpha,
            alpha_p,
            RngStream(self.base_seed + seed, "equilibrium"),
            iters=self.iters,
            step=self.step,
            objective=objective,
        )

    def check_unique_equilibrium(self) -> None:
        started = time.perf_counter()
        worst = 0.0
        for target in range(len(self._targets)):
            for seed in range(self.seeds):
                result = self._solve(target, seed, alpha_p=self.alpha_p)
                worst = max(worst, result.dist_c, result.dist_g)
                self.report.distances.extend(_rows("full", target, seed, result, self.stride))
        detail = f"α_P = {self.alpha_p}: max final distance to p = {worst:.2e}"
        self._record("unique-equilibrium", worst < EQUILIBRIUM_TOLERANCE, detail, started)

        started = time.perf_counter()
        witnesses = 0
        for target in range(len(self._targets)):
            for seed in range(self.seeds):
                result = self._solve(target, seed, alpha_p=0.0, objective="adversarial")
                self.report.distances.extend(_rows("adversarial", target, seed, result, self.stride))
                if result.dist_alpha < MIXTURE_TOLERANCE and result.dist_c > EQUILIBRIUM_TOLERANCE:
                    witnesses += 1
        detail = f"α_P = 0: {witnesses} runs reach p_α = p with p_c ≠ p"
        self._record("non-unique-without-cross-entropy", witnesses >= 1, detail, started)

    def check_regularizer_invariance(self, extra_kl: float = 0.1) -> None:
        started = time.perf_counter()
        worst = 0.0
        for target in range(len(self._targets)):
            for seed in range(self.seeds):
                check = regularizer_invariance_check(
                    self._targets[target],
                    self.alpha,
                    self.alpha_p,
                    extra_kl,
                    seed=self.base_seed + seed,
                    iters=self.iters,
                    step=self.step,
                )
                worst = max(worst, check.regularized.dist_c, check.regularized.dist_g)
                self.report.distances.extend(_rows("regularized", target, seed, check.regularized, self.stride))
        detail = f"+{extra_kl}·KL(p_c‖p_g): max final distance to p = {worst:.2e}"
        self._record("regularizer-invariance", worst < EQUILIBRIUM_TOLERANCE, detail, started)

    def check_two_player_baseline(self) -> None:
        started = time.perf_counter()
        worst = 0.0
        for target in range(len(self._targets)):
            result = self._solve(target, 0, alpha_p=0.0, objective="gan")
            worst = max(worst, result.dist_g)
            self.report.distances.extend(_rows("gan", target, 0, result, self.stride))
        detail = f"two-player game: max final |p_g - p| = {worst:.2e}"
        self._record("two-player-baseline", worst < EQUILIBRIUM_TOLERANCE, detail, started)

    def run(self) -> OracleReport:
        self.check_optimal_discriminator()
        self.check_value_identity()
        self.check_marginals()
        self.check_pseudo_discriminative()
        self.check_unique_equilibrium()
        self.check_regularizer_invariance()
        self.check_two_player_baseline()
        return self.report


def run_oracle_suite(seeds: int = 5, base_seed: int = 0, iters: int = 2000) -> OracleReport:
    """Every tabular identity and equilibrium check, with per-round distances."""
    return OracleSuite(seeds=seeds, base_seed=base_seed, iters=iters).run()
