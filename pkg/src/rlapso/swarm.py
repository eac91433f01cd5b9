"""Particle swarm state and update rules.

Three step kinds share one ``Swarm``: the classic inertia/pbest/gbest update,
the comprehensive-learning update with per-dimension exemplars, and the
RLPSO update (exemplar + gbest + own-pbest terms with a stall-gated position
mutation).  Every coefficient is supplied by the caller each iteration so an
external controller can steer the run.

Determinism contract: all randomness flows through ``self.rng`` and is drawn
in a fixed documented order, so a test oracle holding an identically seeded
generator can replay a run bit-exactly.  Draw order per step, per particle in
index order: the uniform r-vectors for the velocity terms (r1[, r2[, r3]],
each ``rng.random(dim)``), then for RLPSO one scalar mutation draw and, when
it fires, one ``rng.uniform`` position redraw; exemplar reassignment draws
follow evaluation.  Initialization draws positions then velocities as single
``(n, dim)`` uniform blocks, then assigns exemplars particle by particle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .benchmarks import Objective

V_MAX_FRACTION = 0.2
DEFAULT_SUBGROUPS = 5
DEFAULT_REFRESH_GAP = 7


class BudgetExhaustedError(RuntimeError):
    """Raised when a step is requested but no evaluations remain."""


@dataclass
class CoefficientSet:
    """One subgroup's velocity-update coefficients (c3/c4 used by RLPSO only)."""

    w: float
    c1: float
    c2: float
    c3: float = 0.0
    c4: float = 0.0


def schedule_coeffs(kind: str, t: int, t_max: int) -> CoefficientSet:
    """Baseline offline schedules: constant, linearly decreasing w, or TVAC."""
    if not 0 <= t <= max(t_max, 1):
        raise ValueError(f"iteration {t} outside [0, {t_max}]")
    span = max(t_max, 1)
    if kind == "constant":
        return CoefficientSet(0.729, 1.494, 1.494)
    if kind == "linear_dec_w":
        w = (span - t) / span * (0.9 - 0.4) + 0.4
        return CoefficientSet(w, 2.0, 2.0)
    if kind == "tvac":
        w = (span - t) / span * (0.9 - 0.4) + 0.4
        c1 = (0.5 - 2.5) * (t / span) + 2.5
        c2 = (2.5 - 0.5) * (t / span) + 0.5
        return CoefficientSet(w, c1, c2)
    raise ValueError(f"unknown schedule kind {kind!r}")


def learning_probability(i: int, n: int) -> float:
    """Per-particle exemplar-learning probability, 0.05 for the first particle
    up to 0.5 for the last (i is a 0-based index)."""
    if n <= 1:
        return 0.05
    return 0.05 + 0.45 * (np.expm1(10.0 * i / (n - 1)) / np.expm1(10.0))


class Swarm:
    """Mutable single-threaded swarm over one objective.

    Independent swarms may run concurrently; one swarm must never be shared
    mutably across threads.
    """

    def __init__(self, objective: Objective, n: int, budget: int, seed: int,
                 variant: str = "pso", subgroup_count: int = DEFAULT_SUBGROUPS):
        if variant not in ("pso", "clpso", "rlpso"):
            raise ValueError(f"unknown variant {variant!r}")
        if n < subgroup_count:
            raise ValueError(f"need at least {subgroup_count} particles, got {n}")
        if budget < n:
            raise ValueError(f"budget {budget} cannot cover initialization of {n} particles")
        self.objective = objective
        self.n = n
        self.dim = objective.dim
        self.eval_budget = budget
        self.variant = variant
        self.subgroup_count = subgroup_count
        self.rng = np.random.default_rng(seed)
        self.v_max = V_MAX_FRACTION * (objective.upper - objective.lower)

        self.positions = self.rng.uniform(objective.lower, objective.upper, (n, self.dim))
        self.velocities = self.rng.uniform(-self.v_max, self.v_max, (n, self.dim))
        fits = np.array([objective.evaluate(p) for p in self.positions])
        self.pbest_pos = self.positions.copy()
        self.pbest_fit = fits
        g = int(np.argmin(fits))
        self.gbest_pos = self.positions[g].copy()
        self.gbest_fit = float(fits[g])
        self.eval_count = n
        self.last_improve_eval = n
        self.stall = np.zeros(n, dtype=int)
        self.exemplar = np.tile(np.arange(n)[:, None], (1, self.dim))
        if variant in ("clpso", "rlpso"):
            for i in range(n):
                self.assign_exemplar(i)

    def group_of(self, i: int) -> int:
        base = self.n // self.subgroup_count
        return min(i // base, self.subgroup_count - 1)

    # -- exemplar machinery -------------------------------------------------

    def _tournament_winner(self, i: int) -> int:
        # two distinct random particles != i; better pbest wins
        a = int(self.rng.integers(self.n - 1))
        j1 = a + (a >= i)
        b = int(self.rng.integers(self.n - 2))
        lo, hi = (i, j1) if i < j1 else (j1, i)
        j2 = b + (b >= lo)
        j2 = j2 + (j2 >= hi)
        return j1 if self.pbest_fit[j1] < self.pbest_fit[j2] else j2

    def assign_exemplar(self, i: int) -> np.ndarray:
        """Redraw particle i's per-dimension exemplar row and reset its stall count."""
        pc = learning_probability(i, self.n)
        row = np.empty(self.dim, dtype=int)
        for d in range(self.dim):
            if self.rng.random() >= pc:
                row[d] = i
            else:
                row[d] = self._tournament_winner(i)
        if np.all(row == i):
            # force at least one foreign dimension
            d0 = int(self.rng.integers(self.dim))
            a = int(self.rng.integers(self.n - 1))
            row[d0] = a + (a >= i)
        self.exemplar[i] = row
        self.stall[i] = 0
        return row

    def _exemplar_target(self, i: int) -> np.ndarray:
        return self.pbest_pos[self.exemplar[i], np.arange(self.dim)]

    # -- shared step plumbing -----------------------------------------------

    def _require_budget(self):
        if self.eval_count >= self.eval_budget:
            raise BudgetExhaustedError(
                f"evaluation budget {self.eval_budget} exhausted (eval_count={self.eval_count})"
            )

    def _land(self, i: int, x: np.ndarray, v: np.ndarray) -> float:
        """Clamp to bounds (zeroing clamped velocity components), store, evaluate."""
        low = x < self.objective.lower
        high = x > self.objective.upper
        x[low] = self.objective.lower
        x[high] = self.objective.upper
        v[low | high] = 0.0
        self.positions[i] = x
        self.velocities[i] = v
        fit = self.objective.evaluate(x)
        self.eval_count += 1
        return fit

    def _record(self, i: int, fit: float) -> bool:
        improved = fit < self.pbest_fit[i]
        if improved:
            self.pbest_fit[i] = fit
            self.pbest_pos[i] = self.positions[i]
        if fit < self.gbest_fit:
            self.gbest_fit = fit
            self.gbest_pos = self.positions[i].copy()
        return improved

    def _finish_iteration(self, start_best: float) -> bool:
        improved = self.gbest_fit < start_best
        if improved:
            self.last_improve_eval = self.eval_count
        return improved

    # -- step variants ------------------------------------------------------

    def pso_step(self, coeffs_per_group) -> bool:
        """One classic iteration; returns whether the global best improved.

        Evaluation stops mid-iteration if the budget runs out (remaining
        particles are left untouched).
        """
        if len(coeffs_per_group) != self.subgroup_count:
            raise ValueError(
                f"expected {self.subgroup_count} coefficient sets, got {len(coeffs_per_group)}"
            )
        self._require_budget()
        start_best = self.gbest_fit
        for i in range(self.n):
            if self.eval_count >= self.eval_budget:
                break
            c = coeffs_per_group[self.group_of(i)]
            x = self.positions[i]
            r1 = self.rng.random(self.dim)
            r2 = self.rng.random(self.dim)
            v = c.w * self.velocities[i] + c.c1 * r1 * (self.pbest_pos[i] - x) \
                + c.c2 * r2 * (self.gbest_pos - x)
            v = np.clip(v, -self.v_max, self.v_max)
            fit = self._land(i, x + v, v)
            self._record(i, fit)
        return self._finish_iteration(start_best)

    def clpso_step(self, w: float, c: float, m: int = DEFAULT_REFRESH_GAP) -> bool:
        """One comprehensive-learning iteration with refreshing gap ``m``."""
        if m < 1:
            raise ValueError("refreshing gap must be >= 1")
        self._require_budget()
        start_best = self.gbest_fit
        for i in range(self.n):
            if self.eval_count >= self.eval_budget:
                break
            x = self.positions[i]
            r = self.rng.random(self.dim)
            v = w * self.velocities[i] + c * r * (self._exemplar_target(i) - x)
            v = np.clip(v, -self.v_max, self.v_max)
            fit = self._land(i, x + v, v)
            if not self._record(i, fit):
                self.stall[i] += 1
                if self.stall[i] > m:
                    self.assign_exemplar(i)
        return self._finish_iteration(start_best)

    def rlpso_step(self, coeffs_per_group, m: int = DEFAULT_REFRESH_GAP) -> bool:
        """One RLPSO iteration: exemplar + gbest + own-pbest velocity terms,
        then a stall-gated mutation that may reinitialize the position."""
        if len(coeffs_per_group) != self.subgroup_count:
            raise ValueError(
                f"expected {self.subgroup_count} coefficient sets, got {len(coeffs_per_group)}"
            )
        if m < 1:
            raise ValueError("refreshing gap must be >= 1")
        self._require_budget()
        start_best = self.gbest_fit
        for i in range(self.n):
            if self.eval_count >= self.eval_budget:
                break
            c = coeffs_per_group[self.group_of(i)]
            x = self.positions[i]
            r1 = self.rng.random(self.dim)
            r2 = self.rng.random(self.dim)
            r3 = self.rng.random(self.dim)
            v = c.w * self.velocities[i] + c.c1 * r1 * (self._exemplar_target(i) - x) \
                + c.c2 * r2 * (self.gbest_pos - x) + c.c3 * r3 * (self.pbest_pos[i] - x)
            v = np.clip(v, -self.v_max, self.v_max)
            r4 = self.rng.random()
            if r4 < c.c4 * 0.01 * self.stall[i]:
                x = self.rng.uniform(self.objective.lower, self.objective.upper, self.dim)
                v = np.zeros(self.dim)
                fit = self._land(i, x, v)
            else:
                fit = self._land(i, x + v, v)
            if not self._record(i, fit):
                self.stall[i] += 1
                if self.stall[i] > m:
                    self.assign_exemplar(i)
        return self._finish_iteration(start_best)


def init_swarm(objective: Objective, n: int, budget: int, seed: int,
               variant: str = "pso", subgroup_count: int = DEFAULT_SUBGROUPS) -> Swarm:
    return Swarm(objective, n, budget, seed, variant=variant, subgroup_count=subgroup_count)
