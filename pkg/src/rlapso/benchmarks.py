"""Shifted/rotated black-box benchmark functions on the [-100, 100]^D box.

Each objective is a classic test function composed with a seeded shift and
(for most functions) a seeded rotation, plus a fixed additive bias, so the
known optimum sits at an interior point with value == bias.  All transforms
are generated deterministically from a 64-bit seed; no data files needed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LOWER = -100.0
UPPER = 100.0
SHIFT_MARGIN = 5.0  # keep the optimum strictly interior

_TWO_PI = 2.0 * math.pi

# Schwefel anchor: g(z) = z*sin(sqrt|z|) peaks at z = _SCHWEFEL_A inside [-500, 500].
_SCHWEFEL_A = 4.209687462275036e2
_SCHWEFEL_PEAK = _SCHWEFEL_A * np.sin(np.sqrt(np.abs(_SCHWEFEL_A)))

_COMPOSITION_SIGMA = 20.0


def _sphere(z: np.ndarray) -> float:
    return float(z @ z)


def _elliptic(z: np.ndarray) -> float:
    d = z.size
    weights = 10.0 ** (6.0 * np.arange(d) / (d - 1))
    return float(weights @ (z * z))


def _bent_cigar(z: np.ndarray) -> float:
    return float(z[0] * z[0] + 1e6 * np.sum(z[1:] * z[1:]))


def _discus(z: np.ndarray) -> float:
    return float(1e6 * z[0] * z[0] + np.sum(z[1:] * z[1:]))


def _diff_powers(z: np.ndarray) -> float:
    d = z.size
    exponents = 2.0 + 4.0 * np.arange(d) / (d - 1)
    return float(np.sqrt(np.sum(np.abs(z) ** exponents)))


def _rosenbrock(z: np.ndarray) -> float:
    # classic domain is ~[-2, 2]; pre-scale, then move the optimum to z = 0
    y = (2.048 / 100.0) * z + 1.0
    return float(np.sum(100.0 * (y[:-1] ** 2 - y[1:]) ** 2 + (y[:-1] - 1.0) ** 2))


def _ackley(z: np.ndarray) -> float:
    d = z.size
    rms = math.sqrt(float(z @ z) / d)
    mean_cos = float(np.sum(np.cos(_TWO_PI * z))) / d
    return -20.0 * math.exp(-0.2 * rms) - math.exp(mean_cos) + 20.0 + math.e


def _weierstrass(z: np.ndarray) -> float:
    y = (0.5 / 100.0) * z
    k = np.arange(21)
    ak = 0.5 ** k
    bk = 3.0 ** k
    inner = (ak * np.cos(_TWO_PI * bk * (y[:, None] + 0.5))).sum(axis=1)
    center = (ak * np.cos(_TWO_PI * bk * 0.5)).sum()
    return float(np.sum(inner - center))


def _griewank(z: np.ndarray) -> float:
    y = 6.0 * z  # classic domain is [-600, 600]
    s = float(y @ y) / 4000.0
    p = float(np.prod(np.cos(y / np.sqrt(1.0 + np.arange(y.size)))))
    return s - p + 1.0


def _rastrigin(z: np.ndarray) -> float:
    y = (5.12 / 100.0) * z
    return float(np.sum(y * y - 10.0 * np.cos(_TWO_PI * y) + 10.0))


def _schwefel(z: np.ndarray) -> float:
    y = 10.0 * z + _SCHWEFEL_A
    ay = np.abs(y)
    g_in = y * np.sin(np.sqrt(ay))
    d = z.size
    ym = np.mod(y, 500.0)
    g_hi = (500.0 - ym) * np.sin(np.sqrt(np.abs(500.0 - ym))) - (y - 500.0) ** 2 / (10000.0 * d)
    nm = np.mod(-y, 500.0)
    g_lo = (nm - 500.0) * np.sin(np.sqrt(np.abs(500.0 - nm))) - (y + 500.0) ** 2 / (10000.0 * d)
    g = np.where(ay <= 500.0, g_in, 0.0) + np.where(y > 500.0, g_hi, 0.0) + np.where(y < -500.0, g_lo, 0.0)
    return float(np.sum(_SCHWEFEL_PEAK - g))


@dataclass(frozen=True)
class FunctionSpec:
    bias: float
    rotated: bool
    raw: object  # callable(z) -> float, None for the composition


FUNCTIONS: dict[str, FunctionSpec] = {
    "sphere": FunctionSpec(-1400.0, False, _sphere),
    "elliptic": FunctionSpec(-1300.0, True, _elliptic),
    "bent_cigar": FunctionSpec(-1200.0, True, _bent_cigar),
    "discus": FunctionSpec(-1100.0, True, _discus),
    "diff_powers": FunctionSpec(-1000.0, False, _diff_powers),
    "rosenbrock": FunctionSpec(-900.0, True, _rosenbrock),
    "ackley": FunctionSpec(-700.0, True, _ackley),
    "weierstrass": FunctionSpec(-600.0, True, _weierstrass),
    "griewank": FunctionSpec(-500.0, True, _griewank),
    "rastrigin": FunctionSpec(-400.0, False, _rastrigin),
    "rastrigin_rot": FunctionSpec(-300.0, True, _rastrigin),
    "schwefel": FunctionSpec(-100.0, False, _schwefel),
    "composition": FunctionSpec(900.0, True, None),
}

_COMPOSITION_PARTS = (_rastrigin, _griewank, _sphere)


def _gram_schmidt_rotation(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Orthonormalize a matrix of standard normal draws (modified Gram-Schmidt)."""
    while True:
        m = rng.normal(size=(dim, dim))
        q = np.empty_like(m)
        ok = True
        for k in range(dim):
            v = m[:, k].copy()
            for j in range(k):
                v -= (q[:, j] @ v) * q[:, j]
            norm = float(np.linalg.norm(v))
            if norm < 1e-12:  # essentially impossible for Gaussian draws
                ok = False
                break
            q[:, k] = v / norm
        if ok:
            return q


@dataclass(frozen=True)
class Objective:
    """An immutable benchmark instance; ``evaluate`` is pure and reentrant."""

    id: str
    dim: int
    lower: float
    upper: float
    shift: np.ndarray
    rotation: np.ndarray
    bias: float
    seed: int
    extra_shifts: tuple = ()
    extra_rotations: tuple = ()

    def __post_init__(self):
        self.shift.setflags(write=False)
        self.rotation.setflags(write=False)
        for arr in (*self.extra_shifts, *self.extra_rotations):
            arr.setflags(write=False)

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected a vector of length {self.dim}, got shape {x.shape}")
        if self.id == "composition":
            return self._evaluate_composition(x)
        z = self.rotation @ (x - self.shift)
        return FUNCTIONS[self.id].raw(z) + self.bias

    def _evaluate_composition(self, x: np.ndarray) -> float:
        shifts = (self.shift, *self.extra_shifts)
        rotations = (self.rotation, *self.extra_rotations)
        sq = np.array([float((x - o) @ (x - o)) for o in shifts])
        weights = np.exp(-sq / (2.0 * self.dim * _COMPOSITION_SIGMA**2))
        weights /= weights.sum()
        values = np.array(
            [raw(m @ (x - o)) for raw, o, m in zip(_COMPOSITION_PARTS, shifts, rotations)]
        )
        return float(weights @ values) + self.bias


def make_objective(function_id: str, dim: int, seed: int) -> Objective:
    """Build a benchmark instance with seed-deterministic shift and rotation."""
    if function_id not in FUNCTIONS:
        known = ", ".join(sorted(FUNCTIONS))
        raise ValueError(f"unknown function id {function_id!r}; expected one of: {known}")
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    spec = FUNCTIONS[function_id]
    rng = np.random.default_rng(seed)
    shift = rng.uniform(LOWER + SHIFT_MARGIN, UPPER - SHIFT_MARGIN, dim)
    if function_id == "composition":
        rotation = _gram_schmidt_rotation(rng, dim)
        extra_shifts = []
        extra_rotations = []
        for _ in range(len(_COMPOSITION_PARTS) - 1):
            extra_shifts.append(rng.uniform(LOWER + SHIFT_MARGIN, UPPER - SHIFT_MARGIN, dim))
            extra_rotations.append(_gram_schmidt_rotation(rng, dim))
        return Objective(
            function_id, dim, LOWER, UPPER, shift, rotation, spec.bias, seed,
            tuple(extra_shifts), tuple(extra_rotations),
        )
    rotation = _gram_schmidt_rotation(rng, dim) if spec.rotated else np.eye(dim)
    return Objective(function_id, dim, LOWER, UPPER, shift, rotation, spec.bias, seed)


def evaluate(obj: Objective, x) -> float:
    return obj.evaluate(x)


def function_ids() -> list[str]:
    return list(FUNCTIONS)
