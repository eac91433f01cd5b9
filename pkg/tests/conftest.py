"""Shared test fixtures and small deterministic helpers."""

import os

# the DDPG matrices are tiny; BLAS threading only adds contention and jitter
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import numpy as np
import pytest

from rlapso.benchmarks import Objective


def flat_objective(dim: int, bias: float = 0.0) -> Objective:
    """A centered sphere with identity rotation, handy for tiny hand oracles."""
    return Objective("sphere", dim, -100.0, 100.0, np.zeros(dim), np.eye(dim), bias, 0)


class CountingObjective:
    """Wraps an objective and counts evaluate() calls."""

    def __init__(self, inner: Objective):
        self.inner = inner
        self.calls = 0

    def __getattr__(self, name):
        return getattr(self.inner, name)

    def evaluate(self, x):
        self.calls += 1
        return self.inner.evaluate(x)


class ScriptedRng:
    """Replays pre-chosen draws so threshold branches can be forced."""

    def __init__(self, randoms=(), integers=(), uniforms=()):
        self._randoms = list(randoms)
        self._integers = list(integers)
        self._uniforms = list(uniforms)

    def random(self, size=None):
        if size is None:
            return self._randoms.pop(0)
        return np.array([self._randoms.pop(0) for _ in range(size)])

    def integers(self, high):
        return self._integers.pop(0)

    def uniform(self, low, high, size=None):
        return np.array(self._uniforms.pop(0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


# one PASS/FAIL line per acceptance criterion, echoed after the test summary
ACCEPTANCE_VERDICTS = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)
