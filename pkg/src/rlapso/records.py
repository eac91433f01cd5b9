"""Run records shared between the optimizer layers and the experiment harness."""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class RunRecord:
    """One optimization run: a convergence curve plus its final best value.

    ``curve`` holds (eval_count, gbest_fit) pairs, the first taken right
    after initialization and then one per iteration; the gbest column is
    non-increasing and ``final_fit`` equals its last entry.
    """

    function: str
    dim: int
    seed: int
    variant: str
    adapter: str
    curve: list = field(default_factory=list)
    final_fit: float = float("inf")

    def close(self) -> "RunRecord":
        self.final_fit = self.curve[-1][1]
        return self
