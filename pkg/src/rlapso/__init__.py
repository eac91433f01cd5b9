"""Particle swarm optimization with learned online coefficient control."""

from .benchmarks import FUNCTIONS, Objective, evaluate, make_objective
from .ddpg import (
    DdpgAgent,
    RawState,
    adapted_run,
    encode,
    map_action_absolute,
    map_action_relative,
    map_action_rlpso,
    observe,
    reward,
    train,
)
from .harness import (
    ALGORITHMS,
    ExperimentConfig,
    improvement,
    run_experiment,
    run_single,
    wilcoxon_signed_rank,
)
from .neural import Mlp, load_weights, save_weights
from .records import RunRecord
from .swarm import CoefficientSet, Swarm, init_swarm, schedule_coeffs

__version__ = "0.1.0"
