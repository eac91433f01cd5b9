"""Command-line interface: train / run / compare / bench.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import ddpg, harness
from .benchmarks import FUNCTIONS, make_objective
from .ddpg import DdpgAgent, action_width
from .harness import ALGORITHMS, ConfigError
from .swarm import Swarm, schedule_coeffs


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="rlapso", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    train = sub.add_parser("train",
                           help="train an adaptation agent and save the actor model")
    train.add_argument("--variant", choices=("pso", "clpso", "rlpso"), default="pso")
    train.add_argument("--mode", choices=("absolute", "relative"), default="absolute")
    train.add_argument("--functions", default=",".join(ddpg.DEFAULT_POOL),
                       help="comma-separated training pool")
    train.add_argument("--dim", type=int, default=10)
    train.add_argument("--episodes", type=int, default=300)
    train.add_argument("--budget", type=int, default=10_000)
    train.add_argument("--particles", type=int, default=40)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--out", required=True, help="model output path")
    train.add_argument("--validate-every", type=int, default=25,
                       help="greedy-validation cadence for snapshot selection (0 disables)")
    train.add_argument("--log-every", type=int, default=25)

    run = sub.add_parser("run",
                         help="run one algorithm once and write its convergence curve")
    run.add_argument("--function", required=True, choices=sorted(FUNCTIONS))
    run.add_argument("--dim", type=int, default=10)
    run.add_argument("--fn-seed", type=int, default=1234)
    run.add_argument("--algo", required=True, choices=ALGORITHMS)
    run.add_argument("--model", default=None, help="trained model (rlam-*/rlpso only)")
    run.add_argument("--budget", type=int, default=10_000)
    run.add_argument("--particles", type=int, default=40)
    run.add_argument("--seed", type=int, default=1)
    run.add_argument("--out", required=True, help="curve CSV output path")

    compare = sub.add_parser("compare",
                             help="run a full comparison experiment from a config file")
    compare.add_argument("--config", required=True)

    sub.add_parser("bench", help="quick smoke suite")
    return parser


def _cmd_train(args) -> int:
    pool = [s.strip() for s in args.functions.split(",") if s.strip()]
    for fn in pool:
        if fn not in FUNCTIONS:
            raise ValueError(f"unknown function {fn!r} in training pool")
    agent = DdpgAgent(action_width(args.variant), args.seed)
    log = ddpg.train(agent, pool, args.episodes, args.mode, args.variant, args.dim,
                     n_particles=args.particles, budget=args.budget, seed=args.seed,
                     validate_every=args.validate_every, log_every=args.log_every)
    ddpg.save_model(agent.actor, args.out, mode=args.mode, variant=args.variant,
                    pool=pool, episodes=args.episodes, seed=args.seed)
    finals = [rec.final_gbest for rec in log[-20:]]
    print(f"trained {args.episodes} episodes; last-20 median final gbest "
          f"{float(np.median(finals)):.6g}; model written to {args.out}")
    return 0


def _cmd_run(args) -> int:
    record = harness.run_single(args.algo, args.function, args.dim, args.fn_seed,
                                args.budget, args.seed, args.particles, args.model)
    harness.write_curve_csv(record, args.out)
    print(f"{args.function} / {args.algo}: final gbest {record.final_fit!r} -> {args.out}")
    return 0


def _cmd_compare(args) -> int:
    config = harness.load_config(args.config)
    _, summary = harness.run_experiment(config, quiet=False)
    print(f"wrote {Path(config.out_dir) / 'summary.csv'}")
    return 0


def _cmd_bench() -> int:
    checks = 0

    def ok(label):
        nonlocal checks
        checks += 1
        print(f"bench: {label}: ok")

    for fn in FUNCTIONS:
        obj = make_objective(fn, 2, seed=99)
        if fn != "composition":
            assert abs(obj.evaluate(obj.shift) - obj.bias) < 1e-9, fn
        err = np.abs(obj.rotation.T @ obj.rotation - np.eye(2)).max()
        assert err < 1e-9, fn
    ok("objectives hit their bias at the shift, rotations orthogonal")

    obj = make_objective("sphere", 2, seed=5)
    for variant in ("pso", "clpso", "rlpso"):
        swarm = Swarm(obj, 10, 400, seed=3, variant=variant)
        best = swarm.gbest_fit
        while swarm.eval_count < swarm.eval_budget:
            if variant == "pso":
                swarm.pso_step([schedule_coeffs("constant", 0, 1)] * 5)
            elif variant == "clpso":
                swarm.clpso_step(0.7, 1.494)
            else:
                swarm.rlpso_step([ddpg.map_action_rlpso(np.zeros(5))] * 5)
            assert swarm.gbest_fit <= best
            best = swarm.gbest_fit
        assert swarm.eval_count == swarm.eval_budget
        assert np.all(swarm.positions >= obj.lower) and np.all(swarm.positions <= obj.upper)
    ok("all step variants keep monotone gbest, bounds, and the budget")

    agent = DdpgAgent(action_width("pso"), seed=11)
    rec1 = ddpg.adapted_run(agent, obj, "pso", "absolute", 400, seed=8, n_particles=10)
    rec2 = ddpg.adapted_run(agent, obj, "pso", "absolute", 400, seed=8, n_particles=10)
    assert rec1.curve == rec2.curve
    ok("adapted runs are deterministic")

    stat, p = harness.wilcoxon_signed_rank([1, 2, 3, 4, 5, 6], [0, 0, 0, 0, 0, 0])
    assert stat == 0.0 and abs(p - 0.03125) < 1e-12
    ok("wilcoxon matches the all-positive exact case")

    rng = np.random.default_rng(0)
    for _ in range(200):
        c = ddpg.map_action_absolute(rng.uniform(-1, 1, 4))
        assert 0.1 - 1e-12 <= c.w <= 0.9 + 1e-12
        assert c.c1 >= 0 and c.c2 >= 0 and c.c1 + c.c2 <= 8 + 1e-3
    ok("absolute action mapping stays in range")

    print(f"bench: {checks} checks passed")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "compare":
            return _cmd_compare(args)
        return _cmd_bench()
    except (OSError, ValueError, ConfigError, AssertionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
