"""The coefficient-adaptation engine: a deterministic-policy actor/critic pair
trained online against swarm runs.

Per iteration the swarm is observed as three scalars (progress, diversity,
stagnation), sine-encoded into 15 inputs; the actor emits one action slice
per particle subgroup which a mapper turns into velocity coefficients.  The
reward is +1 when the global best improved that iteration, otherwise -1.
Training follows the standard off-policy loop: replay buffer, critic
regression against the target networks' bootstrap value, actor ascending the
critic, and soft target tracking.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .benchmarks import make_objective
from .neural import AdamState, GradientTape, Mlp, adam_update, load_weights, save_weights, soft_update
from .records import RunRecord
from .swarm import DEFAULT_REFRESH_GAP, DEFAULT_SUBGROUPS, CoefficientSet, Swarm, schedule_coeffs

STATE_WIDTH = 15
SIN_SCALES = (1.0, 2.0, 4.0, 8.0, 16.0)  # 2**i for i = 0..4
GROUP_WIDTH = {"pso": 4, "clpso": 4, "rlpso": 5}
ACTOR_HIDDEN = (64, 64)
CRITIC_HIDDEN = (128, 128, 64, 64)

DEFAULT_POOL = ("sphere", "rastrigin", "griewank", "ackley")

MODEL_META_SUFFIX = ".meta"


@dataclass(frozen=True)
class RawState:
    iteration_frac: float
    diversity_norm: float
    stagnation_frac: float


def observe(swarm: Swarm) -> RawState:
    """Summarize a swarm as (progress, normalized dispersion, stagnation)."""
    centroid = swarm.positions.mean(axis=0)
    dispersion = float(np.mean(np.sqrt(np.sum((swarm.positions - centroid) ** 2, axis=1))))
    diagonal = math.sqrt(swarm.dim) * (swarm.objective.upper - swarm.objective.lower)
    return RawState(
        iteration_frac=swarm.eval_count / swarm.eval_budget,
        diversity_norm=dispersion / diagonal,
        stagnation_frac=(swarm.eval_count - swarm.last_improve_eval) / swarm.eval_budget,
    )


def encode(raw: RawState) -> np.ndarray:
    """Sine-encode each raw input at five octaves: sin(x * 2**i), i = 0..4."""
    out = np.empty(STATE_WIDTH)
    for block, x in enumerate((raw.iteration_frac, raw.diversity_norm, raw.stagnation_frac)):
        for j, scale in enumerate(SIN_SCALES):
            out[block * len(SIN_SCALES) + j] = math.sin(x * scale)
    return out


def _unit(a: np.ndarray) -> np.ndarray:
    # actor outputs live in [-1, 1]; the absolute mapper wants [0, 1]
    return (np.asarray(a, dtype=float) + 1.0) / 2.0


def map_action_absolute(a) -> CoefficientSet:
    """Map one 4-wide action slice to (w, c1, c2): w in [0.1, 0.9] and
    c1 + c2 normalized to a budget of 8 * a_hat[3]."""
    ah = _unit(a)
    if ah.shape != (4,):
        raise ValueError(f"absolute mapper wants 4 values, got {ah.shape}")
    w = ah[0] * 0.8 + 0.1
    scale = 1.0 / (ah[1] + ah[2] + 1e-5) * ah[3] * 8.0
    return CoefficientSet(float(w), float(scale * ah[1]), float(scale * ah[2]))


def map_action_rlpso(a) -> CoefficientSet:
    """5-wide variant of the absolute mapper: three attraction shares under an
    8 * a_hat[4] budget; a_hat[4] also serves as the mutation gate c4."""
    ah = _unit(a)
    if ah.shape != (5,):
        raise ValueError(f"rlpso mapper wants 5 values, got {ah.shape}")
    w = ah[0] * 0.8 + 0.1
    scale = 1.0 / (ah[1] + ah[2] + ah[3] + 1e-5) * ah[4] * 8.0
    return CoefficientSet(
        float(w), float(scale * ah[1]), float(scale * ah[2]), float(scale * ah[3]), float(ah[4])
    )


def map_action_relative(a, origin: CoefficientSet) -> CoefficientSet:
    """Perturb a baseline coefficient set by a * 0.5 per component; the
    inertia weight is clamped to [0.05, 1.2] for stability."""
    a = np.asarray(a, dtype=float)
    if a.size < 3:
        raise ValueError(f"relative mapper wants at least 3 values, got {a.size}")
    w = min(max(a[0] * 0.5 + origin.w, 0.05), 1.2)
    c1 = a[1] * 0.5 + origin.c1
    c2 = a[2] * 0.5 + origin.c2
    c3 = a[3] * 0.5 + origin.c3 if a.size > 3 else origin.c3
    c4 = a[4] * 0.5 + origin.c4 if a.size > 4 else origin.c4
    return CoefficientSet(float(w), float(c1), float(c2), float(c3), float(c4))


def reward(prev_gbest: float, new_gbest: float) -> float:
    return 1.0 if new_gbest < prev_gbest else -1.0


class ReplayBuffer:
    """Fixed-capacity ring of transitions with seeded uniform batch sampling."""

    def __init__(self, capacity: int, seed: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._storage = []
        self._cursor = 0
        self.rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return len(self._storage)

    def push(self, state, action, rew, next_state) -> None:
        item = (state, action, rew, next_state)
        if len(self._storage) < self.capacity:
            self._storage.append(item)
        else:
            self._storage[self._cursor] = item
        self._cursor = (self._cursor + 1) % self.capacity

    def sample(self, batch_size: int):
        """Uniform without replacement within the batch; returns stacked arrays."""
        if batch_size > len(self._storage):
            raise ValueError(f"asked for {batch_size} transitions, buffer holds {len(self._storage)}")
        idx = self.rng.choice(len(self._storage), size=batch_size, replace=False)
        states = np.stack([self._storage[i][0] for i in idx])
        actions = np.stack([self._storage[i][1] for i in idx])
        rewards = np.array([self._storage[i][2] for i in idx])
        next_states = np.stack([self._storage[i][3] for i in idx])
        return states, actions, rewards, next_states


class DdpgAgent:
    """Actor/critic pair with target copies, replay buffer, and Adam states.

    The actor maps the 15-wide encoded state to ``action_dim`` tanh outputs;
    the critic scores state and action concatenated at its input.
    """

    def __init__(self, action_dim: int, seed: int, *, state_dim: int = STATE_WIDTH,
                 gamma: float = 0.99, tau: float = 0.005, noise_sigma: float = 0.5,
                 batch_size: int = 64, buffer_capacity: int = 100_000, warmup: int = 500,
                 actor_lr: float = 1e-4, critic_lr: float = 1e-3,
                 actor_hidden=ACTOR_HIDDEN, critic_hidden=CRITIC_HIDDEN):
        if not 0.0 < tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")
        if not 0.0 <= gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.gamma = gamma
        self.tau = tau
        self.noise_sigma = noise_sigma
        self.batch_size = batch_size
        self.warmup = warmup
        self.actor_lr = actor_lr
        self.critic_lr = critic_lr
        init_rng = np.random.default_rng(seed)
        self.noise_rng = np.random.default_rng(seed + 1)
        self.actor = Mlp.init([state_dim, *actor_hidden, action_dim], "tanh", init_rng)
        self.critic = Mlp.init([state_dim + action_dim, *critic_hidden, 1], "identity", init_rng)
        self.actor_target = self.actor.clone()
        self.critic_target = self.critic.clone()
        self.actor_opt = AdamState(self.actor)
        self.critic_opt = AdamState(self.critic)
        self.buffer = ReplayBuffer(buffer_capacity, seed + 2)

    def act(self, encoded_state, explore: bool) -> np.ndarray:
        a = self.actor.forward(encoded_state)
        if explore:
            a = a + self.noise_rng.normal(0.0, self.noise_sigma, self.action_dim)
        return np.clip(a, -1.0, 1.0)

    def soft_update_targets(self, tau: float | None = None) -> None:
        t = self.tau if tau is None else tau
        soft_update(self.actor_target, self.actor, t)
        soft_update(self.critic_target, self.critic, t)

    def train_step(self) -> tuple[float, float]:
        """One critic regression step, one actor ascent step, one soft update.

        Returns (batch critic loss, batch mean critic value) for diagnostics.
        """
        if len(self.buffer) < self.batch_size:
            raise ValueError(
                f"buffer holds {len(self.buffer)} transitions, need {self.batch_size}"
            )
        states, actions, rewards, next_states = self.buffer.sample(self.batch_size)
        b = self.batch_size

        # bootstrap target: y = r + gamma * Q'(s', mu'(s')), treated as constant
        next_actions = self.actor_target.forward(next_states)
        q_next = self.critic_target.forward(np.hstack([next_states, next_actions]))
        y = rewards[:, None] + self.gamma * q_next

        tape = GradientTape()
        q = self.critic.forward(np.hstack([states, actions]), tape)
        err = q - y
        critic_loss = float(np.mean(err**2))
        grads, _ = self.critic.backward(tape, 2.0 * err / b)
        adam_update(self.critic, grads, self.critic_opt, self.critic_lr)

        # actor ascends mean Q(s, mu(s)); chain the critic's action gradient
        actor_tape = GradientTape()
        pred_actions = self.actor.forward(states, actor_tape)
        critic_tape = GradientTape()
        q_pred = self.critic.forward(np.hstack([states, pred_actions]), critic_tape)
        actor_objective = float(np.mean(q_pred))
        _, input_grad = self.critic.backward(critic_tape, np.full((b, 1), 1.0 / b))
        action_grad = input_grad[:, self.state_dim :]
        actor_grads, _ = self.actor.backward(actor_tape, action_grad)
        for g in actor_grads.weights + actor_grads.biases:
            np.negative(g, out=g)  # gradient *ascent* on the critic value
        adam_update(self.actor, actor_grads, self.actor_opt, self.actor_lr)

        self.soft_update_targets()
        return critic_loss, actor_objective


def baseline_coeffs(variant: str, t: int, t_max: int) -> CoefficientSet:
    """The coefficients the un-adapted variant would use at iteration t
    (the origin for relative-mode adaptation)."""
    if variant == "pso":
        return schedule_coeffs("constant", t, t_max)
    if variant == "clpso":
        sched = schedule_coeffs("linear_dec_w", t, t_max)
        return CoefficientSet(sched.w, 1.494, 0.0)
    raise ValueError(f"no baseline coefficients for variant {variant!r}")


def coefficient_sets(action, mode: str, variant: str, origin: CoefficientSet | None,
                     subgroups: int = DEFAULT_SUBGROUPS) -> list[CoefficientSet]:
    """Split a full action vector into per-subgroup slices and map each one."""
    action = np.asarray(action, dtype=float)
    width = GROUP_WIDTH[variant]
    if action.shape != (width * subgroups,):
        raise ValueError(f"expected action of length {width * subgroups}, got {action.shape}")
    sets = []
    for g in range(subgroups):
        piece = action[g * width : (g + 1) * width]
        if mode == "absolute":
            sets.append(map_action_rlpso(piece) if variant == "rlpso" else map_action_absolute(piece))
        elif mode == "relative":
            if variant == "rlpso":
                raise ValueError("relative mode is undefined for rlpso (no baseline coefficients)")
            sets.append(map_action_relative(piece, origin))
        else:
            raise ValueError(f"unknown mode {mode!r}")
    return sets


def action_width(variant: str, subgroups: int = DEFAULT_SUBGROUPS) -> int:
    return GROUP_WIDTH[variant] * subgroups


def _swarm_iteration(swarm: Swarm, variant: str, sets, refresh_gap: int) -> None:
    if variant == "pso":
        swarm.pso_step(sets)
    elif variant == "clpso":
        # the scalar-coefficient update takes one (w, c) pair; use group 0's
        swarm.clpso_step(sets[0].w, sets[0].c1, refresh_gap)
    else:
        swarm.rlpso_step(sets, refresh_gap)


@dataclass
class EpisodeRecord:
    episode: int
    function: str
    fn_seed: int
    final_gbest: float
    mean_critic_loss: float


_VALIDATION_SEED_BASE = 50_000


def _validation_score(agent, pool, mode, variant, dim, n_particles, budget,
                      refresh_gap, subgroups, n_seeds=3) -> float:
    """Greedy performance of the current actor on fresh pool instances.

    Mean log-error to the known optimum, so functions with different scales
    weigh equally.  Lower is better.
    """
    total = 0.0
    count = 0
    for fi, fn_id in enumerate(pool):
        for v in range(n_seeds):
            objective = make_objective(fn_id, dim, _VALIDATION_SEED_BASE + 977 * fi + v)
            rec = adapted_run(agent, objective, variant, mode, budget,
                              _VALIDATION_SEED_BASE + v, n_particles=n_particles,
                              refresh_gap=refresh_gap, subgroups=subgroups)
            total += math.log10(max(rec.final_fit - objective.bias, 1e-12))
            count += 1
    return total / count


def train(agent: DdpgAgent, pool, episodes: int, mode: str, variant: str, dim: int, *,
          n_particles: int = 40, budget: int = 10_000, seed: int = 0,
          refresh_gap: int = DEFAULT_REFRESH_GAP, subgroups: int = DEFAULT_SUBGROUPS,
          validate_every: int = 25, log_every: int = 0) -> list[EpisodeRecord]:
    """Train the agent by looping swarm episodes over a pool of functions.

    Every episode draws a fresh function instance (new shift/rotation) and a
    fresh swarm, then alternates observe -> act(explore) -> map -> one swarm
    iteration -> reward -> store, with one gradient step per iteration once
    the buffer passes the warm-up size.

    Every ``validate_every`` episodes the current actor is scored with greedy
    runs on held-out pool instances, and the best-scoring snapshot is what
    the agent keeps at the end.  The improvement reward is magnitude-blind,
    so the final policy of a long run can drift toward micro-improvement
    churning that never converges well; selecting on validation gbest keeps
    the policy that actually optimizes.  Pass ``validate_every=0`` to keep
    the final-episode policy unconditionally.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    pool = list(pool)
    if not pool:
        raise ValueError("training pool is empty")
    if agent.action_dim != action_width(variant, subgroups):
        raise ValueError(
            f"agent emits {agent.action_dim} values but variant {variant!r} "
            f"needs {action_width(variant, subgroups)}"
        )
    ep_rng = np.random.default_rng(seed)
    t_max = max(1, budget // n_particles - 1)
    log: list[EpisodeRecord] = []
    best_score = math.inf
    best_actor = None

    def maybe_validate():
        nonlocal best_score, best_actor
        score = _validation_score(agent, pool, mode, variant, dim, n_particles,
                                  budget, refresh_gap, subgroups)
        if score < best_score:
            best_score = score
            best_actor = agent.actor.clone()
        return score

    if validate_every:
        maybe_validate()  # the freshly initialized policy is a candidate too
    for ep in range(episodes):
        fn_id = pool[int(ep_rng.integers(len(pool)))]
        fn_seed = int(ep_rng.integers(2**63))
        swarm_seed = int(ep_rng.integers(2**63))
        objective = make_objective(fn_id, dim, fn_seed)
        swarm = Swarm(objective, n_particles, budget, swarm_seed,
                      variant=variant, subgroup_count=subgroups)
        state = encode(observe(swarm))
        prev_best = swarm.gbest_fit
        losses = []
        t = 0
        while swarm.eval_count < swarm.eval_budget:
            action = agent.act(state, explore=True)
            sets = coefficient_sets(
                action, mode, variant,
                baseline_coeffs(variant, min(t, t_max), t_max) if mode == "relative" else None,
                subgroups,
            )
            _swarm_iteration(swarm, variant, sets, refresh_gap)
            r = reward(prev_best, swarm.gbest_fit)
            prev_best = swarm.gbest_fit
            next_state = encode(observe(swarm))
            agent.buffer.push(state, action, r, next_state)
            if len(agent.buffer) >= max(agent.warmup, agent.batch_size):
                loss, _ = agent.train_step()
                losses.append(loss)
            state = next_state
            t += 1
        log.append(EpisodeRecord(ep, fn_id, fn_seed, swarm.gbest_fit,
                                 float(np.mean(losses)) if losses else float("nan")))
        if validate_every and (ep + 1) % validate_every == 0:
            maybe_validate()
        if log_every and (ep + 1) % log_every == 0:
            print(f"episode {ep + 1}/{episodes}: {fn_id} gbest={swarm.gbest_fit:.6g}")
    if validate_every and best_actor is not None:
        agent.actor = best_actor
        agent.actor_target = best_actor.clone()
    return log


def adapted_run(agent, objective, variant: str, mode: str, budget: int, seed: int, *,
                n_particles: int = 40, refresh_gap: int = DEFAULT_REFRESH_GAP,
                subgroups: int = DEFAULT_SUBGROUPS) -> RunRecord:
    """Run one greedy (noise-free, no-learning) adapted optimization."""
    swarm = Swarm(objective, n_particles, budget, seed,
                  variant=variant, subgroup_count=subgroups)
    adapter = f"rlam-{mode}"
    record = RunRecord(objective.id, objective.dim, seed, variant, adapter)
    record.curve.append((swarm.eval_count, swarm.gbest_fit))
    t_max = max(1, budget // n_particles - 1)
    t = 0
    while swarm.eval_count < swarm.eval_budget:
        action = agent.act(encode(observe(swarm)), explore=False)
        sets = coefficient_sets(
            action, mode, variant,
            baseline_coeffs(variant, min(t, t_max), t_max) if mode == "relative" else None,
            subgroups,
        )
        _swarm_iteration(swarm, variant, sets, refresh_gap)
        record.curve.append((swarm.eval_count, swarm.gbest_fit))
        t += 1
    return record.close()


class ActorPolicy:
    """Adapter for running a saved actor without the training machinery."""

    def __init__(self, actor: Mlp):
        self.actor = actor
        self.action_dim = actor.layer_dims[-1]

    def act(self, encoded_state, explore: bool = False) -> np.ndarray:
        if explore:
            raise ValueError("a bare actor policy cannot explore")
        return np.clip(self.actor.forward(encoded_state), -1.0, 1.0)


def save_model(actor: Mlp, path, *, mode: str, variant: str, pool, episodes: int, seed: int,
               subgroups: int = DEFAULT_SUBGROUPS) -> None:
    """Persist a trained actor: binary weights plus a key=value sidecar."""
    path = Path(path)
    save_weights(actor, path)
    meta = {
        "mode": mode,
        "variant": variant,
        "subgroups": subgroups,
        "action_width": actor.layer_dims[-1],
        "state_width": actor.layer_dims[0],
        "pool": ",".join(pool),
        "episodes": episodes,
        "seed": seed,
    }
    sidecar = path.with_name(path.name + MODEL_META_SUFFIX)
    with open(sidecar, "w", encoding="utf-8", newline="\n") as f:
        for key, value in meta.items():
            f.write(f"{key}={value}\n")


def load_model(path) -> tuple[ActorPolicy, dict]:
    """Load actor weights and sidecar metadata saved by ``save_model``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"model file not found: {path}")
    sidecar = path.with_name(path.name + MODEL_META_SUFFIX)
    if not sidecar.exists():
        raise FileNotFoundError(f"model sidecar not found: {sidecar}")
    actor = load_weights(path)
    meta = {}
    with open(sidecar, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            meta[key.strip()] = value.strip()
    return ActorPolicy(actor), meta
