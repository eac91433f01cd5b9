"""State encoding, action mapping, reward, replay, and the training loop."""

import math

import numpy as np
import pytest

from conftest import flat_objective
from rlapso.ddpg import (
    DdpgAgent,
    RawState,
    ReplayBuffer,
    action_width,
    adapted_run,
    baseline_coeffs,
    coefficient_sets,
    encode,
    load_model,
    map_action_absolute,
    map_action_relative,
    map_action_rlpso,
    observe,
    reward,
    save_model,
    train,
)
from rlapso.neural import soft_update
from rlapso.swarm import CoefficientSet, Swarm, init_swarm


class TestObserve:
    def test_collapsed_swarm_has_zero_diversity(self):
        swarm = init_swarm(flat_objective(3), 6, 1000, seed=1, subgroup_count=1)
        swarm.positions[:] = np.array([1.0, -2.0, 3.0])
        assert observe(swarm).diversity_norm == 0.0

    def test_two_particles_one_dimension_hand_value(self):
        # particles at 0 and 2: centroid 1, mean distance 1, diagonal 200
        swarm = init_swarm(flat_objective(1), 2, 1000, seed=2, subgroup_count=1)
        swarm.positions[:] = np.array([[0.0], [2.0]])
        assert observe(swarm).diversity_norm == 1.0 / 200.0

    def test_iteration_fraction_after_init(self):
        swarm = init_swarm(flat_objective(2), 10, 500, seed=3, subgroup_count=1)
        assert observe(swarm).iteration_frac == 10 / 500

    def test_stagnation_zero_after_improving_iteration(self):
        swarm = init_swarm(flat_objective(2), 10, 500, seed=4, subgroup_count=1)
        improved = swarm.pso_step([CoefficientSet(0.7, 1.5, 1.5)])
        assert improved
        assert observe(swarm).stagnation_frac == 0.0

    def test_stagnation_grows_when_frozen(self):
        swarm = init_swarm(flat_objective(2), 10, 500, seed=5, subgroup_count=1)
        for _ in range(3):
            swarm.pso_step([CoefficientSet(0.0, 0.0, 0.0)])  # frozen: never improves
        assert observe(swarm).stagnation_frac == 30 / 500


class TestEncode:
    def test_zero_state_encodes_to_zeros(self):
        assert np.array_equal(encode(RawState(0.0, 0.0, 0.0)), np.zeros(15))

    def test_quarter_block_values(self):
        enc = encode(RawState(0.25, 0.0, 0.0))
        expected = [math.sin(0.25 * 2.0**i) for i in range(5)]
        assert np.allclose(enc[:5], expected, rtol=0, atol=1e-15)
        # independently evaluated transcendentals
        assert enc[:5] == pytest.approx([0.2474, 0.4794, 0.8415, 0.9093, -0.7568], abs=1e-4)
        assert np.array_equal(enc[5:], np.zeros(10))

    def test_block_order_is_iteration_diversity_stagnation(self):
        enc = encode(RawState(0.1, 0.2, 0.3))
        assert enc[0] == math.sin(0.1)
        assert enc[5] == math.sin(0.2)
        assert enc[10] == math.sin(0.3)

    def test_range_bounded_for_random_states(self, rng):
        for _ in range(1000):
            raw = RawState(rng.uniform(0, 1), rng.uniform(0, 5), rng.uniform(0, 1))
            enc = encode(raw)
            assert np.all(enc >= -1.0) and np.all(enc <= 1.0)


class TestAbsoluteMapper:
    def test_all_low_action_gives_minimum_inertia_and_zero_pull(self):
        c = map_action_absolute([-1.0, -1.0, -1.0, -1.0])
        assert c.w == pytest.approx(0.1, abs=1e-15)
        assert c.c1 == 0.0 and c.c2 == 0.0

    def test_symmetric_shares_split_budget_evenly(self):
        c = map_action_absolute([1.0, 0.2, 0.2, 1.0])
        assert c.w == pytest.approx(0.9, abs=1e-15)
        assert c.c1 == pytest.approx(c.c2, rel=1e-12)
        assert c.c1 + c.c2 == pytest.approx(8.0, abs=1e-3)

    def test_hand_evaluated_mapping(self):
        # unit-interval targets (0.5, 0.3, 0.1, 0.5) fed as raw tanh outputs
        c = map_action_absolute([0.0, -0.4, -0.8, 0.0])
        scale = 1.0 / (0.3 + 0.1 + 1e-5) * 0.5 * 8.0
        assert c.w == pytest.approx(0.5, abs=1e-12)
        assert c.c1 == pytest.approx(scale * 0.3, rel=1e-9)
        assert c.c2 == pytest.approx(scale * 0.1, rel=1e-9)
        assert c.c1 == pytest.approx(2.99993, abs=1e-4)
        assert c.c2 == pytest.approx(0.99998, abs=1e-4)

    def test_range_invariants_for_random_actions(self, rng):
        for _ in range(1000):
            c = map_action_absolute(rng.uniform(-1, 1, 4))
            assert 0.1 - 1e-12 <= c.w <= 0.9 + 1e-12
            assert c.c1 >= 0.0 and c.c2 >= 0.0
            assert c.c1 + c.c2 <= 8.0 + 1e-3
            assert c.c3 == 0.0 and c.c4 == 0.0

    def test_budget_tracks_fourth_component(self, rng):
        for _ in range(200):
            a = rng.uniform(-1, 1, 4)
            ah = (a + 1.0) / 2.0
            if ah[1] + ah[2] < 0.1:
                continue
            c = map_action_absolute(a)
            assert c.c1 + c.c2 == pytest.approx(8.0 * ah[3], abs=1e-3)


class TestRlpsoMapper:
    def test_gate_taken_directly_from_last_component(self):
        c = map_action_rlpso([0.0, 0.0, 0.0, 0.0, 0.5])
        assert c.c4 == 0.75  # (0.5 + 1) / 2

    def test_budget_tracks_gate_component(self, rng):
        for _ in range(200):
            a = rng.uniform(-1, 1, 5)
            ah = (a + 1.0) / 2.0
            if ah[1] + ah[2] + ah[3] < 0.1:
                continue
            c = map_action_rlpso(a)
            assert c.c1 + c.c2 + c.c3 == pytest.approx(8.0 * ah[4], abs=1e-3)

    def test_three_shares_fill_budget(self, rng):
        for _ in range(500):
            c = map_action_rlpso(rng.uniform(-1, 1, 5))
            assert 0.1 - 1e-12 <= c.w <= 0.9 + 1e-12
            assert min(c.c1, c.c2, c.c3) >= 0.0
            assert c.c1 + c.c2 + c.c3 <= 8.0 + 1e-3
            assert 0.0 <= c.c4 <= 1.0


class TestRelativeMapper:
    def test_zero_action_is_identity(self):
        origin = CoefficientSet(0.7, 1.4, 1.6, 0.3, 0.2)
        c = map_action_relative(np.zeros(5), origin)
        assert (c.w, c.c1, c.c2, c.c3, c.c4) == (0.7, 1.4, 1.6, 0.3, 0.2)

    def test_full_positive_inertia_shift(self):
        c = map_action_relative([1.0, 0.0, 0.0], CoefficientSet(0.4, 1.0, 1.0))
        assert c.w == pytest.approx(0.9, abs=1e-15)

    def test_inertia_clamped_low(self):
        c = map_action_relative([-1.0, 0.0, 0.0], CoefficientSet(0.2, 1.0, 1.0))
        assert c.w == 0.05

    def test_three_wide_action_leaves_extras_at_origin(self):
        origin = CoefficientSet(0.5, 1.0, 1.0, 0.7, 0.9)
        c = map_action_relative([0.2, 0.2, 0.2], origin)
        assert c.c3 == 0.7 and c.c4 == 0.9


class TestReward:
    def test_improvement_is_plus_one(self):
        assert reward(10.0, 9.0) == 1.0

    def test_stagnation_is_minus_one(self):
        assert reward(10.0, 10.0) == -1.0

    def test_equality_at_optimum_is_minus_one(self):
        assert reward(-1400.0, -1400.0) == -1.0

    def test_only_two_values_ever(self, rng):
        for _ in range(200):
            prev = rng.normal()
            new = prev - abs(rng.normal())
            assert reward(prev, new) in (1.0, -1.0)


class TestReplayBuffer:
    @staticmethod
    def _t(i):
        return (np.full(2, float(i)), np.full(1, float(i)), float(i), np.full(2, float(i)))

    def test_ring_overwrites_oldest(self):
        buf = ReplayBuffer(2, seed=0)
        for i in range(5):
            buf.push(*self._t(i))
        assert len(buf) == 2
        stored = sorted(item[2] for item in buf._storage)
        assert stored == [3.0, 4.0]

    def test_sample_without_replacement_within_batch(self):
        buf = ReplayBuffer(10, seed=1)
        for i in range(10):
            buf.push(*self._t(i))
        _, _, rewards, _ = buf.sample(10)
        assert sorted(rewards.tolist()) == [float(i) for i in range(10)]

    def test_oversized_batch_rejected(self):
        buf = ReplayBuffer(10, seed=2)
        buf.push(*self._t(0))
        with pytest.raises(ValueError, match="buffer holds"):
            buf.sample(2)

    def test_sampling_is_uniform_over_slots(self):
        buf = ReplayBuffer(50, seed=3)
        for i in range(50):
            buf.push(*self._t(i))
        counts = np.zeros(50)
        for _ in range(10_000):
            _, _, rewards, _ = buf.sample(10)
            for r in rewards:
                counts[int(r)] += 1
        expected = 10_000 * 10 / 50
        sigma = math.sqrt(10_000 * 0.2 * 0.8)
        assert np.all(np.abs(counts - expected) <= 3 * sigma)


class TestAgent:
    def test_zero_actor_acts_as_zero_vector(self):
        agent = DdpgAgent(20, seed=0)
        for w in agent.actor.weights:
            w[:] = 0.0
        for b in agent.actor.biases:
            b[:] = 0.0
        assert np.array_equal(agent.act(np.ones(15), explore=False), np.zeros(20))

    def test_greedy_action_is_deterministic(self):
        agent = DdpgAgent(20, seed=1)
        s = np.linspace(-1, 1, 15)
        assert np.array_equal(agent.act(s, False), agent.act(s, False))

    def test_exploration_noise_replays_from_seed(self):
        agent = DdpgAgent(20, seed=5)
        s = np.linspace(-1, 1, 15)
        base = agent.actor.forward(s)
        expected = np.clip(base + np.random.default_rng(6).normal(0.0, 0.5, 20), -1, 1)
        assert np.array_equal(agent.act(s, explore=True), expected)

    def test_exploring_action_stays_clipped(self):
        agent = DdpgAgent(20, seed=2)
        s = np.zeros(15)
        for _ in range(50):
            a = agent.act(s, explore=True)
            assert np.all(a >= -1.0) and np.all(a <= 1.0)

    def test_tau_one_copies_targets_from_sources(self):
        agent = DdpgAgent(20, seed=3)
        agent.actor.weights[0][0, 0] += 1.0
        agent.soft_update_targets(tau=1.0)
        assert np.array_equal(agent.actor_target.weights[0], agent.actor.weights[0])

    def test_tau_zero_leaves_targets(self):
        agent = DdpgAgent(20, seed=4)
        before = agent.actor_target.weights[0].copy()
        agent.actor.weights[0][:] += 1.0
        agent.soft_update_targets(tau=0.0)
        assert np.array_equal(agent.actor_target.weights[0], before)

    def test_target_drift_bounded_geometrically(self):
        agent = DdpgAgent(8, seed=6, tau=0.05)
        # perturb the target away from the frozen source
        for t_arr in agent.actor_target.weights + agent.actor_target.biases:
            t_arr += 0.5
        gap0 = max(
            np.abs(t - s).max()
            for t, s in zip(agent.actor_target.weights, agent.actor.weights)
        )
        for k in range(1, 30):
            soft_update(agent.actor_target, agent.actor, 0.05)
            gap = max(
                np.abs(t - s).max()
                for t, s in zip(agent.actor_target.weights, agent.actor.weights)
            )
            assert gap <= (1 - 0.05) ** k * gap0 * (1 + 1e-9) + 1e-15

    def test_train_step_requires_batch(self):
        agent = DdpgAgent(20, seed=7)
        with pytest.raises(ValueError, match="need"):
            agent.train_step()

    def test_critic_regression_on_fixed_batch(self):
        # gamma = 0 makes y = r: a pure supervised target for the critic
        agent = DdpgAgent(1, seed=8, state_dim=1, gamma=0.0, batch_size=16,
                          warmup=16, actor_hidden=(), critic_hidden=(),
                          critic_lr=0.02)
        rng = np.random.default_rng(9)
        for _ in range(16):
            s = rng.uniform(-1, 1, 1)
            a = rng.uniform(-1, 1, 1)
            r = float(2.0 * s[0] + 0.5 * a[0])
            agent.buffer.push(s, a, r, s)
        first_loss, _ = agent.train_step()
        losses = [agent.train_step()[0] for _ in range(200)]
        assert losses[-1] < 0.1 * first_loss

    def test_invalid_hyperparameters_rejected(self):
        with pytest.raises(ValueError, match="tau"):
            DdpgAgent(4, seed=0, tau=0.0)
        with pytest.raises(ValueError, match="gamma"):
            DdpgAgent(4, seed=0, gamma=1.0)


class TestCoefficientPlumbing:
    def test_action_widths(self):
        assert action_width("pso") == 20
        assert action_width("clpso") == 20
        assert action_width("rlpso") == 25

    def test_slices_map_per_group(self):
        action = np.concatenate([np.full(4, -1.0), np.full(4, 1.0),
                                 np.zeros(4), np.zeros(4), np.zeros(4)])
        action[12:16] = [1.0, 0.2, 0.2, 1.0]
        sets = coefficient_sets(action, "absolute", "pso", None)
        assert len(sets) == 5
        assert sets[0].w == pytest.approx(0.1, abs=1e-15)
        assert sets[1].w == pytest.approx(0.9, abs=1e-15)
        assert sets[3].c1 + sets[3].c2 == pytest.approx(8.0, abs=1e-3)

    def test_relative_needs_origin_and_rejects_rlpso(self):
        with pytest.raises(ValueError, match="relative"):
            coefficient_sets(np.zeros(25), "relative", "rlpso", CoefficientSet(0.7, 1, 1))

    def test_wrong_length_rejected(self):
        with pytest.raises(ValueError, match="length"):
            coefficient_sets(np.zeros(19), "absolute", "pso", None)

    def test_baseline_origin_for_pso_is_constant_schedule(self):
        origin = baseline_coeffs("pso", 10, 100)
        assert (origin.w, origin.c1, origin.c2) == (0.729, 1.494, 1.494)


class TestTrainingLoop:
    def test_transition_accounting(self):
        # budget 4N: init consumes N, leaving 3 iterations -> 3 transitions
        agent = DdpgAgent(20, seed=10, warmup=10_000)
        train(agent, ["sphere"], 1, "absolute", "pso", 2,
              n_particles=10, budget=40, seed=0)
        assert len(agent.buffer) == 3

    def test_episode_log_and_pool_rotation(self):
        agent = DdpgAgent(20, seed=11, warmup=10_000)
        log = train(agent, ["sphere", "rastrigin"], 4, "absolute", "pso", 2,
                    n_particles=10, budget=50, seed=1)
        assert len(log) == 4
        assert {rec.function for rec in log} <= {"sphere", "rastrigin"}
        assert all(math.isnan(rec.mean_critic_loss) for rec in log)  # warmup never reached

    def test_empty_pool_rejected(self):
        agent = DdpgAgent(20, seed=12)
        with pytest.raises(ValueError, match="pool"):
            train(agent, [], 1, "absolute", "pso", 2)

    def test_action_width_mismatch_rejected(self):
        agent = DdpgAgent(20, seed=13)
        with pytest.raises(ValueError, match="emits"):
            train(agent, ["sphere"], 1, "absolute", "rlpso", 2)

    def test_training_actually_updates_networks(self):
        agent = DdpgAgent(20, seed=14, warmup=20, batch_size=8)
        before = agent.actor.weights[0].copy()
        train(agent, ["sphere"], 2, "absolute", "pso", 2,
              n_particles=8, budget=200, seed=2, validate_every=0)
        assert not np.array_equal(agent.actor.weights[0], before)

    def test_snapshot_selection_never_validates_worse(self):
        from rlapso.ddpg import _validation_score

        kwargs = dict(n_particles=8, budget=200, seed=3)
        selected = DdpgAgent(20, seed=15, warmup=20, batch_size=8)
        train(selected, ["sphere"], 3, "absolute", "pso", 2,
              validate_every=1, **kwargs)
        plain = DdpgAgent(20, seed=15, warmup=20, batch_size=8)
        train(plain, ["sphere"], 3, "absolute", "pso", 2,
              validate_every=0, **kwargs)
        args = (["sphere"], "absolute", "pso", 2, 8, 200, 7, 5)
        assert _validation_score(selected, *args) <= _validation_score(plain, *args) + 1e-12


class TestAdaptedRun:
    def test_deterministic_repeat(self):
        from rlapso.benchmarks import make_objective

        agent = DdpgAgent(20, seed=15)
        obj = make_objective("sphere", 4, 77)
        a = adapted_run(agent, obj, "pso", "absolute", 1000, seed=3, n_particles=10)
        b = adapted_run(agent, obj, "pso", "absolute", 1000, seed=3, n_particles=10)
        assert a.curve == b.curve
        assert a.final_fit == b.final_fit

    def test_curve_accounting_at_full_budget(self):
        from rlapso.benchmarks import make_objective

        agent = DdpgAgent(20, seed=16)
        obj = make_objective("sphere", 4, 78)
        rec = adapted_run(agent, obj, "pso", "absolute", 10_000, seed=4, n_particles=40)
        assert len(rec.curve) == 250
        assert rec.curve[0][0] == 40
        assert rec.curve[-1][0] == 10_000
        gbests = [fit for _, fit in rec.curve]
        assert all(b2 <= b1 for b1, b2 in zip(gbests, gbests[1:]))

    def test_zero_actor_reproduces_midpoint_mapping(self):
        """With a zero actor every group maps to the same coefficients as the
        all-zero action; trace the first iteration by hand."""
        from rlapso.benchmarks import make_objective

        agent = DdpgAgent(20, seed=17)
        for w in agent.actor.weights:
            w[:] = 0.0
        for b in agent.actor.biases:
            b[:] = 0.0
        expected = map_action_absolute(np.zeros(4))
        assert expected.w == 0.5
        assert expected.c1 == pytest.approx(2.0, abs=1e-4)

        obj = make_objective("sphere", 3, 79)
        seed = 5
        mirror = Swarm(obj, 10, 200, seed, variant="pso")
        mirror.pso_step([expected] * 5)
        rec = adapted_run(agent, obj, "pso", "absolute", 80, seed, n_particles=10)
        assert rec.curve[1][1] == mirror.gbest_fit


class TestModelFiles:
    def test_save_load_round_trip(self, tmp_path):
        agent = DdpgAgent(20, seed=18)
        path = tmp_path / "model.bin"
        save_model(agent.actor, path, mode="absolute", variant="pso",
                   pool=["sphere"], episodes=3, seed=18)
        policy, meta = load_model(path)
        assert meta["mode"] == "absolute"
        assert meta["variant"] == "pso"
        assert meta["action_width"] == "20"
        assert meta["state_width"] == "15"
        s = np.linspace(-0.5, 0.5, 15)
        assert np.array_equal(policy.act(s), agent.act(s, explore=False))

    def test_missing_sidecar_rejected(self, tmp_path):
        agent = DdpgAgent(20, seed=19)
        path = tmp_path / "model.bin"
        save_model(agent.actor, path, mode="absolute", variant="pso",
                   pool=["sphere"], episodes=1, seed=19)
        (tmp_path / "model.bin.meta").unlink()
        with pytest.raises(FileNotFoundError, match="sidecar"):
            load_model(path)

    def test_missing_model_rejected(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="model"):
            load_model(tmp_path / "nope.bin")

    def test_policy_refuses_exploration(self, tmp_path):
        agent = DdpgAgent(20, seed=20)
        path = tmp_path / "model.bin"
        save_model(agent.actor, path, mode="absolute", variant="pso",
                   pool=["sphere"], episodes=1, seed=20)
        policy, _ = load_model(path)
        with pytest.raises(ValueError, match="explore"):
            policy.act(np.zeros(15), explore=True)
