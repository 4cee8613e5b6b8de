"""Reward shaping, exploration/iteration schedules, and the two-stage loop."""

import os

import numpy as np
import pytest

from mvrl.coordinator import (AdrlTrainer, ExplorationSchedule, TrainingSchedule,
                              deviation, load_adrl_bundle, shape_reward)
from mvrl.ddpg import AgentHyper
from mvrl.env import TrackEnv
from mvrl.nn import params_digest
from mvrl.seeding import stream_rng, stream_seed
from mvrl.workers import WorkerAgent


def brute_deviation(matrix):
    """Plain-loop evaluation of the leave-one-out deviation."""
    d, n = matrix.shape
    per = []
    for w in range(n):
        mean_others = [0.0] * d
        for v in range(n):
            if v == w:
                continue
            for k in range(d):
                mean_others[k] += matrix[k, v] / (n - 1)
        per.append(sum((matrix[k, w] - mean_others[k]) ** 2 for k in range(d)))
    return np.array(per), sum(per) / n


class TestDeviation:
    def test_consensus_is_zero(self):
        a = np.array([[0.5], [-0.5]])
        per, mean = deviation(np.hstack([a, a, a]))
        np.testing.assert_array_equal(per, np.zeros(3))
        assert mean == 0.0

    def test_two_worker_reference(self):
        # a1 = (1, 0), a2 = (0, 0): each is distance 1 from the other.
        matrix = np.array([[1.0, 0.0], [0.0, 0.0]])
        per, mean = deviation(matrix)
        np.testing.assert_array_equal(per, [1.0, 1.0])
        assert mean == 1.0

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(2, 6))
            d = int(rng.integers(1, 5))
            matrix = rng.uniform(-1, 1, size=(d, n))
            per, mean = deviation(matrix)
            bper, bmean = brute_deviation(matrix)
            assert np.max(np.abs(per - bper)) <= 1e-12
            assert abs(mean - bmean) <= 1e-12

    def test_single_worker_defined_as_zero(self):
        per, mean = deviation(np.array([[0.3], [0.7]]))
        np.testing.assert_array_equal(per, [0.0])
        assert mean == 0.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            deviation(np.zeros((2, 0)))

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(1)
        matrix = rng.uniform(-1, 1, size=(3, 5))
        perm = rng.permutation(5)
        per, mean = deviation(matrix)
        per_p, mean_p = deviation(matrix[:, perm])
        np.testing.assert_allclose(per_p, per[perm], rtol=1e-12)
        assert abs(mean - mean_p) <= 1e-12


class TestShapeReward:
    def test_consensus_keeps_reward(self):
        a = np.array([[0.1], [0.9]])
        shaped = shape_reward(2.5, np.hstack([a, a]), 0.1)
        assert shaped.shaped == 2.5
        assert shaped.mean_deviation == 0.0

    def test_reference_value(self):
        # delta = 0.5 via two actions sqrt(0.5) apart; r_c = 1 - 0.1 * 0.5.
        gap = np.sqrt(0.5)
        matrix = np.array([[gap, 0.0], [0.0, 0.0]])
        shaped = shape_reward(1.0, matrix, 0.1)
        assert abs(shaped.mean_deviation - 0.5) <= 1e-15
        assert abs(shaped.shaped - 0.95) <= 1e-15

    def test_zero_penalty_passes_through(self):
        rng = np.random.default_rng(2)
        matrix = rng.uniform(-1, 1, size=(2, 4))
        shaped = shape_reward(-3.0, matrix, 0.0)
        assert shaped.shaped == -3.0

    def test_never_exceeds_raw_and_equality_iff_consensus(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            matrix = rng.uniform(-1, 1, size=(2, 3))
            shaped = shape_reward(1.0, matrix, 0.1)
            assert shaped.shaped <= shaped.raw
            assert (shaped.shaped == shaped.raw) == (shaped.mean_deviation == 0.0)

    def test_negative_penalty_rejected(self):
        with pytest.raises(ValueError):
            shape_reward(1.0, np.zeros((2, 2)), -0.1)


class TestExplorationSchedule:
    def test_empty_history_gives_floor(self):
        sched = ExplorationSchedule(3, eps_min=0.05, eps_max=0.5)
        assert sched.eps_worker(0) == 0.05
        assert abs(sched.eps_global - 0.05) <= 1e-12

    def test_constant_deviation_scales_linearly(self):
        sched = ExplorationSchedule(2, window=10, kappa=0.5, eps_min=0.05, eps_max=0.5)
        for _ in range(10):
            sched.update(np.array([0.4, 0.4]))
        np.testing.assert_allclose(sched.eps_workers, [0.2, 0.2], rtol=1e-12)

    def test_global_is_mean_of_workers(self):
        sched = ExplorationSchedule(3, window=5, kappa=1.0, eps_min=0.0, eps_max=10.0)
        rng = np.random.default_rng(4)
        for _ in range(20):
            sched.update(rng.uniform(0, 1, size=3))
            assert abs(sched.eps_global - sched.eps_workers.mean()) <= 1e-12

    def test_window_eviction(self):
        sched = ExplorationSchedule(1, window=4, kappa=1.0, eps_min=0.0, eps_max=10.0)
        for v in [1.0, 1.0, 1.0, 1.0]:
            sched.update(np.array([v]))
        assert sched.eps_worker(0) == 1.0
        for _ in range(4):
            sched.update(np.array([3.0]))
        assert sched.eps_worker(0) == 3.0

    def test_monotone_in_window_mean(self):
        lo = ExplorationSchedule(1, window=8, kappa=1.0, eps_min=0.0, eps_max=100.0)
        hi = ExplorationSchedule(1, window=8, kappa=1.0, eps_min=0.0, eps_max=100.0)
        for _ in range(8):
            lo.update(np.array([0.2]))
            hi.update(np.array([0.3]))
        assert hi.eps_worker(0) > lo.eps_worker(0)

    def test_cap_applies(self):
        sched = ExplorationSchedule(1, window=2, kappa=1.0, eps_min=0.05, eps_max=0.5)
        sched.update(np.array([9.0]))
        assert sched.eps_worker(0) == 0.5


class TestTrainingSchedule:
    def test_single_iteration_example(self):
        sched = TrainingSchedule(iterations=1, episodes_per_iteration=11)
        assert sched.split(1) == (10, 1)

    def test_two_iteration_endpoints(self):
        sched = TrainingSchedule(iterations=2, episodes_per_iteration=20)
        assert abs(sched.ratio(1) - 10.0) <= 1e-12
        assert abs(sched.ratio(2) - 0.1) <= 1e-12

    def test_split_sums_to_episode_budget(self):
        sched = TrainingSchedule(iterations=30, episodes_per_iteration=20)
        for i in range(1, 31):
            m_w, m_c = sched.split(i)
            assert m_w + m_c == 20
            assert m_w >= 0 and m_c >= 0

    def test_ratio_sequence_is_geometric(self):
        sched = TrainingSchedule(iterations=10, episodes_per_iteration=20)
        ratios = [sched.ratio(i) for i in range(1, 11)]
        quotients = [ratios[i + 1] / ratios[i] for i in range(9)]
        np.testing.assert_allclose(quotients, quotients[0], rtol=1e-10)
        assert abs(ratios[0] - 10.0) <= 1e-12
        assert abs(ratios[-1] - 0.1) <= 1e-12

    def test_total_episode_accounting(self):
        sched = TrainingSchedule(iterations=30, episodes_per_iteration=20)
        assert sched.total_episodes == 600
        assert sum(sum(sched.split(i)) for i in range(1, 31)) == 600

    def test_out_of_range_iteration_rejected(self):
        sched = TrainingSchedule(iterations=5, episodes_per_iteration=10)
        with pytest.raises(ValueError):
            sched.ratio(0)
        with pytest.raises(ValueError):
            sched.ratio(6)


def tiny_env(n_views=4, max_steps=40, sigma2=0.0, diversity=1.0):
    return TrackEnv.from_config({
        "n_views": n_views, "view_dim": 6, "diversity": diversity,
        "sigma2": sigma2, "max_steps": max_steps,
    })


def tiny_hyper(**kw):
    defaults = dict(warmup=16, batch_size=4, replay_capacity=500)
    defaults.update(kw)
    return AgentHyper(**defaults)


class _CaptureLogger:
    def __init__(self):
        self.episodes = []
        self.attention_rows = []

    def episode(self, ep, phase="train"):
        self.episodes.append((phase, ep))

    def attention(self, phase, episode, step, p):
        self.attention_rows.append((phase, episode, step, np.array(p)))


class TestStageOne:
    def test_single_worker_reduces_to_plain_ddpg_episode(self):
        seed = 123
        env_a = tiny_env(n_views=1)
        trainer = AdrlTrainer(env_a, hyper=tiny_hyper(), master_seed=seed)
        stats = trainer.run_stage1_episode(0, stream_seed(seed, "env", 0), shaped=True)

        # Independent plain single-view loop with the same streams.
        env_b = tiny_env(n_views=1)
        worker = WorkerAgent(env_b.view_dims[0], env_b.action_dim, tiny_hyper(),
                             stream_rng(seed, "init", "worker", 0))
        explore_rng = stream_rng(seed, "explore")
        replay_rng = stream_rng(seed, "replay")
        result = env_b.reset(stream_seed(seed, "env", 0))
        obs = result.observations
        ret = 0.0
        while True:
            action = worker.select_action(obs[0], 0.05, explore_rng)
            result = env_b.step(action)
            from mvrl.ddpg import Transition
            worker.agent.buffer.store(Transition(
                views=[obs[0]], action=action, reward=result.reward,
                next_views=[result.observations[0]], terminal=result.terminal))
            if len(worker.agent.buffer) >= 16:
                worker.update(replay_rng)
            ret += result.reward
            obs = result.observations
            if result.terminal:
                break

        assert stats.shaped_ret == stats.ret == ret
        assert stats.mean_deviation == 0.0
        a, b = trainer.workers[0], worker
        assert params_digest(a.features, a.agent.actor, a.agent.critic) == \
            params_digest(b.features, b.agent.actor, b.agent.critic)
        rewards_a = [t.reward for t in a.agent.buffer.contents()]
        rewards_b = [t.reward for t in b.agent.buffer.contents()]
        assert rewards_a == rewards_b

    def test_identical_workers_have_zero_deviation(self):
        # Consensus of the proposal mechanics: updates stay off (large warmup)
        # so the cloned policies cannot drift apart mid-episode.
        env = tiny_env(n_views=2, diversity=0.0)
        trainer = AdrlTrainer(env, hyper=tiny_hyper(warmup=10_000), master_seed=5)
        # Clone worker 0 into worker 1: identical nets on identical views.
        for mine, theirs in zip(
            (trainer.workers[1].features, trainer.workers[1].agent.actor,
             trainer.workers[1].agent.critic),
            (trainer.workers[0].features, trainer.workers[0].agent.actor,
             trainer.workers[0].agent.critic),
        ):
            mine.load_state_from(theirs)
        stats = trainer.run_stage1_episode(0, stream_seed(5, "env", 0), shaped=True)
        assert stats.mean_deviation == 0.0
        assert stats.shaped_ret == stats.ret

    def test_episode_stats_match_env_counters(self):
        env = tiny_env()
        trainer = AdrlTrainer(env, hyper=tiny_hyper(), master_seed=6)
        stats = trainer.run_stage1_episode(1, stream_seed(6, "env", 0), shaped=False)
        assert 1 <= stats.steps <= env.max_steps
        assert stats.steps == env.latent.steps
        assert stats.agent == "worker1"


class TestStageTwo:
    def test_feature_layers_frozen_and_heads_isolated(self):
        env = tiny_env(max_steps=60)
        trainer = AdrlTrainer(env, hyper=tiny_hyper(warmup=8), master_seed=7)
        feats_before = params_digest(*(w.features for w in trainer.workers))
        critics_before = params_digest(*(w.agent.critic for w in trainer.workers))
        outs_before = params_digest(
            *(np.hstack([w.agent.actor.weights[-1].ravel(), w.agent.actor.biases[-1]])
              for w in trainer.workers))
        gains_before = trainer.gate.gains.copy()
        global_before = params_digest(trainer.global_agent.actor,
                                      trainer.global_agent.critic)

        trainer.run_stage2_episode(stream_seed(7, "env", 0))

        assert params_digest(*(w.features for w in trainer.workers)) == feats_before
        assert params_digest(*(w.agent.critic for w in trainer.workers)) == critics_before
        assert params_digest(
            *(np.hstack([w.agent.actor.weights[-1].ravel(), w.agent.actor.biases[-1]])
              for w in trainer.workers)) == outs_before
        assert not np.array_equal(trainer.gate.gains, gains_before)
        assert params_digest(trainer.global_agent.actor,
                             trainer.global_agent.critic) != global_before

    def test_attention_rows_sum_to_one(self):
        env = tiny_env(max_steps=30)
        logger = _CaptureLogger()
        trainer = AdrlTrainer(env, hyper=tiny_hyper(), master_seed=8, logger=logger)
        stats = trainer.run_stage2_episode(stream_seed(8, "env", 0))
        assert len(logger.attention_rows) == stats.steps
        for _, _, _, p in logger.attention_rows:
            assert abs(p.sum() - 1.0) <= 1e-9
            assert np.all(p > 0)

    def test_dominant_gain_selects_single_view(self):
        env = tiny_env(max_steps=10)
        trainer = AdrlTrainer(env, hyper=tiny_hyper(), master_seed=9)
        obs = env.reset(stream_seed(9, "env", 0)).observations
        f = np.array([w.gate_value(o) for w, o in zip(trainer.workers, obs)])
        j = 2
        trainer.gate.gains[...] = 0.0
        trainer.gate.gains[j] = 1e6 * np.sign(f[j]) if f[j] != 0 else 1e6
        x, p = trainer.encoder.encode_one(obs)
        assert np.argmax(p) == j
        assert p[j] > 1.0 - 1e-12
        np.testing.assert_allclose(x, trainer.workers[j].representation(obs[j]),
                                   rtol=0, atol=1e-9)


class TestTrainLoop:
    def test_episode_accounting_and_round_robin(self, tmp_path):
        env = tiny_env(max_steps=12)
        logger = _CaptureLogger()
        trainer = AdrlTrainer(
            env, hyper=tiny_hyper(warmup=10_000), master_seed=10,
            schedule=TrainingSchedule(iterations=3, episodes_per_iteration=4),
            logger=logger, checkpoint_dir=str(tmp_path), checkpoint_every=1,
        )
        stats = trainer.train()
        assert len(stats) == 12
        for it in (1, 2, 3):
            rows = [s for s in stats if s.iteration == it]
            m_w, m_c = trainer.schedule.split(it)
            assert len([s for s in rows if s.stage == 1]) == m_w
            assert len([s for s in rows if s.stage == 2]) == m_c
        worker_rows = [s.agent for s in stats if s.stage == 1]
        expected = [f"worker{i % 4}" for i in range(len(worker_rows))]
        assert worker_rows == expected
        assert [s.episode for s in stats] == list(range(12))
        for it in (1, 2, 3):
            assert os.path.isdir(tmp_path / f"iter_{it:04d}")

    def test_first_iteration_stage1_uses_raw_rewards(self):
        env = tiny_env(max_steps=10)
        trainer = AdrlTrainer(
            env, hyper=tiny_hyper(warmup=10_000), master_seed=11,
            schedule=TrainingSchedule(iterations=2, episodes_per_iteration=3),
        )
        stats = trainer.train()
        for s in stats:
            if s.iteration == 1 and s.stage == 1:
                assert s.shaped_ret == s.ret
        later = [s for s in stats if s.iteration == 2 and s.stage == 1
                 and s.mean_deviation > 0]
        for s in later:
            assert s.shaped_ret < s.ret

    def test_env_step_budget_stops_training(self):
        env = tiny_env(max_steps=10)
        trainer = AdrlTrainer(
            env, hyper=tiny_hyper(warmup=10_000), master_seed=12,
            schedule=TrainingSchedule(iterations=5, episodes_per_iteration=4),
            max_env_steps=35,
        )
        stats = trainer.train()
        assert trainer.total_env_steps >= 35
        assert len(stats) < 20

    def test_checkpoint_bundle_roundtrip(self, tmp_path):
        env = tiny_env(max_steps=10)
        trainer = AdrlTrainer(env, hyper=tiny_hyper(warmup=10_000), master_seed=13)
        path = str(tmp_path / "bundle")
        trainer.save_checkpoint(path)
        workers, gate, global_agent = load_adrl_bundle(path, tiny_hyper())
        assert params_digest(*(w.features for w in workers)) == \
            params_digest(*(w.features for w in trainer.workers))
        np.testing.assert_array_equal(gate.gains, trainer.gate.gains)
        assert params_digest(global_agent.actor) == params_digest(trainer.global_agent.actor)


def test_trainer_rejects_negative_penalty():
    env = tiny_env(max_steps=10)
    with pytest.raises(ValueError):
        AdrlTrainer(env, gamma_r=-0.5)
