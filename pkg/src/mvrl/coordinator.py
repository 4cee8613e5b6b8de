"""Two-stage multi-view training: reward shaping, exploration, scheduling.

Stage 1 trains each worker on its own view with its own learner; the acting
worker's reward is shaped by how far the workers' proposed actions deviate
from each other. Stage 2 trains the global network on the fused state, with
gradients also reaching the attention gains and the workers' task-dependent
trunk layers; the view-dependent feature layers stay frozen there.

Per-worker exploration scales track each worker's recent action deviation,
so workers that disagree with the consensus search more.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .attention import AttentionEncoder, AttentionGate
from .ddpg import AgentHyper, DDPGAgent, Transition
from .nn import load_net, load_vector, save_net, save_vector
from .seeding import stream_rng, stream_seed
from .workers import WorkerAgent

# -- reward shaping -----------------------------------------------------------


def deviation(actions):
    """Per-worker squared distance from the leave-one-out mean of the others.

    ``actions`` is a (action_dim, N_w) matrix with one column per worker.
    Returns (per-worker deviations, their mean). A single worker has zero
    deviation by definition.
    """
    a = np.asarray(actions, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] == 0:
        raise ValueError("action matrix must have at least one worker column")
    n = a.shape[1]
    if n == 1:
        return np.zeros(1), 0.0
    total = a.sum(axis=1, keepdims=True)
    loo_mean = (total - a) / (n - 1)
    per_worker = np.sum((a - loo_mean) ** 2, axis=0)
    return per_worker, float(per_worker.mean())


@dataclass
class ShapedReward:
    raw: float
    actions: np.ndarray
    deviations: np.ndarray
    mean_deviation: float
    gamma_r: float
    shaped: float


def shape_reward(reward, actions, gamma_r):
    """reward - gamma_r * mean deviation; equals the raw reward at consensus."""
    if gamma_r < 0:
        raise ValueError("penalty coefficient must be nonnegative")
    per_worker, mean_dev = deviation(actions)
    return ShapedReward(
        raw=float(reward),
        actions=np.array(actions, dtype=np.float64),
        deviations=per_worker,
        mean_deviation=mean_dev,
        gamma_r=float(gamma_r),
        shaped=float(reward) - gamma_r * mean_dev,
    )


# -- exploration --------------------------------------------------------------


class _RingMean:
    """Mean of the last ``window`` pushed values, O(1) per push."""

    def __init__(self, window):
        self._buf = np.zeros(window)
        self._n = 0
        self._head = 0
        self._sum = 0.0

    def push(self, value):
        if self._n == len(self._buf):
            self._sum -= self._buf[self._head]
        else:
            self._n += 1
        self._buf[self._head] = value
        self._sum += value
        self._head = (self._head + 1) % len(self._buf)

    @property
    def mean(self):
        return self._sum / self._n if self._n else 0.0


class ExplorationSchedule:
    """Per-worker noise scales proportional to recent action deviation.

    eps_w = clamp(kappa * mean of the last <= window deviations, floor, cap);
    the global scale is the arithmetic mean of the worker scales.
    """

    def __init__(self, n_workers, window=1000, kappa=1.0, eps_min=0.2, eps_max=0.5):
        if n_workers < 1 or window < 1:
            raise ValueError("need at least one worker and a positive window")
        if not 0 <= eps_min <= eps_max:
            raise ValueError("need 0 <= eps_min <= eps_max")
        self.window = window
        self.kappa = kappa
        self.eps_min = eps_min
        self.eps_max = eps_max
        self._rings = [_RingMean(window) for _ in range(n_workers)]
        self.eps_workers = np.full(n_workers, eps_min)

    def update(self, deltas):
        deltas = np.asarray(deltas, dtype=np.float64)
        if deltas.shape != (len(self._rings),):
            raise ValueError("one deviation per worker expected")
        for ring, d in zip(self._rings, deltas):
            ring.push(d)
        self.eps_workers = np.clip(
            [self.kappa * r.mean for r in self._rings], self.eps_min, self.eps_max
        )
        return self.eps_workers.copy(), self.eps_global

    def eps_worker(self, w):
        return float(self.eps_workers[w])

    @property
    def eps_global(self):
        return float(self.eps_workers.mean())


# -- iteration schedule ---------------------------------------------------------


@dataclass
class TrainingSchedule:
    """Episode split per iteration: worker episodes shrink geometrically.

    The worker/global ratio starts at ``ratio_start`` and decays to
    ``ratio_end`` over the ``iterations`` (log-linear interpolation); the
    worker share is rounded half-up, the remainder goes to joint training.
    """

    iterations: int = 100
    episodes_per_iteration: int = 20
    ratio_start: float = 10.0
    ratio_end: float = 0.1

    def __post_init__(self):
        if self.iterations < 1 or self.episodes_per_iteration < 1:
            raise ValueError("iterations and episodes per iteration must be positive")

    def ratio(self, i):
        if not 1 <= i <= self.iterations:
            raise ValueError(f"iteration {i} outside 1..{self.iterations}")
        if self.iterations == 1:
            return self.ratio_start
        frac = (i - 1) / (self.iterations - 1)
        return self.ratio_start * (self.ratio_end / self.ratio_start) ** frac

    def split(self, i):
        """(worker episodes, global episodes) for iteration i (1-based)."""
        rho = self.ratio(i)
        e = self.episodes_per_iteration
        m_w = int(math.floor(e * rho / (1.0 + rho) + 0.5))
        return m_w, e - m_w

    @property
    def total_episodes(self):
        return self.iterations * self.episodes_per_iteration


# -- trainer --------------------------------------------------------------------


@dataclass
class EpisodeStats:
    iteration: int
    stage: int
    episode: int
    agent: str
    steps: int
    ret: float
    shaped_ret: float
    mean_deviation: float
    eps_workers: np.ndarray
    eps_global: float
    att_means: np.ndarray | None = None


class AdrlTrainer:
    """Orchestrates the full two-stage multi-view training procedure."""

    def __init__(self, env, hyper=None, schedule=None, gamma_r=0.1,
                 window=1000, kappa=1.0, eps_min=0.05, eps_max=0.5,
                 master_seed=0, feature_sizes=(32, 32), head_hidden=(64, 64),
                 logger=None, checkpoint_dir=None, checkpoint_every=1,
                 max_env_steps=None):
        if gamma_r < 0:
            raise ValueError("penalty coefficient must be nonnegative")
        self.env = env
        self.hyper = hyper if hyper is not None else AgentHyper()
        self.schedule = schedule if schedule is not None else TrainingSchedule()
        self.gamma_r = gamma_r
        self.master_seed = master_seed
        self.logger = logger
        self.checkpoint_dir = checkpoint_dir
        self.checkpoint_every = checkpoint_every
        self.max_env_steps = max_env_steps

        n = env.n_views
        self.workers = [
            WorkerAgent(env.view_dims[w], env.action_dim, self.hyper,
                        stream_rng(master_seed, "init", "worker", w),
                        feature_sizes=feature_sizes, head_hidden=head_hidden)
            for w in range(n)
        ]
        self.gate = AttentionGate(n)
        self.global_agent = DDPGAgent(
            self.workers[0].representation_dim, env.action_dim, self.hyper,
            stream_rng(master_seed, "init", "global"),
            actor_hidden=head_hidden, critic_hidden=head_hidden,
        )
        self.encoder = AttentionEncoder(
            self.workers, self.gate,
            gains_lr=self.hyper.critic_lr, trunk_lr=self.hyper.critic_lr,
        )
        self.explore = ExplorationSchedule(n, window=window, kappa=kappa,
                                           eps_min=eps_min, eps_max=eps_max)
        self._explore_rng = stream_rng(master_seed, "explore")
        self._replay_rng = stream_rng(master_seed, "replay")
        self._next_worker = 0
        self._episode_count = 0
        self.total_env_steps = 0

    # -- helpers ---------------------------------------------------------------

    def _episode_seed(self, label, index):
        return stream_seed(self.master_seed, label, index)

    def _proposals(self, obs):
        return [w.propose(obs[v]) for v, w in enumerate(self.workers)]

    def _ready(self, agent):
        return len(agent.buffer) >= max(self.hyper.warmup, self.hyper.batch_size)

    # -- stage 1 -----------------------------------------------------------------

    def run_stage1_episode(self, worker_index, episode_seed=None, shaped=True,
                           iteration=0):
        """Worker ``worker_index`` acts on the environment using only its view.

        Every worker proposes an action for each visited state; only the acting
        worker's (noise-perturbed) selection is executed, and the stored reward
        carries the deviation penalty when shaping is on.
        """
        env = self.env
        worker = self.workers[worker_index]
        result = env.reset(episode_seed)
        obs = result.observations
        total_r = total_rc = dev_sum = 0.0
        steps = 0
        while True:
            proposals = self._proposals(obs)
            eps = self.explore.eps_worker(worker_index)
            noise = self._explore_rng.standard_normal(env.action_dim)
            action = np.clip(proposals[worker_index] + eps * noise, -1.0, 1.0)
            dev_vec, dev_mean = deviation(np.column_stack(proposals))
            self.explore.update(dev_vec)
            result = env.step(action)
            reward = result.reward
            stored = reward - self.gamma_r * dev_mean if shaped else reward
            worker.agent.buffer.store(Transition(
                views=[obs[worker_index]], action=action, reward=stored,
                next_views=[result.observations[worker_index]],
                terminal=result.terminal,
            ))
            if self._ready(worker.agent):
                worker.update(self._replay_rng)
            total_r += reward
            total_rc += stored
            dev_sum += dev_mean
            steps += 1
            obs = result.observations
            if result.terminal:
                break
        self.total_env_steps += steps
        return EpisodeStats(
            iteration=iteration, stage=1, episode=self._episode_count,
            agent=f"worker{worker_index}", steps=steps, ret=total_r,
            shaped_ret=total_rc, mean_deviation=dev_sum / steps,
            eps_workers=self.explore.eps_workers.copy(),
            eps_global=self.explore.eps_global,
        )

    # -- stage 2 -----------------------------------------------------------------

    def run_stage2_episode(self, episode_seed=None, iteration=0, phase="train",
                           train=True):
        """The global network acts on the fused state; one joint update per step.

        Gradients from the global critic loss reach the attention gains and the
        workers' trunk layers through the fusion; feature layers stay frozen.
        """
        env = self.env
        agent = self.global_agent
        result = env.reset(episode_seed)
        obs = result.observations
        total_r = total_rc = dev_sum = 0.0
        att_sum = np.zeros(env.n_views)
        steps = 0
        while True:
            state, p = self.encoder.encode_one(obs)
            if self.logger is not None:
                self.logger.attention(phase, self._episode_count, steps, p)
            proposals = self._proposals(obs)
            eps = self.explore.eps_global
            noise = self._explore_rng.standard_normal(env.action_dim)
            action = np.clip(agent.policy(state) + eps * noise, -1.0, 1.0)
            dev_vec, dev_mean = deviation(np.column_stack(proposals))
            self.explore.update(dev_vec)
            result = env.step(action)
            reward = result.reward
            stored = reward - self.gamma_r * dev_mean
            agent.buffer.store(Transition(
                views=list(obs), action=action, reward=stored,
                next_views=list(result.observations), terminal=result.terminal,
            ))
            if train and self._ready(agent):
                batch = agent.buffer.sample(self.hyper.batch_size, self._replay_rng)
                agent.critic_update(batch, self.encoder)
                agent.actor_update(batch, self.encoder)
                agent.update_targets()
            total_r += reward
            total_rc += stored
            dev_sum += dev_mean
            att_sum += p
            steps += 1
            obs = result.observations
            if result.terminal:
                break
        self.total_env_steps += steps
        return EpisodeStats(
            iteration=iteration, stage=2, episode=self._episode_count,
            agent="global", steps=steps, ret=total_r, shaped_ret=total_rc,
            mean_deviation=dev_sum / steps,
            eps_workers=self.explore.eps_workers.copy(),
            eps_global=self.explore.eps_global,
            att_means=att_sum / steps,
        )

    # -- full loop ---------------------------------------------------------------

    def train(self):
        """Run the iteration schedule; returns the per-episode stats in order."""
        stats = []
        out_of_budget = False
        for it in range(1, self.schedule.iterations + 1):
            m_w, m_c = self.schedule.split(it)
            for _ in range(m_w):
                if self._budget_spent():
                    out_of_budget = True
                    break
                w = self._next_worker
                self._next_worker = (self._next_worker + 1) % len(self.workers)
                ep = self.run_stage1_episode(
                    w, self._episode_seed("env", self._episode_count),
                    shaped=(it > 1), iteration=it,
                )
                self._log(ep)
                stats.append(ep)
            for _ in range(m_c):
                if out_of_budget or self._budget_spent():
                    out_of_budget = True
                    break
                ep = self.run_stage2_episode(
                    self._episode_seed("env", self._episode_count), iteration=it,
                )
                self._log(ep)
                stats.append(ep)
            if self.checkpoint_dir and self.checkpoint_every and (
                it % self.checkpoint_every == 0
            ):
                self.save_checkpoint(
                    os.path.join(self.checkpoint_dir, f"iter_{it:04d}")
                )
            if out_of_budget:
                break
        return stats

    def adapt(self, n_steps, phase="adapt"):
        """Extra joint-training steps, e.g. after a view is degraded at test time."""
        stats = []
        start = self.total_env_steps
        index = 0
        while self.total_env_steps - start < n_steps:
            ep = self.run_stage2_episode(
                self._episode_seed("adapt-env", index), phase=phase,
            )
            self._log(ep, phase=phase)
            stats.append(ep)
            index += 1
        return stats

    def _budget_spent(self):
        return (self.max_env_steps is not None
                and self.total_env_steps >= self.max_env_steps)

    def _log(self, ep, phase="train"):
        if self.logger is not None:
            self.logger.episode(ep, phase=phase)
        self._episode_count += 1

    # -- persistence ---------------------------------------------------------------

    def save_checkpoint(self, path):
        save_adrl_bundle(path, self.workers, self.gate, self.global_agent)


def save_adrl_bundle(path, workers, gate, global_agent):
    """Write all online parameters of a multi-view model to a directory.

    Layout: ``manifest.json`` with the dimensions, ``gate.vec`` with the
    gains, ``global_{actor,critic}.net`` and per worker
    ``worker{i}_{features,actor,critic}.net``. Target copies are not stored;
    they are reinitialized from the online parameters on load.
    """
    os.makedirs(path, exist_ok=True)
    manifest = {
        "kind": "adrl",
        "n_workers": len(workers),
        "view_dims": [w.view_dim for w in workers],
        "action_dim": workers[0].action_dim,
        "feature_sizes": list(workers[0].features.sizes[1:]),
        "head_hidden": list(workers[0].agent.actor.sizes[1:-1]),
    }
    with open(os.path.join(path, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    save_vector(gate.gains, os.path.join(path, "gate.vec"))
    save_net(global_agent.actor, os.path.join(path, "global_actor.net"))
    save_net(global_agent.critic, os.path.join(path, "global_critic.net"))
    for i, w in enumerate(workers):
        save_net(w.features, os.path.join(path, f"worker{i}_features.net"))
        save_net(w.agent.actor, os.path.join(path, f"worker{i}_actor.net"))
        save_net(w.agent.critic, os.path.join(path, f"worker{i}_critic.net"))


def load_adrl_bundle(path, hyper=None):
    """Rebuild (workers, gate, global agent) from a saved bundle."""
    hyper = hyper if hyper is not None else AgentHyper()
    with open(os.path.join(path, "manifest.json")) as fh:
        manifest = json.load(fh)
    rng = np.random.default_rng(0)
    workers = []
    for i in range(manifest["n_workers"]):
        w = WorkerAgent(manifest["view_dims"][i], manifest["action_dim"], hyper, rng,
                        feature_sizes=tuple(manifest["feature_sizes"]),
                        head_hidden=tuple(manifest["head_hidden"]))
        w.features.load_state_from(load_net(os.path.join(path, f"worker{i}_features.net")))
        w.agent.actor.load_state_from(load_net(os.path.join(path, f"worker{i}_actor.net")))
        w.agent.critic.load_state_from(load_net(os.path.join(path, f"worker{i}_critic.net")))
        w.agent.actor_pair.target.load_state_from(w.agent.actor)
        w.agent.critic_pair.target.load_state_from(w.agent.critic)
        workers.append(w)
    gate = AttentionGate(manifest["n_workers"])
    gate.gains = load_vector(os.path.join(path, "gate.vec"))
    global_agent = DDPGAgent(workers[0].representation_dim, manifest["action_dim"],
                             hyper, rng,
                             actor_hidden=tuple(manifest["head_hidden"]),
                             critic_hidden=tuple(manifest["head_hidden"]))
    global_agent.actor.load_state_from(load_net(os.path.join(path, "global_actor.net")))
    global_agent.critic.load_state_from(load_net(os.path.join(path, "global_critic.net")))
    global_agent.actor_pair.target.load_state_from(global_agent.actor)
    global_agent.critic_pair.target.load_state_from(global_agent.critic)
    return workers, gate, global_agent
