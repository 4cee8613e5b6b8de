"""Deterministic-policy actor-critic learner with a replay ring.

One agent class serves three roles: the per-view worker engine (stage 1),
the global network trained on fused features (stage 2), and the single-view
baseline. What varies between them is the *state encoder*, an object that
maps stored per-view observations to the agent's state vector and routes
state gradients back into its own trainable parameters (if any).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import Adam, TargetPair, mlp


@dataclass(eq=False)
class Transition:
    """One environment step as stored in replay.

    ``views`` holds the raw per-view observations (a singleton list for
    single-view agents); the fused or encoded state is recomputed from
    current parameters at sampling time. Transitions compare by identity.
    """

    views: list
    action: np.ndarray
    reward: float
    next_views: list
    terminal: bool


class ReplayBuffer:
    """Fixed-capacity FIFO ring with uniform with-replacement sampling."""

    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = int(capacity)
        self._data = []
        self._next = 0

    def __len__(self):
        return len(self._data)

    def store(self, transition):
        if len(self._data) < self.capacity:
            self._data.append(transition)
        else:
            self._data[self._next] = transition
        self._next = (self._next + 1) % self.capacity

    def sample(self, n, rng):
        if n < 1:
            raise ValueError("batch size must be at least 1")
        if n > len(self._data):
            raise ValueError(f"buffer underfull: have {len(self._data)}, asked for {n}")
        idx = rng.integers(0, len(self._data), size=n)
        return [self._data[i] for i in idx]

    def contents(self):
        return list(self._data)


@dataclass
class AgentHyper:
    """Learner hyperparameters. Defaults follow the experiment setup."""

    gamma: float = 0.99
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    batch_size: int = 32
    tau: float = 0.001
    replay_capacity: int = 100_000
    warmup: int = 1000
    eps: float = 0.05

    def __post_init__(self):
        problems = []
        if not 0.0 <= self.gamma < 1.0:
            problems.append(f"gamma must be in [0, 1), got {self.gamma}")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            problems.append("learning rates must be positive")
        if self.batch_size < 1:
            problems.append("batch size must be at least 1")
        if not 0.0 < self.tau <= 1.0:
            problems.append(f"tau must be in (0, 1], got {self.tau}")
        if self.eps < 0:
            problems.append("exploration scale must be nonnegative")
        if problems:
            raise ValueError("; ".join(problems))


def stack_views(batch):
    """Per-view observation matrices for a list of transitions."""
    n_views = len(batch[0].views)
    views = [np.stack([t.views[v] for t in batch]) for v in range(n_views)]
    next_views = [np.stack([t.next_views[v] for t in batch]) for v in range(n_views)]
    actions = np.stack([t.action for t in batch])
    rewards = np.array([t.reward for t in batch], dtype=np.float64)
    terminals = np.array([t.terminal for t in batch], dtype=np.float64)
    return views, actions, rewards, next_views, terminals


class IdentityEncoder:
    """State = one raw view, no trainable parameters."""

    def __init__(self, state_dim, view_index=0):
        self.state_dim = state_dim
        self.view_index = view_index

    def encode(self, views):
        return views[self.view_index]

    def encode_training(self, views):
        return views[self.view_index]

    def backward_and_step(self, dstate):
        pass

    def encode_one(self, obs_list):
        return np.asarray(obs_list[self.view_index], dtype=np.float64)


class ConcatEncoder:
    """State = ordered concatenation of every view (the feature-combination baseline)."""

    def __init__(self, view_dims):
        self.view_dims = list(view_dims)
        self.state_dim = sum(self.view_dims)

    def encode(self, views):
        return np.hstack(views)

    def encode_training(self, views):
        return np.hstack(views)

    def backward_and_step(self, dstate):
        pass

    def encode_one(self, obs_list):
        return np.concatenate([np.asarray(o, dtype=np.float64) for o in obs_list])


class DDPGAgent:
    """Actor mu(s) and critic Q(s, a) with target copies and replay.

    The critic regresses the one-step bootstrap target; the actor ascends
    the critic's action gradient through its own parameters. Encoders are
    trained on the critic step only, never on the actor step.
    """

    def __init__(self, state_dim, action_dim, hyper, rng,
                 actor_hidden=(64, 64), critic_hidden=(64, 64)):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.hyper = hyper
        self.actor = mlp([state_dim, *actor_hidden, action_dim], "tanh", rng)
        self.critic = mlp([state_dim + action_dim, *critic_hidden, 1], "identity", rng)
        self.actor_pair = TargetPair(self.actor, hyper.tau)
        self.critic_pair = TargetPair(self.critic, hyper.tau)
        self.actor_opt = Adam(self.actor.params(), hyper.actor_lr)
        self.critic_opt = Adam(self.critic.params(), hyper.critic_lr)
        self.buffer = ReplayBuffer(hyper.replay_capacity)

    @property
    def actor_target(self):
        return self.actor_pair.target

    @property
    def critic_target(self):
        return self.critic_pair.target

    # -- acting -------------------------------------------------------------

    def policy(self, state):
        return self.actor.forward(np.asarray(state, dtype=np.float64))

    def q_value(self, state, action):
        x = np.concatenate([np.asarray(state, np.float64), np.asarray(action, np.float64)])
        return float(self.critic.forward(x)[0])

    def select_action(self, state, eps, rng):
        """clip(mu(s) + eps * z, -1, 1) with z standard normal per dimension."""
        if eps < 0:
            raise ValueError("exploration scale must be nonnegative")
        action = self.policy(state)
        if eps > 0:
            action = action + eps * rng.standard_normal(self.action_dim)
        return np.clip(action, -1.0, 1.0)

    # -- learning -----------------------------------------------------------

    def critic_update(self, batch, encoder):
        """One squared-Bellman-residual step; returns the batch mean loss.

        Gradients flow into the critic and, through the state input, into the
        encoder. The bootstrap side (next state, target nets) is held fixed,
        and terminal transitions drop the bootstrap term entirely.
        """
        if not batch:
            raise ValueError("empty batch")
        n = len(batch)
        views, actions, rewards, next_views, terminals = stack_views(batch)
        state = encoder.encode_training(views)
        next_state = encoder.encode(next_views)
        next_action = self.actor_target.forward(next_state)
        next_q = self.critic_target.forward(np.hstack([next_state, next_action]))[:, 0]
        target = rewards + self.hyper.gamma * (1.0 - terminals) * next_q
        q, trace = self.critic.forward_trace(np.hstack([state, actions]))
        residual = q[:, 0] - target
        loss = float(np.mean(residual**2))
        dq = (2.0 / n) * residual[:, None]
        grads, dinput = self.critic.backward(trace, dq)
        self.critic_opt.step(self.critic.params(), grads)
        encoder.backward_and_step(dinput[:, : self.state_dim])
        return loss

    def actor_update(self, batch, encoder):
        """One ascent step along grad_a Q chained through the actor.

        Returns the batch mean Q(s, mu(s)) before the step. The encoder is
        treated as a fixed input map here.
        """
        if not batch:
            raise ValueError("empty batch")
        n = len(batch)
        views, _, _, _, _ = stack_views(batch)
        state = encoder.encode(views)
        action, atrace = self.actor.forward_trace(state)
        q, ctrace = self.critic.forward_trace(np.hstack([state, action]))
        mean_q = float(q.mean())
        _, dinput = self.critic.backward(ctrace, np.full((n, 1), 1.0 / n))
        daction = dinput[:, self.state_dim :]
        grads, _ = self.actor.backward(atrace, daction)
        self.actor_opt.step(self.actor.params(), [-g for g in grads])
        return mean_q

    def update_targets(self):
        self.actor_pair.update()
        self.critic_pair.update()
