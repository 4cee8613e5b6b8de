"""Per-view worker: feature layers shared by an actor head and a critic head.

The feature stack is view-dependent (it is frozen during joint training);
the actor and critic heads are task-dependent. A worker's own learning is
plain deterministic-policy-gradient training where the state encoder is the
feature stack, trained alongside the critic.
"""

from __future__ import annotations

import numpy as np

from .ddpg import DDPGAgent
from .nn import Adam, DenseNet


class FeatureEncoder:
    """State encoder backed by a feature network, trained on the critic step."""

    def __init__(self, net, lr):
        self.net = net
        self.state_dim = net.out_dim
        self.opt = Adam(net.params(), lr)
        self._trace = None

    def encode(self, views):
        return self.net.forward(views[0])

    def encode_training(self, views):
        state, self._trace = self.net.forward_trace(views[0])
        return state

    def backward_and_step(self, dstate):
        if self._trace is None:
            raise ValueError("no recorded forward pass to backprop through")
        trace, self._trace = self._trace, None
        grads, _ = self.net.backward(trace, dstate)
        self.opt.step(self.net.params(), grads)

    def encode_one(self, obs_list):
        return self.net.forward(np.asarray(obs_list[0], dtype=np.float64))


class WorkerAgent:
    """One view's network stack plus its training engine.

    ``features`` maps the view observation to the worker's feature vector;
    the agent's actor and critic heads consume that vector. The actor's
    hidden trunk output doubles as the representation fed into attention
    fusion.
    """

    def __init__(self, view_dim, action_dim, hyper, rng,
                 feature_sizes=(32, 32), head_hidden=(64, 64)):
        self.view_dim = view_dim
        self.action_dim = action_dim
        self.features = DenseNet(
            [view_dim, *feature_sizes], ["relu"] * len(feature_sizes), rng
        )
        self.agent = DDPGAgent(
            self.features.out_dim, action_dim, hyper, rng,
            actor_hidden=head_hidden, critic_hidden=head_hidden,
        )
        self.encoder = FeatureEncoder(self.features, hyper.critic_lr)

    @property
    def representation_dim(self):
        """Width of the actor trunk output used by attention fusion."""
        return self.agent.actor.sizes[-2]

    def propose(self, obs):
        """Deterministic action for this worker's view of the current state."""
        return self.agent.actor.forward(self.features.forward(np.asarray(obs, np.float64)))

    def representation(self, obs):
        phi = self.features.forward(np.asarray(obs, dtype=np.float64))
        return self.agent.actor.forward(phi, 0, self.agent.actor.n_layers - 1)

    def q_value(self, obs, action):
        phi = self.features.forward(np.asarray(obs, dtype=np.float64))
        return self.agent.q_value(phi, action)

    def gate_value(self, obs):
        """This worker's critic at its own state and proposed action."""
        phi = self.features.forward(np.asarray(obs, dtype=np.float64))
        action = self.agent.actor.forward(phi)
        return self.agent.q_value(phi, action)

    def select_action(self, obs, eps, rng):
        phi = self.features.forward(np.asarray(obs, dtype=np.float64))
        return self.agent.select_action(phi, eps, rng)

    def update(self, rng):
        """One critic step then one actor step on a replayed batch."""
        batch = self.agent.buffer.sample(self.agent.hyper.batch_size, rng)
        loss = self.agent.critic_update(batch, self.encoder)
        mean_q = self.agent.actor_update(batch, self.encoder)
        self.agent.update_targets()
        return loss, mean_q
