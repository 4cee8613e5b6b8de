"""Critic-gated softmax attention over per-view worker features.

Each worker's critic, evaluated at the worker's own state and proposed
action, gives a gate value; a learnable per-worker gain scales it and a
softmax over gain * gate produces the blend weights for fusing the workers'
feature representations into the single state the global network consumes.

Per-step attention weights are exported to the experiment log so runs with
degraded views can be analyzed after the fact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Adam

# |gain * gate| is clamped here before exponentiation so the softmax stays
# finite no matter how large critic values grow.
GATE_CLAMP = 50.0


def attention_weights(f, g):
    """Softmax of the elementwise product g * f, max-subtracted for safety.

    ``f`` may be a vector (one step) or an (n, N_w) matrix (a batch); ``g``
    is always the (N_w,) gain vector. Weights are strictly positive and sum
    to one along the worker axis.
    """
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if f.size == 0 or g.size == 0:
        raise ValueError("empty gate input")
    single = f.ndim == 1
    fm = f[None, :] if single else f
    if fm.shape[1] != g.shape[0]:
        raise ValueError(f"{fm.shape[1]} gate values but {g.shape[0]} gains")
    z = np.clip(fm * g, -GATE_CLAMP, GATE_CLAMP)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    return p[0] if single else p


def attention_weights_backward(f, g, p, dp):
    """Gradient of a scalar loss with respect to the gains.

    ``dp`` holds dL/dp with the same shape as ``p``. Gate values are treated
    as constants (no gradient flows back into worker critics); entries where
    the clamp was active contribute nothing.
    """
    f = np.atleast_2d(np.asarray(f, dtype=np.float64))
    p2 = np.atleast_2d(np.asarray(p, dtype=np.float64))
    dp2 = np.atleast_2d(np.asarray(dp, dtype=np.float64))
    dz = p2 * (dp2 - np.sum(p2 * dp2, axis=1, keepdims=True))
    live = (np.abs(f * g) < GATE_CLAMP).astype(np.float64)
    return np.sum(dz * f * live, axis=0)


@dataclass
class FusedState:
    """Blended representation plus the per-worker features it combined."""

    x: np.ndarray
    features: list


def fuse(features, p):
    """x = sum_w p_w * x_w. Each weight is a scalar broadcast over coordinates."""
    feats = [np.asarray(x, dtype=np.float64) for x in features]
    p = np.asarray(p, dtype=np.float64)
    if len(feats) == 0:
        raise ValueError("no features to fuse")
    if len(feats) != p.shape[0]:
        raise ValueError(f"{len(feats)} feature vectors but {p.shape[0]} weights")
    dim = feats[0].shape
    for x in feats[1:]:
        if x.shape != dim:
            raise ValueError("feature vectors must share one dimension")
    x = np.zeros(dim)
    for w, xw in zip(p, feats):
        x += w * xw
    return FusedState(x=x, features=feats)


def gate_values(workers, observations):
    """f_w = Q_w(s_w, mu_w(s_w)), each worker judged on its own view and action."""
    if len(workers) != len(observations):
        raise ValueError(f"{len(workers)} workers but {len(observations)} observations")
    return np.array([w.gate_value(obs) for w, obs in zip(workers, observations)])


class AttentionGate:
    """Learnable per-worker gains plus the last gate values and weights seen."""

    def __init__(self, n_workers):
        if n_workers < 1:
            raise ValueError("need at least one worker")
        self.gains = np.ones(n_workers)
        self.last_values = np.zeros(n_workers)
        self.last_weights = np.full(n_workers, 1.0 / n_workers)

    def compute(self, f):
        p = attention_weights(f, self.gains)
        self.last_values = np.asarray(f, dtype=np.float64).copy()
        self.last_weights = p.copy() if p.ndim == 1 else p.mean(axis=0)
        return p


class AttentionEncoder:
    """Fused-state encoder for the global agent.

    Forward: per view, run the (frozen) feature layers, then the worker
    actor's hidden trunk to get x_w; gate values come from each worker's own
    critic and proposal and are detached from the gradient. Backward routes
    state gradients into the gains and, through the fusion, into the workers'
    task-dependent trunk layers; the view-dependent feature layers never
    receive updates here.
    """

    def __init__(self, workers, gate, gains_lr=1e-3, trunk_lr=1e-3, train_trunks=True):
        self.workers = list(workers)
        self.gate = gate
        self.train_trunks = train_trunks
        trunk_hi = self.workers[0].agent.actor.n_layers - 1
        self.trunk_hi = trunk_hi
        self.state_dim = self.workers[0].agent.actor.sizes[trunk_hi]
        self.gains_opt = Adam([gate.gains], gains_lr)
        self.trunk_opts = [
            Adam(w.agent.actor.params(0, trunk_hi), trunk_lr) for w in self.workers
        ]
        self._tape = None

    # -- forward -------------------------------------------------------------

    def _gate_matrix(self, views):
        cols = []
        for w, obs in zip(self.workers, views):
            phi = w.features.forward(obs)
            action = w.agent.actor.forward(phi)
            q = w.agent.critic.forward(np.hstack([phi, action]))
            cols.append(q[:, 0])
        return np.column_stack(cols)

    def encode(self, views, with_weights=False):
        feats = [
            w.agent.actor.forward(w.features.forward(obs), 0, self.trunk_hi)
            for w, obs in zip(self.workers, views)
        ]
        f = self._gate_matrix(views)
        p = attention_weights(f, self.gate.gains)
        x = np.zeros_like(feats[0])
        for i in range(len(feats)):
            x += p[:, i : i + 1] * feats[i]
        return (x, p) if with_weights else x

    def encode_training(self, views):
        feats, traces = [], []
        for w, obs in zip(self.workers, views):
            phi = w.features.forward(obs)
            xw, tr = w.agent.actor.forward_trace(phi, 0, self.trunk_hi)
            feats.append(xw)
            traces.append(tr)
        f = self._gate_matrix(views)
        p = self.gate.compute(f)
        x = np.zeros_like(feats[0])
        for i in range(len(feats)):
            x += p[:, i : i + 1] * feats[i]
        self._tape = {"features": feats, "traces": traces, "f": f, "p": p}
        return x

    def encode_one(self, obs_list):
        """Single-step fusion; returns (state vector, weight vector)."""
        views = [np.asarray(o, dtype=np.float64)[None, :] for o in obs_list]
        x, p = self.encode(views, with_weights=True)
        return x[0], p[0]

    # -- backward ------------------------------------------------------------

    def backward_and_step(self, dstate):
        if self._tape is None:
            raise ValueError("no recorded forward pass to backprop through")
        tape, self._tape = self._tape, None
        feats, f, p = tape["features"], tape["f"], tape["p"]
        dp = np.column_stack([np.sum(xw * dstate, axis=1) for xw in feats])
        dgains = attention_weights_backward(f, self.gate.gains, p, dp)
        self.gains_opt.step([self.gate.gains], [dgains])
        if not self.train_trunks:
            return
        for i, w in enumerate(self.workers):
            dxw = p[:, i : i + 1] * dstate
            grads, _ = w.agent.actor.backward(tape["traces"][i], dxw)
            self.trunk_opts[i].step(w.agent.actor.params(0, self.trunk_hi), grads)
