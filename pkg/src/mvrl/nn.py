"""Dense network substrate: forward/backward passes, Adam, target blending.

Everything is float64 numpy. A network is an ordered list of fully connected
layers with relu / tanh / identity activations; gradients are computed layer
by layer from a stored forward trace (no general autodiff graph). Inputs may
be single vectors or (batch, dim) matrices.

Snapshot format (text, one file per network)::

    mvrl-net 1
    layers <L>
    layer <out> <in> <activation>
    <out lines of <in> weight values, row-major>
    <one line of <out> bias values>
    ... repeated per layer ...

Values are written with ``repr`` so reload is bit-exact.
"""

from __future__ import annotations

import hashlib

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity")


def _act(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _act_grad(z, kind):
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    if kind == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    return np.ones_like(z)


class DenseNet:
    """Chain of fully connected layers, weights in the (out, in) convention.

    Initialization is uniform in +-1/sqrt(fan_in) for weights and biases.
    """

    def __init__(self, sizes, activations, rng):
        if len(sizes) < 2:
            raise ValueError("need at least an input and an output size")
        if len(activations) != len(sizes) - 1:
            raise ValueError(
                f"expected {len(sizes) - 1} activations, got {len(activations)}"
            )
        for act in activations:
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        self.sizes = [int(s) for s in sizes]
        self.activations = list(activations)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    # -- structure ---------------------------------------------------------

    @property
    def n_layers(self):
        return len(self.weights)

    @property
    def in_dim(self):
        return self.sizes[0]

    @property
    def out_dim(self):
        return self.sizes[-1]

    @property
    def num_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def params(self, lo=0, hi=None):
        """Live parameter arrays for layers [lo, hi), ordered W0, b0, W1, b1, ..."""
        hi = self.n_layers if hi is None else hi
        out = []
        for i in range(lo, hi):
            out.append(self.weights[i])
            out.append(self.biases[i])
        return out

    def copy(self):
        clone = object.__new__(DenseNet)
        clone.sizes = list(self.sizes)
        clone.activations = list(self.activations)
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def load_state_from(self, other):
        for mine, theirs in zip(self.params(), other.params()):
            if mine.shape != theirs.shape:
                raise ValueError("network shapes differ")
            mine[...] = theirs

    # -- forward / backward ------------------------------------------------

    def forward(self, x, lo=0, hi=None):
        y, _ = self._run(x, lo, hi, want_trace=False)
        return y

    def forward_trace(self, x, lo=0, hi=None):
        """Forward pass that keeps the per-layer inputs and pre-activations."""
        return self._run(x, lo, hi, want_trace=True)

    def _run(self, x, lo, hi, want_trace):
        hi = self.n_layers if hi is None else hi
        if not 0 <= lo < hi <= self.n_layers:
            raise ValueError(f"bad layer range [{lo}, {hi})")
        h = np.asarray(x, dtype=np.float64)
        single = h.ndim == 1
        if single:
            h = h[None, :]
        if h.ndim != 2 or h.shape[1] != self.sizes[lo]:
            raise ValueError(
                f"input shape {np.shape(x)} does not match layer {lo} width {self.sizes[lo]}"
            )
        inputs, preacts = [], []
        with np.errstate(over="ignore", invalid="ignore"):
            for i in range(lo, hi):
                if want_trace:
                    inputs.append(h)
                z = h @ self.weights[i].T + self.biases[i]
                if want_trace:
                    preacts.append(z)
                h = _act(z, self.activations[i])
        if not np.all(np.isfinite(h)):
            raise FloatingPointError("non-finite values in forward pass")
        y = h[0] if single else h
        if not want_trace:
            return y, None
        return y, {"lo": lo, "hi": hi, "inputs": inputs, "preacts": preacts, "single": single}

    def backward(self, trace, dout):
        """Backprop through the traced range.

        Returns (grads, dx): grads match ``params(lo, hi)`` ordering, dx is
        the loss gradient with respect to the range input.
        """
        lo, hi = trace["lo"], trace["hi"]
        d = np.asarray(dout, dtype=np.float64)
        if trace["single"] and d.ndim == 1:
            d = d[None, :]
        if d.shape != (trace["inputs"][0].shape[0], self.sizes[hi]):
            raise ValueError(f"upstream gradient shape {d.shape} does not match output")
        grads_rev = []
        with np.errstate(over="ignore", invalid="ignore"):
            for i in range(hi - 1, lo - 1, -1):
                z = trace["preacts"][i - lo]
                dz = d * _act_grad(z, self.activations[i])
                grads_rev.append(dz.sum(axis=0))          # db
                grads_rev.append(dz.T @ trace["inputs"][i - lo])  # dW
                d = dz @ self.weights[i]
        grads = grads_rev[::-1]
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite values in backward pass")
        dx = d[0] if trace["single"] else d
        return grads, dx


def mlp(sizes, out_activation, rng, hidden_activation="relu"):
    """Convenience builder: hidden layers share one activation."""
    acts = [hidden_activation] * (len(sizes) - 2) + [out_activation]
    return DenseNet(sizes, acts, rng)


# -- optimization ------------------------------------------------------------


class Adam:
    """Adaptive-moment optimizer over a list of parameter arrays."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ValueError("step size must be positive")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise ValueError("parameter/gradient count does not match optimizer state")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if p.shape != g.shape:
                raise ValueError("parameter/gradient shape mismatch")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def soft_update(online, target, tau):
    """target <- tau * online + (1 - tau) * target, elementwise."""
    if not 0.0 < tau <= 1.0:
        raise ValueError("blend rate tau must be in (0, 1]")
    for o, t in zip(online.params(), target.params()):
        if o.shape != t.shape:
            raise ValueError("online/target shapes differ")
        t *= 1.0 - tau
        t += tau * o


class TargetPair:
    """An online network tracked by a slowly blended target copy."""

    def __init__(self, online, tau):
        if not 0.0 < tau <= 1.0:
            raise ValueError("blend rate tau must be in (0, 1]")
        self.online = online
        self.target = online.copy()
        self.tau = tau

    def update(self):
        soft_update(self.online, self.target, self.tau)


# -- persistence -------------------------------------------------------------

SNAPSHOT_MAGIC = "mvrl-net"
SNAPSHOT_VERSION = 1


def _parse_values(line):
    return np.array([float(tok) for tok in line.split()], dtype=np.float64)


def save_net(net, path):
    lines = [f"{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION}", f"layers {net.n_layers}"]
    for w, b, act in zip(net.weights, net.biases, net.activations):
        lines.append(f"layer {w.shape[0]} {w.shape[1]} {act}")
        for row in w:
            lines.append(" ".join(repr(float(v)) for v in row))
        lines.append(" ".join(repr(float(v)) for v in b))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_net(path):
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    magic = lines[0].split()
    if magic[0] != SNAPSHOT_MAGIC or int(magic[1]) != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot header {lines[0]!r}")
    n_layers = int(lines[1].split()[1])
    net = object.__new__(DenseNet)
    net.weights, net.biases, net.activations = [], [], []
    cursor = 2
    for _ in range(n_layers):
        _, out_s, in_s, act = lines[cursor].split()
        out_n, in_n = int(out_s), int(in_s)
        cursor += 1
        rows = [_parse_values(lines[cursor + r]) for r in range(out_n)]
        cursor += out_n
        bias = _parse_values(lines[cursor])
        cursor += 1
        w = np.vstack(rows)
        if w.shape != (out_n, in_n) or bias.shape != (out_n,):
            raise ValueError("snapshot layer data does not match its header")
        net.weights.append(w)
        net.biases.append(bias)
        net.activations.append(act)
    net.sizes = [net.weights[0].shape[1]] + [w.shape[0] for w in net.weights]
    return net


def save_vector(vec, path):
    with open(path, "w") as fh:
        fh.write(f"mvrl-vec {SNAPSHOT_VERSION}\n")
        fh.write(" ".join(repr(float(v)) for v in np.asarray(vec).ravel()) + "\n")


def load_vector(path):
    with open(path) as fh:
        header = fh.readline().split()
        if header[0] != "mvrl-vec":
            raise ValueError("not a vector snapshot")
        return _parse_values(fh.readline())


def params_digest(*nets):
    """Stable hash of all parameters, for frozen-layer checks."""
    h = hashlib.blake2s()
    for net in nets:
        arrays = net.params() if hasattr(net, "params") else [np.asarray(net)]
        for arr in arrays:
            h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()
