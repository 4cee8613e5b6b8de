"""Action and feature combination rules for the multi-view ablation baselines.

All functions are pure and stateless. Tie breaking is always lowest index
(or lowest bin).
"""

from __future__ import annotations

import numpy as np

MJV_BINS = 10


def _action_matrix(actions):
    if len(actions) == 0:
        raise ValueError("empty action set")
    a = np.asarray(actions, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError("actions must share one dimensionality")
    return a


def combine_avg(actions):
    """Componentwise arithmetic mean of the workers' actions."""
    return _action_matrix(actions).mean(axis=0)


def combine_cnt(actions):
    """The member action with least total squared distance to all others (medoid)."""
    a = _action_matrix(actions)
    diffs = a[:, None, :] - a[None, :, :]
    costs = np.sum(diffs**2, axis=(1, 2))
    return a[int(np.argmin(costs))].copy()


def combine_mjv(actions, bins=MJV_BINS):
    """Per-dimension majority vote over equal bins of [-1, 1].

    Each dimension is split into ``bins`` equal intervals (the last one
    right-closed at 1); the bin holding the most workers' values wins and
    the returned component is the mean of the values inside it.
    """
    a = _action_matrix(actions)
    if np.any(a < -1.0) or np.any(a > 1.0):
        raise ValueError("actions must lie in [-1, 1] per dimension")
    n, d = a.shape
    width = 2.0 / bins
    out = np.empty(d)
    idx = np.minimum(((a + 1.0) / width).astype(int), bins - 1)
    for j in range(d):
        counts = np.bincount(idx[:, j], minlength=bins)
        winner = int(np.argmax(counts))
        members = a[idx[:, j] == winner, j]
        out[j] = members.mean()
    return out


def concat_features(features):
    """Ordered concatenation of per-view feature vectors."""
    feats = [np.asarray(f, dtype=np.float64) for f in features]
    if len(feats) == 0:
        raise ValueError("no features to concatenate")
    for f in feats:
        if f.ndim != 1:
            raise ValueError("features must be vectors")
    return np.concatenate(feats)


COMBINERS = {
    "ACT-AVG": combine_avg,
    "ACT-CNT": combine_cnt,
    "ACT-MJV": combine_mjv,
}
