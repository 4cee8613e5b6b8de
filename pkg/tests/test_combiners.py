"""Action/feature combination baselines against brute-force oracles."""

import numpy as np
import pytest

from mvrl.combiners import combine_avg, combine_cnt, combine_mjv, concat_features


def brute_medoid(actions):
    """Exhaustive argmin of total squared distance, lowest index on ties."""
    best, best_cost = None, None
    for i, a in enumerate(actions):
        cost = 0.0
        for b in actions:
            cost += sum((float(x) - float(y)) ** 2 for x, y in zip(a, b))
        if best_cost is None or cost < best_cost:
            best, best_cost = i, cost
    return np.asarray(actions[best], dtype=np.float64)


def brute_mjv(actions, bins=10):
    """Plain-loop majority binning over [-1, 1] per dimension."""
    actions = [list(map(float, a)) for a in actions]
    d = len(actions[0])
    out = []
    width = 2.0 / bins
    for j in range(d):
        values = [a[j] for a in actions]
        members = {b: [] for b in range(bins)}
        for v in values:
            b = int((v + 1.0) / width)
            if b == bins:  # v == 1.0 belongs to the last bin
                b = bins - 1
            members[b].append(v)
        winner = max(range(bins), key=lambda b: (len(members[b]), -b))
        out.append(sum(members[winner]) / len(members[winner]))
    return np.array(out)


class TestAverage:
    def test_identical_actions(self):
        a = np.array([0.3, -0.7])
        np.testing.assert_allclose(combine_avg([a, a, a]), a, rtol=0, atol=1e-12)

    def test_two_corners(self):
        got = combine_avg([np.array([1.0, 0.0]), np.array([0.0, 1.0])])
        np.testing.assert_array_equal(got, [0.5, 0.5])

    def test_mean_in_componentwise_hull(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            acts = rng.uniform(-1, 1, size=(4, 3))
            m = combine_avg(acts)
            assert np.all(m >= acts.min(axis=0)) and np.all(m <= acts.max(axis=0))


class TestMedoid:
    def test_identical_actions_index_zero(self):
        a = np.array([0.1, 0.2])
        np.testing.assert_array_equal(combine_cnt([a, a.copy(), a.copy()]), a)

    def test_central_member(self):
        acts = [np.array([0.0, 0.0]), np.array([1.0, 0.0]), np.array([0.1, 0.0])]
        np.testing.assert_array_equal(combine_cnt(acts), [0.1, 0.0])

    def test_matches_brute_force(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            n = int(rng.integers(1, 7))
            d = int(rng.integers(1, 5))
            acts = rng.uniform(-1, 1, size=(n, d))
            np.testing.assert_array_equal(combine_cnt(acts), brute_medoid(acts))

    def test_output_is_member(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            acts = rng.uniform(-1, 1, size=(5, 2))
            out = combine_cnt(acts)
            assert any(np.array_equal(out, a) for a in acts)


class TestMajorityVote:
    def test_identical_actions(self):
        a = np.array([-0.4, 0.9])
        np.testing.assert_allclose(combine_mjv([a, a, a]), a, rtol=0, atol=1e-12)

    def test_manual_binning_example(self):
        # Values -0.95 and -0.92 share the first bin [-1, -0.8); 0.8 is alone.
        acts = [np.array([-0.95]), np.array([-0.92]), np.array([0.8])]
        np.testing.assert_allclose(combine_mjv(acts), [-0.935], rtol=1e-15)

    def test_boundary_value_one_in_last_bin(self):
        acts = [np.array([1.0]), np.array([0.95]), np.array([-0.5])]
        np.testing.assert_allclose(combine_mjv(acts), [0.975])

    def test_tie_takes_lowest_bin(self):
        acts = [np.array([-0.9]), np.array([0.9])]
        np.testing.assert_array_equal(combine_mjv(acts), [-0.9])

    def test_output_inside_winning_bin(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            acts = rng.uniform(-1, 1, size=(5, 3))
            out = combine_mjv(acts)
            for j in range(3):
                b = min(int((out[j] + 1.0) / 0.2), 9)
                values = acts[:, j]
                votes = np.minimum(((values + 1.0) / 0.2).astype(int), 9)
                counts = np.bincount(votes, minlength=10)
                assert counts[b] == counts.max()

    def test_matches_brute_force(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            n = int(rng.integers(1, 7))
            d = int(rng.integers(1, 5))
            acts = rng.uniform(-1, 1, size=(n, d))
            np.testing.assert_allclose(combine_mjv(acts), brute_mjv(acts), atol=1e-15)

    def test_out_of_box_rejected(self):
        with pytest.raises(ValueError):
            combine_mjv([np.array([1.5])])


class TestConcat:
    def test_single_view_identity(self):
        v = np.array([1.0, -2.0, 3.0])
        np.testing.assert_array_equal(concat_features([v]), v)

    def test_ordered_concatenation(self):
        got = concat_features([np.array([1.0, 2.0]), np.array([3.0])])
        np.testing.assert_array_equal(got, [1.0, 2.0, 3.0])

    def test_slice_back_roundtrip(self):
        rng = np.random.default_rng(5)
        feats = [rng.normal(size=int(rng.integers(1, 6))) for _ in range(4)]
        flat = concat_features(feats)
        offset = 0
        for f in feats:
            np.testing.assert_array_equal(flat[offset:offset + f.size], f)
            offset += f.size
        assert offset == flat.size

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            concat_features([])


class TestPermutationBehavior:
    def test_avg_is_permutation_invariant(self):
        rng = np.random.default_rng(6)
        acts = rng.uniform(-1, 1, size=(5, 3))
        perm = rng.permutation(5)
        np.testing.assert_allclose(combine_avg(acts), combine_avg(acts[perm]), rtol=1e-12)

    def test_cnt_permutation_changes_only_tie_breaks(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            acts = rng.uniform(-1, 1, size=(5, 2))
            perm = rng.permutation(5)
            a = combine_cnt(acts)
            b = combine_cnt(acts[perm])
            # costs are permutation invariant, so the chosen costs must match
            def cost(x):
                return np.sum((acts - x) ** 2)
            assert abs(cost(a) - cost(b)) <= 1e-9


def test_empty_action_set_rejected():
    with pytest.raises(ValueError):
        combine_avg([])
    with pytest.raises(ValueError):
        combine_cnt([])
