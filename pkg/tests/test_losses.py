import math
import unittest

import numpy as np

from src.analysis.distances import distance
from src.analysis.losses import (
    CarolConfig, carol_loss, combined_loss, exact_class_separation, recon_loss, sampled_pair_means,
)
from src.errors import ConfigError, DataError


def brute_force_carol(embeddings, labels, kind):
    size = len(labels)
    total, pairs = 0.0, 0
    for i in range(size):
        for j in range(i + 1, size):
            d = distance(kind, embeddings[i], embeddings[j])
            if labels[i] == labels[j]:
                total += d * (1.0 / (size - 1) + 1.0)
            else:
                total -= d
            pairs += 1
    return total / pairs


def chebyshev_gap(embeddings):
    """Smallest margin between the largest and second largest |a_i - b_i| over all row pairs."""
    gaps = []
    for i in range(len(embeddings)):
        for j in range(i + 1, len(embeddings)):
            top = np.sort(np.abs(embeddings[i] - embeddings[j]))[-2:]
            gaps.append(top[1] - top[0])
    return min(gaps)


def brute_force_separation(embeddings, labels, kind):
    first = [e for e, l in zip(embeddings, labels) if l == 0]
    second = [e for e, l in zip(embeddings, labels) if l == 1]
    inter = sum(distance(kind, a, b) for a in first for b in second) / (len(first) * len(second))
    intra = 0.0
    for members in (first, second):
        intra += sum(distance(kind, a, b) for a in members for b in members) / len(members) ** 2
    return inter, intra, inter - intra


class TestReconLoss(unittest.TestCase):
    def test_uniform_entropy(self):
        q = np.full(4, 0.25)
        loss, _ = recon_loss(q, np.ones(4))
        self.assertAlmostEqual(loss, math.log(4), places=12)

    def test_one_hot_target(self):
        q = np.array([0.9, 0.05, 0.05])
        loss, grad = recon_loss(q, np.array([2.0, 0.0, 0.0]))
        self.assertAlmostEqual(loss, -math.log(0.9), places=12)
        np.testing.assert_allclose(grad, [-1 / 0.9, 0.0, 0.0])

    def test_clamped_entries_get_zero_gradient(self):
        q = np.array([0.0, 1.0])
        loss, grad = recon_loss(q, np.array([1.0, 1.0]))
        self.assertAlmostEqual(loss, -0.5 * math.log(1e-12), places=8)
        self.assertEqual(grad[0], 0.0)
        self.assertAlmostEqual(grad[1], -0.5)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            dim = int(rng.integers(2, 65))
            q = rng.uniform(0.05, 1.0, size=dim)
            x = rng.integers(0, 4, size=dim).astype(float)
            x[0] += 1
            _, grad = recon_loss(q, x)
            h = 1e-5
            for i in range(dim):
                step = np.zeros(dim)
                step[i] = h
                numeric = (recon_loss(q + step, x)[0] - recon_loss(q - step, x)[0]) / (2 * h)
                self.assertAlmostEqual(grad[i], numeric, delta=1e-4 * max(1.0, abs(numeric)))

    def test_batch_is_mean_of_rows(self):
        rng = np.random.default_rng(9)
        q = rng.dirichlet(np.ones(5), size=3)
        x = rng.integers(1, 4, size=(3, 5)).astype(float)
        loss, grad = recon_loss(q, x)
        rows = [recon_loss(q[i], x[i]) for i in range(3)]
        self.assertAlmostEqual(loss, np.mean([r[0] for r in rows]), places=12)
        np.testing.assert_allclose(grad, np.vstack([r[1] for r in rows]) / 3)

    def test_zero_sum_features_rejected(self):
        with self.assertRaises(DataError):
            recon_loss(np.full(3, 1 / 3), np.zeros(3))


class TestCarolLoss(unittest.TestCase):
    def test_single_pair(self):
        loss, grads = carol_loss(np.array([[0.0, 0.0], [3.0, 4.0]]), [0, 1], CarolConfig(n=1))
        self.assertAlmostEqual(loss, -5.0)
        np.testing.assert_allclose(grads, [[0.6, 0.8], [-0.6, -0.8]])

    def test_identical_embeddings(self):
        emb = np.ones((6, 3))
        for kind in ('euclidean', 'chebyshev'):
            loss, grads = carol_loss(emb, [0, 0, 0, 1, 1, 1], CarolConfig(n=3, distance=kind))
            self.assertEqual(loss, 0.0)
            np.testing.assert_array_equal(grads, np.zeros_like(emb))

    def test_matches_brute_force(self):
        rng = np.random.default_rng(21)
        labels = [0, 1, 0, 1, 1, 0]
        for kind in ('euclidean', 'chebyshev', 'cosine'):
            emb = rng.normal(size=(6, 4))
            loss, _ = carol_loss(emb, labels, CarolConfig(n=3, distance=kind))
            self.assertAlmostEqual(loss, brute_force_carol(emb, labels, kind), places=12)

    def test_same_class_correction_coefficient(self):
        # at 2n = 6 every same-class pair is weighted 1/5 + 1 = 1.2
        base = np.zeros((6, 2))
        moved = base.copy()
        moved[1] = [1.0, 0.0]
        labels = [0, 0, 0, 1, 1, 1]
        cfg = CarolConfig(n=3)
        loss_base, _ = carol_loss(base, labels, cfg)
        loss_moved, _ = carol_loss(moved, labels, cfg)
        # row 1 moves by 1 from two same-class and three cross-class points
        expected = (2 * 1.2 - 3 * 1.0) / 15
        self.assertAlmostEqual(loss_moved - loss_base, expected, places=12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(33)
        kinds = ('euclidean', 'cosine', 'chebyshev')
        h = 1e-5
        checked = dict.fromkeys(kinds, 0)
        for case in range(1200):
            kind = kinds[case % 3]
            dim = int(rng.integers(2, 65))
            n = 2 if case % 5 == 0 and dim <= 16 else 1
            labels = [0] * n + [1] * n
            emb = rng.normal(size=(2 * n, dim))
            # stay clear of the chebyshev kinks and of tiny cosine norms
            if np.linalg.norm(emb, axis=1).min() < 0.5 or chebyshev_gap(emb) < 1e-3:
                continue
            cfg = CarolConfig(n=n, distance=kind)
            _, grads = carol_loss(emb, labels, cfg)
            numeric = np.zeros_like(emb)
            for idx in np.ndindex(emb.shape):
                step = np.zeros_like(emb)
                step[idx] = h
                numeric[idx] = (carol_loss(emb + step, labels, cfg)[0]
                                - carol_loss(emb - step, labels, cfg)[0]) / (2 * h)
            np.testing.assert_allclose(grads, numeric, rtol=1e-5, atol=1e-7,
                                       err_msg=f"{kind} dim={dim} n={n}")
            checked[kind] += 1
        self.assertGreaterEqual(sum(checked.values()), 1000, checked)
        for kind in kinds:
            self.assertGreater(checked[kind], 300, kind)

    def test_moving_class_apart_decreases_loss(self):
        rng = np.random.default_rng(2)
        emb = rng.normal(size=(6, 3))
        labels = np.array([0, 0, 0, 1, 1, 1])
        cfg = CarolConfig(n=3)
        before, _ = carol_loss(emb, labels, cfg)
        direction = emb[labels == 1].mean(axis=0) - emb[labels == 0].mean(axis=0)
        shifted = emb.copy()
        shifted[labels == 1] += 10.0 * direction / np.linalg.norm(direction)
        after, _ = carol_loss(shifted, labels, cfg)
        self.assertLess(after, before)

    def test_unbalanced_sample_rejected(self):
        with self.assertRaises(DataError):
            carol_loss(np.zeros((3, 2)), [0, 0, 1], CarolConfig(n=1))
        with self.assertRaises(DataError):
            carol_loss(np.zeros((4, 2)), [0, 0, 1, 1], CarolConfig(n=3))
        with self.assertRaises(DataError):
            carol_loss(np.zeros((1, 2)), [0], CarolConfig(n=1))

    def test_invalid_config(self):
        with self.assertRaises(ConfigError):
            CarolConfig(n=0)
        with self.assertRaises(ConfigError):
            CarolConfig(distance='hamming')


class TestClassSeparation(unittest.TestCase):
    def test_two_points(self):
        inter, intra, sep = exact_class_separation(np.array([[0.0, 0.0], [3.0, 4.0]]), [0, 1], 'euclidean')
        self.assertAlmostEqual(inter, 5.0)
        self.assertAlmostEqual(intra, 0.0)
        self.assertAlmostEqual(sep, 5.0)

    def test_identical_point_sets(self):
        points = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
        emb = np.vstack([points, points])
        labels = [0, 0, 0, 1, 1, 1]
        result = exact_class_separation(emb, labels, 'euclidean')
        np.testing.assert_allclose(result, brute_force_separation(emb, labels, 'euclidean'), atol=1e-12)

    def test_random_matches_brute_force(self):
        rng = np.random.default_rng(12)
        emb = rng.normal(size=(40, 5))
        labels = [0] * 20 + [1] * 20
        for kind in ('euclidean', 'chebyshev', 'cosine'):
            result = exact_class_separation(emb, labels, kind)
            np.testing.assert_allclose(result, brute_force_separation(emb, labels, kind), atol=1e-10)

    def test_requires_both_classes(self):
        with self.assertRaises(DataError):
            exact_class_separation(np.zeros((3, 2)), [1, 1, 1], 'euclidean')

    def test_sampled_cross_mean_estimates_interclass_distance(self):
        rng = np.random.default_rng(6)
        emb = np.vstack([rng.normal(0, 1, size=(20, 4)), rng.normal(1.5, 1, size=(20, 4))])
        labels = np.array([0] * 20 + [1] * 20)
        inter, _, _ = exact_class_separation(emb, labels, 'euclidean')
        means = []
        for _ in range(10000):
            idx = np.concatenate([rng.choice(20, 3, replace=False), 20 + rng.choice(20, 3, replace=False)])
            means.append(sampled_pair_means(emb[idx], labels[idx], 'euclidean')[0])
        self.assertAlmostEqual(np.mean(means), inter, delta=0.02 * inter)


class TestCombinedLoss(unittest.TestCase):
    def test_endpoints_are_exact(self):
        self.assertEqual(combined_loss(0.0, -7.25, 3.1).total, 3.1)
        self.assertEqual(combined_loss(1.0, -7.25, 3.1).total, -7.25)

    def test_midpoint(self):
        breakdown = combined_loss(0.5, -2.0, 4.0)
        self.assertAlmostEqual(breakdown.total, 1.0)
        self.assertEqual(breakdown.to_dict(), {'carol': -2.0, 'recon': 4.0, 'total': 1.0, 'c': 0.5})

    def test_c_out_of_range(self):
        for c in (-0.1, 1.5):
            with self.assertRaises(ConfigError):
                combined_loss(c, 0.0, 0.0)

    def test_non_finite_breakdown(self):
        self.assertFalse(combined_loss(0.5, float('nan'), 1.0).is_finite())


if __name__ == '__main__':
    unittest.main()
