import math
import unittest

import numpy as np
from scipy import stats

from dpeval.coupling import CouplingEntry, CouplingMap, EvaluationResult, GaussianMoments, KLDirection, \
    aggregate_measurement, couple, evaluate, kl_gaussian, mpg
from dpeval.exceptions import EmptyInput, EmptyPrimitive, MissingChannel, NonPositiveE
from dpeval.primitives import Primitive
from dpeval.utils import Channel


def random_spd(rng):
    m = rng.normal(size=(2, 2))
    return m.dot(m.T) + 0.3 * np.eye(2)


def monte_carlo_kl(p, q, rng, n=1000000):
    x = rng.multivariate_normal(p.mu, p.sigma, size=n)
    return float(np.mean(stats.multivariate_normal(p.mu, p.sigma).logpdf(x) -
                         stats.multivariate_normal(q.mu, q.sigma).logpdf(x)))


def coupling_of(pairs):
    return CouplingMap([CouplingEntry(rank, cluster_id, label, 0.0) for rank, (cluster_id, label) in enumerate(pairs)])


class TestKL(unittest.TestCase):
    def test_identity(self):
        p = GaussianMoments([1.0, -2.0], [[2.0, 0.3], [0.3, 0.5]])
        self.assertAlmostEqual(kl_gaussian(p, p), 0.0, places=12)

    def test_worked_value(self):
        p = GaussianMoments([0.0, 0.0], np.eye(2))
        q = GaussianMoments([1.0, 0.0], 2 * np.eye(2))
        expected = 0.5 * (1 + 0.5 - 2 + 2 * math.log(2))
        self.assertAlmostEqual(kl_gaussian(p, q), expected, delta=1e-9)
        self.assertAlmostEqual(expected, 0.443147, places=6)

    def test_asymmetric(self):
        p = GaussianMoments([0.0, 0.0], np.eye(2))
        q = GaussianMoments([1.0, 0.0], 2 * np.eye(2))
        self.assertGreater(kl_gaussian(q, p), 0.0)
        self.assertNotAlmostEqual(kl_gaussian(p, q), kl_gaussian(q, p))

    def test_monte_carlo(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            p = GaussianMoments(rng.normal(size=2), random_spd(rng))
            q = GaussianMoments(rng.normal(size=2) + [2.0, 0.0], random_spd(rng))
            kl = kl_gaussian(p, q)
            self.assertAlmostEqual(kl, monte_carlo_kl(p, q, rng), delta=0.02 * kl)

    def test_non_negative(self):
        rng = np.random.default_rng(22)
        for _ in range(500):
            p = GaussianMoments(rng.normal(size=2), random_spd(rng))
            near = GaussianMoments(p.mu + rng.normal(0, 1e-3, 2), p.sigma + 1e-4 * np.eye(2))
            far = GaussianMoments(rng.normal(0, 5, 2), random_spd(rng))
            self.assertGreaterEqual(kl_gaussian(p, near), -1e-12)
            self.assertGreaterEqual(kl_gaussian(p, far), -1e-12)
            self.assertGreaterEqual(kl_gaussian(far, p), -1e-12)

    def test_invariant_under_affine_map(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            p = GaussianMoments(rng.normal(size=2), random_spd(rng))
            q = GaussianMoments(rng.normal(size=2), random_spd(rng))
            A = rng.normal(size=(2, 2)) + 2 * np.eye(2)
            b = rng.normal(0, 3, 2)
            mapped = [GaussianMoments(A.dot(g.mu) + b, A.dot(g.sigma).dot(A.T)) for g in (p, q)]
            self.assertAlmostEqual(kl_gaussian(*mapped), kl_gaussian(p, q), delta=1e-7 * (1 + kl_gaussian(p, q)))

    def test_floor_on_singular_covariance(self):
        idle = GaussianMoments([0.0, 0.0], [[0.01, 0.0], [0.0, 0.0]])
        self.assertGreater(np.linalg.eigvalsh(idle.sigma).min(), 0.0)
        other = GaussianMoments([0.1, 0.0], [[0.02, 0.0], [0.0, 0.001]])
        self.assertTrue(np.isfinite(kl_gaussian(idle, other)))
        self.assertTrue(np.isfinite(kl_gaussian(other, idle)))


class TestCouple(unittest.TestCase):
    def setUp(self):
        self.primitives = [Primitive("eval", 4, 50, [0.0, 0.0], np.diag([0.01, 0.001]), 0.5),
                           Primitive("eval", 1, 30, [10.0, 0.2], np.diag([2.0, 0.1]), 0.3),
                           Primitive("eval", 7, 20, [25.0, -0.1], np.diag([4.0, 0.1]), 0.2)]

    def test_brute_force_argmin(self):
        rng = np.random.default_rng(8)
        clusters = [(c, GaussianMoments([rng.uniform(0, 30), rng.normal(0, 0.2)], random_spd(rng)))
                    for c in range(6)]
        for direction in KLDirection:
            result = couple(clusters, self.primitives, direction)
            self.assertEqual(result.direction, direction)
            for entry, (cluster_id, cluster) in zip(result.entries, clusters):
                kls = {}
                for p in self.primitives:
                    g = GaussianMoments.of_primitive(p)
                    kls[p.label] = kl_gaussian(cluster, g) if direction is KLDirection.cluster_to_primitive \
                        else kl_gaussian(g, cluster)
                self.assertEqual(entry.cluster_id, cluster_id)
                self.assertEqual(entry.label, min(kls, key=lambda label: (kls[label], label)))
                self.assertAlmostEqual(entry.kl, kls[entry.label])

    def test_nearest_by_speed(self):
        clusters = [(3, GaussianMoments([24.0, 0.0], np.diag([4.0, 0.1]))),
                    (0, GaussianMoments([0.1, 0.0], np.diag([0.02, 0.001]))),
                    (5, GaussianMoments([23.0, 0.0], np.diag([3.0, 0.1])))]
        result = couple(clusters, self.primitives)
        self.assertEqual([e.label for e in result.entries], [7, 4, 7])
        self.assertEqual([e.rank for e in result.entries], [0, 1, 2])
        self.assertEqual(result.multiplicity(), {4: 1, 7: 2})

    def test_tie_goes_to_lower_label(self):
        twins = [Primitive("eval", 9, 10, [1.0, 0.0], np.eye(2), 0.5),
                 Primitive("eval", 2, 10, [1.0, 0.0], np.eye(2), 0.5)]
        result = couple([(0, GaussianMoments([0.0, 0.0], np.eye(2)))], twins)
        self.assertEqual(result.entries[0].label, 2)

    def test_no_primitives(self):
        self.assertRaises(EmptyInput, couple, [(0, GaussianMoments([0.0, 0.0], np.eye(2)))], [])

    def test_serialize(self):
        result = CouplingMap([CouplingEntry(0, 3, 1, 0.25)], KLDirection.primitive_to_cluster)
        again = CouplingMap.from_dict(result.to_dict())
        self.assertEqual(again.direction, KLDirection.primitive_to_cluster)
        self.assertEqual(again.entries[0].to_dict(), result.entries[0].to_dict())


class TestEvaluate(unittest.TestCase):
    def test_aggregate_over_trips(self):
        rates = [np.array([1.0, 2.0, 3.0]), np.array([5.0, 7.0])]
        labels = [np.array([0, 1, 0]), np.array([1, 0])]
        self.assertAlmostEqual(aggregate_measurement(rates, labels, 0), 11.0 / 3)
        self.assertAlmostEqual(aggregate_measurement(rates[0], labels[0], 1), 2.0)

    def test_aggregate_errors(self):
        labels = [np.array([0, 1]), np.array([1, 1])]
        self.assertRaises(MissingChannel, aggregate_measurement, [np.array([1.0, 2.0]), None], labels, 1)
        self.assertEqual(aggregate_measurement([np.array([1.0, 2.0]), None], labels, 0), 1.0)
        self.assertRaises(MissingChannel, aggregate_measurement, [np.array([1.0, np.nan]), np.ones(2)], labels, 1)
        self.assertRaises(EmptyPrimitive, aggregate_measurement, [np.ones(2), np.ones(2)], labels, 5)

    def test_single_cluster(self):
        result = evaluate(coupling_of([(0, 3)]), [1.0], {3: 0.05})
        self.assertAlmostEqual(result.E, 0.05)
        self.assertAlmostEqual(result.mpg, 20.0)

    def test_worked_example(self):
        result = evaluate(coupling_of([(0, 1), (1, 2), (2, 3)]), [0.5, 0.3, 0.2], {1: 0.02, 2: 0.04, 3: 0.10})
        self.assertAlmostEqual(result.E, 0.042, delta=1e-14)
        self.assertAlmostEqual(result.mpg, 23.8095, places=4)
        self.assertAlmostEqual(sum(row['contribution'] for row in result.per_cluster), result.E)

    def test_weights_renormalized_by_cluster_id(self):
        omega = {4: 0.3, 9: 0.1, 2: 0.4}
        result = evaluate(coupling_of([(4, 0), (9, 1)]), omega, {0: 1.0, 1: 2.0}, Channel.emission)
        self.assertAlmostEqual(result.E, 0.75 * 1.0 + 0.25 * 2.0)
        self.assertIsNone(result.mpg)
        self.assertEqual(result.channel, Channel.emission)

    def test_convex_bound(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            n = int(rng.integers(1, 10))
            omega = rng.dirichlet(np.ones(n))
            e_values = dict(enumerate(rng.uniform(0.01, 0.2, n)))
            result = evaluate(coupling_of([(c, c) for c in range(n)]), omega, e_values)
            self.assertGreaterEqual(result.E, min(e_values.values()) - 1e-12)
            self.assertLessEqual(result.E, max(e_values.values()) + 1e-12)

    def test_linear_in_values(self):
        rng = np.random.default_rng(3)
        coupling = coupling_of([(c, c % 3) for c in range(5)])
        omega = rng.dirichlet(np.ones(5))
        first = dict(enumerate(rng.uniform(0.01, 0.2, 3)))
        second = dict(enumerate(rng.uniform(0.01, 0.2, 3)))
        a, b = 0.7, 2.5
        mixed = dict((label, a * first[label] + b * second[label]) for label in first)
        self.assertAlmostEqual(evaluate(coupling, omega, mixed).E,
                               a * evaluate(coupling, omega, first).E + b * evaluate(coupling, omega, second).E,
                               delta=1e-12)

    def test_constant_values(self):
        result = evaluate(coupling_of([(0, 0), (1, 1)]), [0.9, 0.1], {0: 0.07, 1: 0.07})
        self.assertAlmostEqual(result.E, 0.07)

    def test_non_positive(self):
        self.assertRaises(NonPositiveE, mpg, 0.0)
        self.assertRaises(NonPositiveE, evaluate, coupling_of([(0, 0)]), [1.0], {0: -0.1})
        self.assertAlmostEqual(evaluate(coupling_of([(0, 0)]), [1.0], {0: 0.0}, Channel.emission).E, 0.0)
        self.assertRaises(EmptyInput, evaluate, CouplingMap([]), [1.0], {})

    def test_serialize(self):
        result = evaluate(coupling_of([(0, 1)]), [1.0], {1: 0.04})
        again = EvaluationResult.from_dict(result.to_dict())
        self.assertEqual(again.to_dict(), result.to_dict())


if __name__ == '__main__':
    unittest.main()
