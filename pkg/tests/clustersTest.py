import unittest

import numpy as np

from dpeval.clusters import ClusterModel, cannot_link_pairs, find_idle_cluster, fit_constrained_kmeans, \
    kmeans_plus_plus, objective, primitive_features, rank_clusters
from dpeval.exceptions import InfeasibleConstraints
from dpeval.primitives import Primitive
from dpeval.rng import derive


def blob_primitives(vehicles=4, seed=5):
    """Each vehicle owns one primitive near each of three well separated centers."""
    rng = np.random.default_rng(seed)
    centers = [(0.0, 0.0), (10.0, 0.5), (25.0, -0.5)]
    primitives = []
    for v in range(vehicles):
        for label, (mv, ma) in enumerate(centers):
            mean = [mv + rng.normal(0, 0.3), ma + rng.normal(0, 0.02)]
            cov = np.diag([0.5 + rng.uniform(0, 0.1), 0.05 + rng.uniform(0, 0.01)])
            primitives.append(Primitive("veh%d" % v, label, 100 * (label + 1), mean, cov, 0.0))
    return primitives


class TestConstrainedKMeans(unittest.TestCase):
    def test_cannot_link_pairs(self):
        self.assertEqual(cannot_link_pairs(["a", "b", "a", "a"]), [(0, 2), (0, 3), (2, 3)])
        self.assertEqual(cannot_link_pairs(["a", "b"]), [])

    def test_constraints_hold(self):
        primitives = blob_primitives()
        features, _, _ = primitive_features(primitives)
        pairs = cannot_link_pairs([p.vehicle_id for p in primitives])
        model = fit_constrained_kmeans(features, pairs, k=5, seed=1, restarts=3)
        for a, b in pairs:
            self.assertNotEqual(model.assignment[a], model.assignment[b])

    def test_recovers_blobs(self):
        primitives = blob_primitives()
        features, _, _ = primitive_features(primitives)
        pairs = cannot_link_pairs([p.vehicle_id for p in primitives])
        model = fit_constrained_kmeans(features, pairs, k=3, seed=2, restarts=5)
        for label in range(3):
            clusters = {model.assignment[j] for j, p in enumerate(primitives) if p.label == label}
            self.assertEqual(len(clusters), 1)

    def test_objective_trace_monotone(self):
        rng = np.random.default_rng(11)
        features = rng.normal(size=(60, 5))
        pairs = cannot_link_pairs([j % 6 for j in range(60)])
        model = fit_constrained_kmeans(features, pairs, k=12, seed=4, restarts=2)
        trace = np.array(model.objective_trace)
        self.assertTrue(np.all(np.diff(trace) <= 1e-9))
        self.assertAlmostEqual(model.objective, objective(features, model.centroids, model.assignment))

    def test_random_constrained_instances(self):
        rng = np.random.default_rng(13)
        for case in range(100):
            counts = rng.integers(1, 13, size=int(rng.integers(2, 11)))
            vehicles = np.repeat(np.arange(len(counts)), counts)
            features = rng.normal(size=(len(vehicles), 5))
            pairs = cannot_link_pairs(vehicles.tolist())
            k = int(rng.integers(1, min(len(vehicles), 50) + 1))
            if counts.max() > k:
                self.assertRaises(InfeasibleConstraints, fit_constrained_kmeans, features, pairs, k=k, seed=case,
                                  restarts=2)
                continue
            model = fit_constrained_kmeans(features, pairs, k=k, seed=case, restarts=2)
            self.assertEqual(sum(model.assignment[a] == model.assignment[b] for a, b in pairs), 0)
            self.assertTrue(np.all(np.diff(model.objective_trace) <= 1e-9))

    def test_deterministic(self):
        rng = np.random.default_rng(12)
        features = rng.normal(size=(30, 5))
        pairs = cannot_link_pairs([j % 3 for j in range(30)])
        first = fit_constrained_kmeans(features, pairs, k=6, seed=9, restarts=2)
        second = fit_constrained_kmeans(features, pairs, k=6, seed=9, restarts=2)
        np.testing.assert_array_equal(first.assignment, second.assignment)
        np.testing.assert_array_equal(first.centroids, second.centroids)

    def test_infeasible(self):
        features = np.arange(10.0).reshape(5, 2)
        pairs = cannot_link_pairs(["a"] * 5)
        self.assertRaises(InfeasibleConstraints, fit_constrained_kmeans, features, pairs, k=4)
        self.assertRaises(InfeasibleConstraints, fit_constrained_kmeans, features, [], k=6)
        self.assertRaises(InfeasibleConstraints, fit_constrained_kmeans, features, [(1, 1)], k=2)

    def test_k_equals_n_with_all_linked(self):
        features = np.arange(8.0).reshape(4, 2)
        model = fit_constrained_kmeans(features, cannot_link_pairs(["a"] * 4), k=4, restarts=1)
        self.assertEqual(sorted(model.assignment.tolist()), [0, 1, 2, 3])

    def test_seeding_picks_rows(self):
        features = np.random.default_rng(1).normal(size=(20, 3))
        centers = kmeans_plus_plus(features, 5, derive(0, 'test'))
        for center in centers:
            self.assertTrue(np.any(np.all(features == center, axis=1)))


class TestRankClusters(unittest.TestCase):
    def test_omega(self):
        primitives = [Primitive("a", 0, 300, [0.1, 0.0], np.eye(2) * 0.01, 0.5),
                      Primitive("b", 0, 100, [12.0, 0.2], np.eye(2), 0.5)]
        model = ClusterModel(3, np.zeros((3, 5)), [2, 0], 0.0)
        rank_clusters(model, primitives)
        np.testing.assert_allclose(model.omega, [0.25, 0.0, 0.75])
        self.assertEqual(model.rank, [2, 0, 1])
        self.assertIsNone(model.cluster_moments[1])
        self.assertEqual([c for c, _, _ in model.retained()], [2, 0])
        self.assertEqual(find_idle_cluster(model), 0)
        np.testing.assert_array_equal(model.sizes(), [1, 0, 1])

    def test_pooled_moments(self):
        primitives = [Primitive("a", 0, 1, [0.0, 0.0], np.zeros((2, 2)), 0.5),
                      Primitive("b", 0, 1, [2.0, 0.0], np.zeros((2, 2)), 0.5)]
        model = rank_clusters(ClusterModel(1, np.zeros((1, 5)), [0, 0], 0.0), primitives)
        count, mean, cov = model.retained()[0][2]
        self.assertEqual(count, 2)
        np.testing.assert_allclose(mean, [1.0, 0.0])
        np.testing.assert_allclose(cov, [[1.0, 0.0], [0.0, 0.0]])

    def test_no_idle_cluster(self):
        primitives = [Primitive("a", 0, 10, [12.0, 0.2], np.eye(2), 1.0)]
        model = rank_clusters(ClusterModel(1, np.zeros((1, 5)), [0], 0.0), primitives)
        self.assertIsNone(find_idle_cluster(model))

    def test_serialize(self):
        primitives = blob_primitives(vehicles=2)
        features, mean, scale = primitive_features(primitives)
        model = fit_constrained_kmeans(features, cannot_link_pairs([p.vehicle_id for p in primitives]), k=4,
                                       restarts=1)
        model.feature_mean, model.feature_scale = mean, scale
        rank_clusters(model, primitives)
        again = ClusterModel.from_dict(model.to_dict())
        self.assertEqual(again.rank, model.rank)
        self.assertEqual(again.members, model.members)
        np.testing.assert_array_equal(again.omega, model.omega)
        self.assertEqual([c for c, _, _ in again.retained()], [c for c, _, _ in model.retained()])


if __name__ == '__main__':
    unittest.main()
