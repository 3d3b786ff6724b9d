"""Constrained clustering

Primitives of all training vehicles are clustered with a COP style k-means.
Cannot-link constraints keep two primitives of the same vehicle out of the
same cluster. Each primitive is embedded as the 5 vector
[mean_v, mean_a, var_v, var_a, cov_va], z-scored over all primitives.

One run of the algorithm:

1. k-means++ seeding from the features
2. greedy assignment in order of descending point count, every primitive
   takes the nearest centroid that does not hold a linked primitive
3. alternate assignment and centroid updates; a greedy assignment is only
   accepted when it does not raise the objective, after which single moves
   to a closer feasible centroid are applied. Empty clusters keep their
   centroid.

The best of several runs, by objective, is kept.
"""

import logging
from collections import defaultdict

import numpy as np

from dpeval import rng as rngs
from dpeval.exceptions import EmptyInput, InfeasibleConstraints
from dpeval.primitives import merge_moments

DEFAULT_K = 200
DEFAULT_MAX_ITER = 300
DEFAULT_RESTARTS = 5
FEATURE_NAMES = ('mean_v', 'mean_a', 'var_v', 'var_a', 'cov_va')


class ClusterModel(object):
    """Result of the constrained k-means, optionally ranked.

    centroids live in the standardized feature space (feature_mean,
    feature_scale invert it). assignment[j] is the cluster of members[j], a
    (vehicle_id, label) pair. After rank_clusters, omega, rank and
    cluster_moments are filled; cluster_moments[c] is None for an empty
    cluster, else (point_count, mean, cov) in physical units.
    """

    def __init__(self, k, centroids, assignment, objective, objective_trace=None, members=None,
                 feature_mean=None, feature_scale=None, omega=None, rank=None, cluster_moments=None):
        self.k = int(k)
        self.centroids = np.asarray(centroids, dtype=float)
        self.assignment = np.asarray(assignment, dtype=int)
        self.objective = float(objective)
        self.objective_trace = [float(x) for x in (objective_trace or [])]
        self.members = [(str(v), int(label)) for v, label in (members or [])]
        self.feature_mean = None if feature_mean is None else np.asarray(feature_mean, dtype=float)
        self.feature_scale = None if feature_scale is None else np.asarray(feature_scale, dtype=float)
        self.omega = None if omega is None else np.asarray(omega, dtype=float)
        self.rank = None if rank is None else [int(c) for c in rank]
        self.cluster_moments = cluster_moments

    def sizes(self):
        return np.bincount(self.assignment, minlength=self.k)

    def retained(self):
        """Non-empty clusters in rank order as (cluster_id, omega, (count, mean, cov))."""
        if self.rank is None:
            raise ValueError("clusters are not ranked yet")
        return [(c, float(self.omega[c]), self.cluster_moments[c]) for c in self.rank
                if self.cluster_moments[c] is not None]

    def to_dict(self):
        moments = None
        if self.cluster_moments is not None:
            moments = [None if m is None else {'count': int(m[0]), 'mean': np.asarray(m[1]).tolist(),
                                               'cov': np.asarray(m[2]).tolist()}
                       for m in self.cluster_moments]
        return {
            'k': self.k,
            'centroids': self.centroids.tolist(),
            'assignment': self.assignment.tolist(),
            'objective': self.objective,
            'objective_trace': self.objective_trace,
            'members': [list(m) for m in self.members],
            'feature_mean': None if self.feature_mean is None else self.feature_mean.tolist(),
            'feature_scale': None if self.feature_scale is None else self.feature_scale.tolist(),
            'omega': None if self.omega is None else self.omega.tolist(),
            'rank': self.rank,
            'cluster_moments': moments,
        }

    @classmethod
    def from_dict(cls, data):
        moments = data.get('cluster_moments')
        if moments is not None:
            moments = [None if m is None else (m['count'], np.asarray(m['mean']), np.asarray(m['cov']))
                       for m in moments]
        return cls(data['k'], data['centroids'], data['assignment'], data['objective'],
                   data.get('objective_trace'), data.get('members'), data.get('feature_mean'),
                   data.get('feature_scale'), data.get('omega'), data.get('rank'), moments)


def primitive_features(primitives):
    """z-scored 5-moment features of the primitives.

    Returns (features, mean, scale); a channel without spread keeps scale 1.
    """
    if not primitives:
        raise EmptyInput("no primitives to cluster")
    raw = np.array([[p.mean[0], p.mean[1], p.cov[0, 0], p.cov[1, 1], p.cov[0, 1]] for p in primitives])
    mean = raw.mean(axis=0)
    scale = raw.std(axis=0)
    scale[scale <= 1e-12] = 1.0
    return (raw - mean) / scale, mean, scale


def cannot_link_pairs(vehicle_ids):
    """All index pairs (i, j), i < j, of primitives from the same vehicle."""
    groups = defaultdict(list)
    for index, vehicle in enumerate(vehicle_ids):
        groups[vehicle].append(index)
    return [(a, b) for members in groups.values() for i, a in enumerate(members) for b in members[i + 1:]]


def objective(features, centroids, assignment):
    """Within cluster sum of squares."""
    diff = np.asarray(features) - np.asarray(centroids)[np.asarray(assignment)]
    return float(np.sum(diff * diff))


def _neighbours(n, cannot_link):
    links = [set() for _ in range(n)]
    for a, b in cannot_link:
        if a == b:
            raise InfeasibleConstraints("primitive %d can not be linked with itself" % a)
        links[a].add(b)
        links[b].add(a)
    return links


def _check_feasible(links, k):
    """Raise InfeasibleConstraints when a fully linked group is larger than k."""
    seen = set()
    for start in range(len(links)):
        if start in seen:
            continue
        component, todo = {start}, [start]
        while todo:
            for other in links[todo.pop()]:
                if other not in component:
                    component.add(other)
                    todo.append(other)
        seen |= component
        clique = all(len(links[i]) >= len(component) - 1 for i in component)
        if clique and len(component) > k:
            raise InfeasibleConstraints("%d mutually linked primitives do not fit in %d clusters" %
                                        (len(component), k))


def kmeans_plus_plus(features, k, rng):
    """k-means++ seeding, centers drawn with probability proportional to the squared distance."""
    n = features.shape[0]
    centers = np.empty((k, features.shape[1]))
    centers[0] = features[rng.integers(n)]
    closest = np.sum((features - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total > 0:
            pick = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side='right'))
            pick = min(pick, n - 1)
        else:
            pick = int(rng.integers(n))
        centers[i] = features[pick]
        closest = np.minimum(closest, np.sum((features - centers[i]) ** 2, axis=1))
    return centers


def _distances(features, centroids):
    return np.sum((features[:, None, :] - centroids[None, :, :]) ** 2, axis=2)


def _greedy_assign(dist, order, links):
    n, k = dist.shape
    assignment = np.full(n, -1, dtype=int)
    for j in order:
        taken = {assignment[o] for o in links[j] if assignment[o] >= 0}
        for c in np.argsort(dist[j], kind='stable'):
            if c not in taken:
                assignment[j] = c
                break
        else:
            raise InfeasibleConstraints("no feasible cluster for primitive %d" % j)
    return assignment


def _improve(dist, assignment, links):
    """Move single primitives to a strictly closer feasible centroid until none can move."""
    assignment = assignment.copy()
    moved = True
    while moved:
        moved = False
        for j in range(len(assignment)):
            taken = {assignment[o] for o in links[j]}
            best, best_dist = assignment[j], dist[j, assignment[j]]
            for c in np.argsort(dist[j], kind='stable'):
                if dist[j, c] >= best_dist:
                    break
                if c not in taken:
                    best, best_dist = c, dist[j, c]
                    break
            if best != assignment[j]:
                assignment[j] = best
                moved = True
    return assignment


def _update_centroids(features, assignment, centroids):
    centroids = centroids.copy()
    for c in np.unique(assignment):
        centroids[c] = features[assignment == c].mean(axis=0)
    return centroids


def _single_run(features, links, order, k, max_iter, rng):
    centroids = kmeans_plus_plus(features, k, rng)
    assignment = _greedy_assign(_distances(features, centroids), order, links)
    trace = [objective(features, centroids, assignment)]
    for _ in range(max_iter):
        dist = _distances(features, centroids)
        candidate = _greedy_assign(dist, order, links)
        current = assignment
        if objective(features, centroids, candidate) <= objective(features, centroids, current):
            current = candidate
        current = _improve(dist, current, links)
        changed = not np.array_equal(current, assignment)
        assignment = current
        centroids = _update_centroids(features, assignment, centroids)
        trace.append(objective(features, centroids, assignment))
        if not changed:
            break
    return centroids, assignment, trace


def fit_constrained_kmeans(features, cannot_link, k=DEFAULT_K, seed=0, max_iter=DEFAULT_MAX_ITER,
                           restarts=DEFAULT_RESTARTS, weights=None):
    """Cluster features under cannot-link constraints.

    Keyword arguments:
    features -- (n, d) array
    cannot_link -- index pairs that must not share a cluster
    k -- number of clusters, at most n
    seed -- seed of the k-means++ seeding
    max_iter -- iterations per run
    restarts -- number of runs, the lowest objective is kept
    weights -- assignment priority (point counts), heavier primitives pick first
    """
    features = np.atleast_2d(np.asarray(features, dtype=float))
    n = features.shape[0]
    if n == 0:
        raise EmptyInput("no features to cluster")
    if not 1 <= k <= n:
        raise InfeasibleConstraints("k=%d must be between 1 and the number of primitives %d" % (k, n))
    links = _neighbours(n, cannot_link)
    _check_feasible(links, k)
    weights = np.zeros(n) if weights is None else np.asarray(weights, dtype=float)
    order = sorted(range(n), key=lambda j: (-weights[j], j))

    logger = logging.getLogger(__name__)
    best = None
    for restart in range(max(1, restarts)):
        centroids, assignment, trace = _single_run(features, links, order, k, max_iter,
                                                   rngs.derive(seed, 'kmeans', restart))
        logger.debug("restart %d : objective %.6f after %d iterations", restart, trace[-1], len(trace) - 1)
        if best is None or trace[-1] < best[2][-1]:
            best = (centroids, assignment, trace)
    centroids, assignment, trace = best
    return ClusterModel(k, centroids, assignment, trace[-1], trace)


def rank_clusters(model, primitives):
    """Fill omega, rank and the pooled physical moments of every cluster.

    Clusters are ranked by descending omega, ties by cluster id; empty
    clusters have omega 0 and end up last.
    """
    if len(primitives) != len(model.assignment):
        raise ValueError("%d primitives for %d assignments" % (len(primitives), len(model.assignment)))
    counts = np.zeros(model.k)
    parts = [[] for _ in range(model.k)]
    for primitive, cluster in zip(primitives, model.assignment):
        counts[cluster] += primitive.point_count
        parts[cluster].append((primitive.point_count, primitive.mean, primitive.cov))
    total = counts.sum()
    if not total > 0:
        raise EmptyInput("clustered primitives hold no data points")
    model.omega = counts / total
    model.rank = sorted(range(model.k), key=lambda c: (-model.omega[c], c))
    model.cluster_moments = [merge_moments(p) if p and counts[c] > 0 else None for c, p in enumerate(parts)]
    model.members = [(p.vehicle_id, p.label) for p in primitives]
    return model


def find_idle_cluster(model, v_tol=0.5, a_tol=0.05):
    """Rank position of the first retained cluster with mean speed and acceleration near zero, or None."""
    for position, (_, _, moments) in enumerate(model.retained()):
        if abs(moments[1][0]) < v_tol and abs(moments[1][1]) < a_tol:
            return position
    return None
