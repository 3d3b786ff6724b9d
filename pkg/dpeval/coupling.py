"""Coupling and evaluation

Every retained cluster of the fleet is coupled to the primitive of the
evaluated vehicle with the smallest Kullback-Leibler divergence between the
two Gaussians. The fuel (or emission) result of the vehicle is then the
omega weighted sum of the average measurement over each coupled primitive:

    E = sum_i omega_i * E_i,  mpg = 1 / E
"""

import logging
from collections import Counter
from enum import Enum

import numpy as np
from scipy import linalg

from dpeval.exceptions import EmptyPrimitive, MissingChannel, NonPositiveE, SingularCovariance, EmptyInput
from dpeval.utils import Channel

COV_FLOOR = 1e-9


class KLDirection(Enum):
    """Which of the two Gaussians is the reference distribution of the divergence."""

    cluster_to_primitive = "cluster_to_primitive"
    primitive_to_cluster = "primitive_to_cluster"


class GaussianMoments(object):
    """Mean and covariance of a Gaussian.

    Eigenvalues of sigma below COV_FLOOR are raised to COV_FLOOR, an idle
    primitive with zero acceleration variance would otherwise be singular.
    """

    def __init__(self, mu, sigma, name=None):
        self.mu = np.asarray(mu, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        sigma = 0.5 * (sigma + sigma.T)
        values, vectors = np.linalg.eigh(sigma)
        if np.any(values < COV_FLOOR):
            logging.getLogger(__name__).debug("covariance of %s floored at %g (eigenvalues %s)",
                                              name or "gaussian", COV_FLOOR, values)
            values = np.maximum(values, COV_FLOOR)
            sigma = (vectors * values).dot(vectors.T)
            sigma = 0.5 * (sigma + sigma.T)
        self.sigma = sigma
        self.name = name

    @property
    def dim(self):
        return self.mu.shape[0]

    @classmethod
    def of_primitive(cls, primitive):
        return cls(primitive.mean, primitive.cov, "%s/%d" % (primitive.vehicle_id, primitive.label))


def kl_gaussian(p, q):
    """KL(p || q) of two GaussianMoments.

    0.5 * (tr(Sq^-1 Sp) + (mq - mp)^T Sq^-1 (mq - mp) - k + ln(det Sq / det Sp))
    """
    try:
        q_factor = linalg.cho_factor(q.sigma, lower=True)
        p_factor = linalg.cho_factor(p.sigma, lower=True)
    except linalg.LinAlgError:
        raise SingularCovariance("%s or %s" % (p.name or "p", q.name or "q"))
    diff = q.mu - p.mu
    trace = np.trace(linalg.cho_solve(q_factor, p.sigma))
    mahalanobis = diff.dot(linalg.cho_solve(q_factor, diff))
    logdet_q = 2.0 * np.sum(np.log(np.diag(q_factor[0])))
    logdet_p = 2.0 * np.sum(np.log(np.diag(p_factor[0])))
    value = 0.5 * (trace + mahalanobis - p.dim + logdet_q - logdet_p)
    return max(float(value), 0.0)


class CouplingEntry(object):
    def __init__(self, rank, cluster_id, label, kl):
        self.rank = int(rank)
        self.cluster_id = int(cluster_id)
        self.label = int(label)
        self.kl = float(kl)

    def to_dict(self):
        return {'rank': self.rank, 'cluster_id': self.cluster_id, 'label': self.label, 'kl': self.kl}

    @classmethod
    def from_dict(cls, data):
        return cls(data['rank'], data['cluster_id'], data['label'], data['kl'])


class CouplingMap(object):
    """One CouplingEntry per retained cluster, in rank order."""

    def __init__(self, entries, direction=KLDirection.cluster_to_primitive):
        self.entries = list(entries)
        self.direction = KLDirection(direction)

    def __len__(self):
        return len(self.entries)

    def multiplicity(self):
        """Number of clusters coupled to each evaluated primitive label."""
        return dict(sorted(Counter(e.label for e in self.entries).items()))

    def to_dict(self):
        return {
            'direction': self.direction.value,
            'entries': [e.to_dict() for e in self.entries],
            'multiplicity': {str(k): v for k, v in self.multiplicity().items()},
        }

    @classmethod
    def from_dict(cls, data):
        return cls([CouplingEntry.from_dict(e) for e in data['entries']], data.get('direction', 'cluster_to_primitive'))


def couple(clusters, eval_primitives, direction=KLDirection.cluster_to_primitive):
    """Couple each cluster to its KL nearest evaluated primitive.

    Keyword arguments:
    clusters -- ranked (cluster_id, GaussianMoments) pairs, best rank first
    eval_primitives -- primitives of the evaluated vehicle
    direction -- KLDirection, by default KL(cluster || primitive)

    Ties go to the lower primitive label. A primitive may serve many clusters.
    """
    if not eval_primitives:
        raise EmptyInput("the evaluated vehicle has no primitives")
    direction = KLDirection(direction)
    candidates = sorted(eval_primitives, key=lambda p: p.label)
    gaussians = [GaussianMoments.of_primitive(p) for p in candidates]
    entries = []
    for rank, (cluster_id, cluster) in enumerate(clusters):
        best_label, best_kl = None, None
        for primitive, gaussian in zip(candidates, gaussians):
            if direction is KLDirection.cluster_to_primitive:
                kl = kl_gaussian(cluster, gaussian)
            else:
                kl = kl_gaussian(gaussian, cluster)
            if best_kl is None or kl < best_kl:
                best_label, best_kl = primitive.label, kl
        entries.append(CouplingEntry(rank, cluster_id, best_label, best_kl))
    return CouplingMap(entries, direction)


def aggregate_measurement(rates, label_seq, label):
    """Mean of the per sample rate over the points carrying label.

    rates and label_seq are either arrays or lists with one array per trip;
    a trip without the channel is None.
    """
    if not isinstance(label_seq, list):
        label_seq, rates = [label_seq], [rates]
    if len(rates) != len(label_seq):
        raise MissingChannel("measurement channel missing for some trips")
    values = []
    for trip_rates, labels in zip(rates, label_seq):
        mask = np.asarray(labels) == label
        if not mask.any():
            continue
        if trip_rates is None:
            raise MissingChannel("primitive %d covers a trip without the measurement channel" % label)
        trip_rates = np.asarray(trip_rates, dtype=float)
        if trip_rates.shape[0] != mask.shape[0]:
            raise MissingChannel("measurement channel does not align with the labels")
        selected = trip_rates[mask]
        if np.any(np.isnan(selected)):
            raise MissingChannel("primitive %d has samples without a measurement" % label)
        values.append(selected)
    if not values:
        raise EmptyPrimitive("primitive %d has no data points" % label)
    return float(np.mean(np.concatenate(values)))


def mpg(e):
    """Miles per gallon of a fuel consumption in gallons per mile."""
    if not e > 0:
        raise NonPositiveE("fuel consumption %r is not positive" % e)
    return 1.0 / e


class EvaluationResult(object):
    def __init__(self, e, per_cluster, channel=Channel.fuel, mpg=None):
        self.E = float(e)
        self.per_cluster = list(per_cluster)
        self.channel = Channel(channel)
        self.mpg = None if mpg is None else float(mpg)

    def to_dict(self):
        return {'E': self.E, 'mpg': self.mpg, 'channel': self.channel.value, 'per_cluster': self.per_cluster}

    @classmethod
    def from_dict(cls, data):
        return cls(data['E'], data['per_cluster'], data['channel'], data.get('mpg'))


def evaluate(coupling, omega, e_values, channel=Channel.fuel):
    """Weighted result E = sum omega_i * E_i over the coupled clusters.

    Keyword arguments:
    coupling -- CouplingMap
    omega -- cluster fractions, indexed by cluster id (array or dict)
    e_values -- E_i per coupled primitive label (dict)
    channel -- Channel, mpg is only derived for fuel
    """
    if not len(coupling):
        raise EmptyInput("nothing was coupled")
    channel = Channel(channel)
    weights = np.array([omega[e.cluster_id] for e in coupling.entries], dtype=float)
    total = weights.sum()
    if not total > 0:
        raise EmptyInput("coupled clusters hold no data points")
    weights = weights / total
    values = np.array([e_values[e.label] for e in coupling.entries], dtype=float)
    contributions = weights * values
    e = float(np.sum(contributions))
    per_cluster = [{'rank': entry.rank, 'cluster_id': entry.cluster_id, 'label': entry.label, 'kl': entry.kl,
                    'omega': float(w), 'E_i': float(v), 'contribution': float(c)}
                   for entry, w, v, c in zip(coupling.entries, weights, values, contributions)]
    return EvaluationResult(e, per_cluster, channel, mpg(e) if channel is Channel.fuel else None)
