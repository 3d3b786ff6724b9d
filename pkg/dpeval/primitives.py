"""Driving primitives

A driving primitive is one state of a vehicle's segmentation, described by
the moments of the ORIGINAL (physical unit) speed and acceleration of every
data point carrying that label. Moments use the population convention
(divisor n) so a single point primitive has a zero covariance.
"""

import logging
import math

import numpy as np

from dpeval.exceptions import AlignmentError, EmptyInput

DEFAULT_TAIL_FRACTION = 0.05


class Primitive(object):
    """Physical moments of one label of one vehicle.

    segments holds (trip_id, start index, duration) for every run of the label.
    """

    def __init__(self, vehicle_id, label, point_count, mean, cov, fraction, segments=None):
        self.vehicle_id = vehicle_id
        self.label = int(label)
        self.point_count = int(point_count)
        self.mean = np.asarray(mean, dtype=float)
        self.cov = np.asarray(cov, dtype=float)
        self.fraction = float(fraction)
        self.segments = [(str(trip), int(start), int(duration)) for trip, start, duration in (segments or [])]

    def __repr__(self):
        return "Primitive(%s/%d, n=%d, mean=%s)" % (self.vehicle_id, self.label, self.point_count,
                                                    np.array2string(self.mean, precision=3))

    def to_dict(self):
        return {
            'vehicle_id': self.vehicle_id,
            'label': self.label,
            'point_count': self.point_count,
            'mean': self.mean.tolist(),
            'cov': self.cov.tolist(),
            'fraction': self.fraction,
            'segments': [list(s) for s in self.segments],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data['vehicle_id'], data['label'], data['point_count'], data['mean'], data['cov'],
                   data['fraction'], data.get('segments'))


def moments(points):
    """Population mean and covariance of the rows of points."""
    points = np.reshape(np.asarray(points, dtype=float), (len(points), -1))
    mean = points.mean(axis=0)
    centered = points - mean
    cov = centered.T.dot(centered) / points.shape[0]
    return mean, 0.5 * (cov + cov.T)


def merge_moments(parts):
    """Merge (count, mean, cov) triples into the moments of the concatenated data.

    Parts with a zero count are ignored. Returns (count, mean, cov).
    """
    parts = [(int(n), np.asarray(m, dtype=float), np.asarray(c, dtype=float)) for n, m, c in parts if n > 0]
    if not parts:
        raise EmptyInput("no data to merge")
    total = sum(n for n, _, _ in parts)
    mean = sum(n * m for n, m, _ in parts) / total
    cov = sum(n * (c + np.outer(m - mean, m - mean)) for n, m, c in parts) / total
    return total, mean, 0.5 * (cov + cov.T)


def _segments(trip_id, labels):
    change = np.flatnonzero(np.diff(labels)) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [len(labels)]))
    return [(int(labels[s]), trip_id, int(s), int(e - s)) for s, e in zip(starts, ends)]


def compute_primitives(label_seqs, physical, vehicle_id, trip_ids=None):
    """Build one Primitive per used label of a vehicle.

    Keyword arguments:
    label_seqs -- one label array per trip
    physical -- one (T_r, 2) array of original (v, a) per trip
    vehicle_id -- id of the vehicle
    trip_ids -- names of the trips, defaults to the index
    """
    if len(label_seqs) != len(physical):
        raise AlignmentError("%s: %d label sequences for %d trips" % (vehicle_id, len(label_seqs), len(physical)))
    if trip_ids is None:
        trip_ids = [str(r) for r in range(len(label_seqs))]

    labels_all, points_all, segments = [], [], {}
    for trip_id, labels, points in zip(trip_ids, label_seqs, physical):
        labels = np.asarray(labels, dtype=int)
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if len(labels) != points.shape[0]:
            raise AlignmentError("%s/%s: %d labels for %d samples" % (vehicle_id, trip_id, len(labels),
                                                                     points.shape[0]))
        if len(labels) == 0:
            continue
        for label, trip, start, duration in _segments(trip_id, labels):
            segments.setdefault(label, []).append((trip, start, duration))
        labels_all.append(labels)
        points_all.append(points)
    if not labels_all:
        raise EmptyInput("%s: no samples" % vehicle_id)

    labels_all = np.concatenate(labels_all)
    points_all = np.vstack(points_all)
    total = len(labels_all)
    result = []
    for label in np.unique(labels_all):
        members = points_all[labels_all == label]
        mean, cov = moments(members)
        result.append(Primitive(vehicle_id, label, members.shape[0], mean, cov, members.shape[0] / total,
                                segments[int(label)]))
    logging.getLogger(__name__).debug("%s : %d primitives over %d points", vehicle_id, len(result), total)
    return result


def rank_key(primitive):
    return -primitive.fraction, -primitive.point_count, primitive.label


def rank_and_prune(primitives, tail_fraction=DEFAULT_TAIL_FRACTION):
    """Sort by descending fraction and drop the last ceil(tail_fraction * n) primitives.

    The top ranked primitive is always kept.
    """
    if not primitives:
        raise EmptyInput("no primitives to rank")
    if not 0.0 <= tail_fraction < 1.0:
        raise ValueError("tail_fraction must be in [0, 1)")
    ranked = sorted(primitives, key=rank_key)
    pruned = min(int(math.ceil(tail_fraction * len(ranked) - 1e-9)), len(ranked) - 1)
    if pruned:
        logging.getLogger(__name__).debug("%s : pruned %d of %d primitives", ranked[0].vehicle_id, pruned,
                                          len(ranked))
    return ranked[:len(ranked) - pruned]


def coverage(primitives, top_fraction):
    """Share of the data points covered by the top top_fraction of the ranked primitives."""
    ranked = sorted(primitives, key=rank_key)
    total = sum(p.point_count for p in ranked)
    if not total:
        return 0.0
    top = int(math.ceil(top_fraction * len(ranked) - 1e-9))
    return sum(p.point_count for p in ranked[:top]) / float(total)
