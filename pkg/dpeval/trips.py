"""Trips

This module reads trip logs, applies the fleet query (vehicle class, minimum
total driving duration, CAN validity flag) and standardizes the speed and
acceleration channels of a vehicle.

A trip log is a UTF-8 csv file with the header ``t,v,a[,fuel_rate][,emission_rate],valid``.
The ``a`` column may be left out, in which case the acceleration is derived from
the speed.
"""

import io
import logging
import re
from collections import OrderedDict, namedtuple
from enum import Enum

import numpy as np
import pandas as pd

from dpeval.exceptions import EmptyFile, EmptyInput, MalformedRow, NonMonotonicTime, ZeroVariance, ConfigError

DEFAULT_RATE_HZ = 10.0
SPACING_TOLERANCE = 0.01
OPTIONAL_COLUMNS = ('fuel_rate', 'emission_rate')

Sample = namedtuple('Sample', ['t', 'v', 'a', 'fuel_rate', 'emission_rate', 'valid'])


class VehicleClass(Enum):
    light_duty_car = "light_duty_car"
    bus = "bus"
    other = "other"


class TripSeries(object):
    """One trip of one vehicle, sampled at a fixed rate.

    The samples are kept as numpy columns; ``fuel_rate`` and ``emission_rate``
    are None when the log does not carry the channel, and contain NaN for
    individual missing values.
    """

    def __init__(self, vehicle_id, trip_id, t, v, a, valid, fuel_rate=None, emission_rate=None,
                 rate_hz=DEFAULT_RATE_HZ, vehicle_class=VehicleClass.light_duty_car):
        self.vehicle_id = str(vehicle_id)
        self.trip_id = str(trip_id)
        self.rate_hz = float(rate_hz)
        self.vehicle_class = VehicleClass(vehicle_class)
        self.t = np.asarray(t, dtype=float)
        self.v = np.asarray(v, dtype=float)
        self.a = np.asarray(a, dtype=float)
        self.valid = np.asarray(valid, dtype=bool)
        self.fuel_rate = None if fuel_rate is None else np.asarray(fuel_rate, dtype=float)
        self.emission_rate = None if emission_rate is None else np.asarray(emission_rate, dtype=float)
        if len(self.t) == 0:
            raise EmptyInput("trip %s/%s has no samples" % (self.vehicle_id, self.trip_id))

    def __len__(self):
        return len(self.t)

    @property
    def duration(self):
        """Duration in seconds, (n - 1) / rate_hz."""
        return (len(self.t) - 1) / self.rate_hz

    @property
    def samples(self):
        """The samples as a list of Sample tuples."""
        fuel = self.fuel_rate if self.fuel_rate is not None else [None] * len(self)
        emission = self.emission_rate if self.emission_rate is not None else [None] * len(self)
        return [Sample(*row) for row in zip(self.t, self.v, self.a, fuel, emission, self.valid)]

    def physical(self):
        """Return the (n, 2) array of speed and acceleration."""
        return np.column_stack((self.v, self.a))

    def channel(self, name):
        """Return the fuel_rate or emission_rate column, or None if the log does not have it."""
        if name not in OPTIONAL_COLUMNS:
            raise ValueError("unknown channel %s" % name)
        return getattr(self, name)

    def subset(self, mask):
        """Return a copy of this trip with only the samples selected by mask."""
        return TripSeries(self.vehicle_id, self.trip_id, self.t[mask], self.v[mask], self.a[mask], self.valid[mask],
                          fuel_rate=None if self.fuel_rate is None else self.fuel_rate[mask],
                          emission_rate=None if self.emission_rate is None else self.emission_rate[mask],
                          rate_hz=self.rate_hz, vehicle_class=self.vehicle_class)


class FleetQuery(object):
    """Which vehicles and samples take part in the analysis."""

    def __init__(self, **kwargs):
        self.min_total_duration_s = float(kwargs.get('min_total_duration_s', 3600.0))
        self.require_valid_flag = bool(kwargs.get('require_valid_flag', True))
        classes = kwargs.get('allowed_classes', [VehicleClass.light_duty_car])
        self.allowed_classes = frozenset(VehicleClass(c) for c in classes)

    def validate(self):
        if not self.min_total_duration_s > 0:
            raise ConfigError("fleet_query.min_total_duration_s must be > 0")
        if not self.allowed_classes:
            raise ConfigError("fleet_query.allowed_classes can not be empty")
        return self

    def to_dict(self):
        return {
            'min_total_duration_s': self.min_total_duration_s,
            'require_valid_flag': self.require_valid_flag,
            'allowed_classes': sorted(c.value for c in self.allowed_classes),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(**(data or {}))


class StandardizationParams(object):
    """Per vehicle z-score parameters of the (v, a) channels."""

    def __init__(self, mean, std, scope="per_vehicle"):
        self.mean = np.asarray(mean, dtype=float)
        self.std = np.asarray(std, dtype=float)
        self.scope = scope

    def to_dict(self):
        return {'mean': self.mean.tolist(), 'std': self.std.tolist(), 'scope': self.scope}

    @classmethod
    def from_dict(cls, data):
        return cls(data['mean'], data['std'], data.get('scope', 'per_vehicle'))


def _line_of(error):
    match = re.search(r'line (\d+)', str(error))
    return int(match.group(1)) if match else 0


def _parse_valid(column):
    mapping = {'1': True, '0': False, 'true': True, 'false': False}
    values = column.astype(str).str.strip().str.lower()
    bad = ~values.isin(list(mapping))
    return values.map(mapping), bad


def parse_trip_file(source, fmt="csv", vehicle_id="", trip_id="", rate_hz=DEFAULT_RATE_HZ,
                    vehicle_class=VehicleClass.light_duty_car):
    """Parse a trip log into a TripSeries.

    Rows with valid=0 are kept and flagged, they are removed by filter_fleet.

    Keyword arguments:
    source -- binary stream, bytes or str with the csv content
    fmt -- format of the content, only csv is supported
    vehicle_id -- id of the vehicle the trip belongs to
    trip_id -- id of the trip
    rate_hz -- sampling rate of the log
    vehicle_class -- VehicleClass of the vehicle
    """
    if fmt != "csv":
        raise ValueError("unsupported trip format %s" % fmt)
    if hasattr(source, 'read'):
        source = source.read()
    if isinstance(source, bytes):
        try:
            source = source.decode('utf-8-sig')
        except UnicodeDecodeError as exc:
            raise MalformedRow(0, "not utf-8: %s" % exc)

    try:
        frame = pd.read_csv(io.StringIO(source), dtype=str, skipinitialspace=True, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise EmptyFile("trip %s/%s is empty" % (vehicle_id, trip_id))
    except pd.errors.ParserError as exc:
        raise MalformedRow(_line_of(exc), str(exc))

    columns = [c.strip() for c in frame.columns]
    frame.columns = columns
    required = ['t', 'v', 'valid']
    allowed = set(required) | {'a'} | set(OPTIONAL_COLUMNS)
    missing = [c for c in required if c not in columns]
    unknown = [c for c in columns if c not in allowed]
    if missing or unknown or len(set(columns)) != len(columns):
        raise MalformedRow(1, "bad header %s" % ",".join(columns))
    if frame.empty:
        raise EmptyFile("trip %s/%s has no samples" % (vehicle_id, trip_id))

    # line 1 is the header
    lines = np.arange(len(frame)) + 2
    values = {}
    for name in ['t', 'v', 'a'] + list(OPTIONAL_COLUMNS):
        if name not in columns:
            continue
        raw = frame[name].str.strip()
        numeric = pd.to_numeric(raw, errors='coerce').to_numpy(dtype=float)
        bad = np.isnan(numeric) | np.isinf(numeric)
        if name in OPTIONAL_COLUMNS:
            # an empty cell is a missing measurement
            bad &= (raw != '').to_numpy()
        if bad.any():
            row = int(np.argmax(bad))
            raise MalformedRow(int(lines[row]), "column %s has value %r" % (name, frame[name].iloc[row]))
        values[name] = numeric
    valid, bad = _parse_valid(frame['valid'])
    if bad.any():
        row = int(np.argmax(bad.to_numpy()))
        raise MalformedRow(int(lines[row]), "column valid has value %r" % frame['valid'].iloc[row])

    t, v = values['t'], values['v']
    if (t < 0).any():
        row = int(np.argmax(t < 0))
        raise MalformedRow(int(lines[row]), "negative time %r" % t[row])
    if (v < 0).any():
        row = int(np.argmax(v < 0))
        raise MalformedRow(int(lines[row]), "negative speed %r" % v[row])
    steps = np.diff(t)
    if (steps <= 0).any():
        row = int(np.argmax(steps <= 0)) + 1
        raise NonMonotonicTime(int(lines[row]), t[row - 1], t[row])
    jitter = np.abs(steps * rate_hz - 1.0) > SPACING_TOLERANCE
    if jitter.any():
        row = int(np.argmax(jitter)) + 1
        raise MalformedRow(int(lines[row]), "sample spacing %r does not match %r Hz" % (steps[row - 1], rate_hz))

    a = values['a'] if 'a' in values else derive_acceleration(v, rate_hz)
    return TripSeries(vehicle_id, trip_id, t, v, a, valid.to_numpy(dtype=bool),
                      fuel_rate=values.get('fuel_rate'), emission_rate=values.get('emission_rate'),
                      rate_hz=rate_hz, vehicle_class=vehicle_class)


def serialize_trip(trip):
    """Write a TripSeries back to the csv format read by parse_trip_file."""
    frame = pd.DataFrame(OrderedDict([('t', trip.t), ('v', trip.v), ('a', trip.a)]))
    for name in OPTIONAL_COLUMNS:
        column = trip.channel(name)
        if column is not None:
            frame[name] = column
    frame['valid'] = trip.valid.astype(int)
    return frame.to_csv(index=False, lineterminator='\n', na_rep='')


def derive_acceleration(v, rate_hz=DEFAULT_RATE_HZ):
    """Acceleration from speed: central differences followed by a 3-tap moving average."""
    v = np.asarray(v, dtype=float)
    if len(v) < 2:
        return np.zeros_like(v)
    raw = np.gradient(v, 1.0 / rate_hz)
    padded = np.concatenate(([raw[0]], raw, [raw[-1]]))
    return np.convolve(padded, np.ones(3) / 3.0, mode='valid')


def split_valid(trip):
    """Split a trip into its runs of valid samples.

    A trip with one run keeps its id, otherwise the runs are named <trip_id>.<n>.
    """
    change = np.flatnonzero(np.diff(trip.valid.astype(int))) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [len(trip)]))
    runs = [(s, e) for s, e in zip(starts, ends) if trip.valid[s]]
    pieces = []
    for number, (start, end) in enumerate(runs):
        mask = np.zeros(len(trip), dtype=bool)
        mask[start:end] = True
        piece = trip.subset(mask)
        if len(runs) > 1:
            piece.trip_id = "%s.%d" % (trip.trip_id, number)
        pieces.append(piece)
    return pieces


def filter_fleet(trips, query):
    """Apply the fleet query to a collection of trips.

    Samples with an invalid CAN flag are dropped (when the query asks for it)
    and the trip is split where they were. Vehicles of a class that is not
    allowed are removed, and only vehicles whose total duration over all trips
    reaches min_total_duration_s are kept.

    Returns an OrderedDict vehicle_id -> list of TripSeries, both sorted by id.
    """
    logger = logging.getLogger(__name__)
    grouped = {}
    for trip in trips:
        if trip.vehicle_class not in query.allowed_classes:
            logger.debug("[%s] : trip %s removed, class %s", trip.vehicle_id, trip.trip_id, trip.vehicle_class.value)
            continue
        if query.require_valid_flag and not trip.valid.all():
            if not trip.valid.any():
                logger.debug("[%s] : trip %s removed, no valid samples", trip.vehicle_id, trip.trip_id)
                continue
            pieces = split_valid(trip)
            logger.debug("[%s] : trip %s dropping %d invalid samples, %d piece(s) left", trip.vehicle_id,
                         trip.trip_id, int((~trip.valid).sum()), len(pieces))
        else:
            pieces = [trip]
        grouped.setdefault(trip.vehicle_id, []).extend(pieces)

    fleet = OrderedDict()
    for vehicle_id in sorted(grouped):
        vehicle_trips = sorted(grouped[vehicle_id], key=lambda x: x.trip_id)
        total = sum(trip.duration for trip in vehicle_trips)
        if total < query.min_total_duration_s:
            logger.info("[%s] : excluded, total duration %.1f s below %.1f s", vehicle_id, total,
                        query.min_total_duration_s)
            continue
        fleet[vehicle_id] = vehicle_trips
    return fleet


def standardize(vehicle_samples):
    """Z-score the speed and acceleration channels of one vehicle.

    Uses the population convention (divisor n) for the standard deviation.

    Keyword arguments:
    vehicle_samples -- (n, 2) array like of (v, a) pairs

    Returns (standardized (n, 2) array, StandardizationParams)
    """
    x = np.asarray(vehicle_samples, dtype=float)
    if x.ndim != 2 or x.shape[1] != 2:
        raise ValueError("expected an (n, 2) array of (v, a) samples")
    if x.shape[0] < 2:
        raise EmptyInput("standardization needs at least 2 samples, got %d" % x.shape[0])
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    for idx, channel in enumerate(('v', 'a')):
        if not std[idx] > 1e-12 * max(1.0, abs(mean[idx])):
            raise ZeroVariance(channel)
    return (x - mean) / std, StandardizationParams(mean, std)


def unstandardize(z, params):
    """Inverse of standardize."""
    return np.asarray(z, dtype=float) * params.std + params.mean


def fleet_summary(fleet):
    """Key parameters of a filtered fleet, durations in minutes."""
    if not fleet:
        return OrderedDict([('vehicle_amount', 0), ('total_trip_amount', 0)])
    totals = [sum(trip.duration for trip in trips) / 60.0 for trips in fleet.values()]
    longest = [max(trip.duration for trip in trips) / 60.0 for trips in fleet.values()]
    return OrderedDict([
        ('vehicle_amount', len(fleet)),
        ('total_trip_amount', sum(len(trips) for trips in fleet.values())),
        ('longest_trip_duration_min', max(longest)),
        ('average_longest_trip_duration_min', float(np.mean(longest))),
        ('total_driving_time_min', float(np.sum(totals))),
        ('max_total_driving_time_min', max(totals)),
        ('min_total_driving_time_min', min(totals)),
    ])


def trip_file_name(vehicle_id, trip_id):
    return "%s__%s.csv" % (vehicle_id, trip_id)


def split_trip_file_name(filename):
    """Return (vehicle_id, trip_id) from a <vehicle_id>__<trip_id>.csv file name."""
    stem = filename[:-4] if filename.lower().endswith('.csv') else filename
    if '__' not in stem:
        raise ValueError("trip file %s is not named <vehicle_id>__<trip_id>.csv" % filename)
    vehicle_id, trip_id = stem.split('__', 1)
    return vehicle_id, trip_id
