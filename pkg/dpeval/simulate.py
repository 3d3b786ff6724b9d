"""Synthetic fleets

Generates trip logs of vehicles that switch between driving regimes. Each
regime is a Gaussian over (v, a) with an expected dwell time. A trip is a
sequence of regime segments: the next regime is drawn with the mixing
weights, its dwell is 1 + Poisson(dwell - 1) steps, samples are Gaussian
with the speed clamped at 0. The regime of every step is saved as ground
truth next to the logs.
"""

import logging
import os

import numpy as np

from dpeval import rng as rngs
from dpeval.exceptions import ConfigError
from dpeval.trips import DEFAULT_RATE_HZ, TripSeries, VehicleClass, serialize_trip, trip_file_name
from dpeval.utils import dumps

IDLE = "idle"
TRUTH_FILE = "truth.json"
VEHICLES_FILE = "vehicles.json"


class Regime(object):
    """One driving regime. fuel and emission are (mean, noise) of the per sample rate."""

    def __init__(self, **kwargs):
        try:
            self.name = str(kwargs.get('name', 'regime'))
            self.mean = np.asarray(kwargs.get('mean', [0.0, 0.0]), dtype=float)
            self.cov = np.asarray(kwargs.get('cov', [[1.0, 0.0], [0.0, 0.05]]), dtype=float)
            self.dwell = float(kwargs.get('dwell', 30.0))
            self.weight = float(kwargs.get('weight', 1.0))
            self.fuel = kwargs.get('fuel')
            self.emission = kwargs.get('emission')
        except (TypeError, ValueError) as exc:
            raise ConfigError("regime: %s" % exc)

    def to_dict(self):
        return {
            'name': self.name,
            'mean': self.mean.tolist(),
            'cov': self.cov.tolist(),
            'dwell': self.dwell,
            'weight': self.weight,
            'fuel': None if self.fuel is None else list(self.fuel),
            'emission': None if self.emission is None else list(self.emission),
        }

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("a regime must be a mapping, got %r" % (data,))
        return cls(**data)


class SyntheticFleetSpec(object):
    """Description of a synthetic fleet.

    trip_steps is the (min, max) number of samples of a trip, drawn uniformly.
    n_buses extra vehicles are generated with vehicle class bus.
    """

    def __init__(self, **kwargs):
        try:
            self.n_vehicles = int(kwargs.get('n_vehicles', 10))
            self.n_buses = int(kwargs.get('n_buses', 0))
            self.trips_per_vehicle = int(kwargs.get('trips_per_vehicle', 4))
            self.trip_steps = [int(x) for x in kwargs.get('trip_steps', [9010, 9010])]
            self.rate_hz = float(kwargs.get('rate_hz', DEFAULT_RATE_HZ))
            self.regimes = [r if isinstance(r, Regime) else Regime.from_dict(r)
                            for r in kwargs.get('regimes', default_regimes())]
        except (TypeError, ValueError) as exc:
            raise ConfigError("fleet spec: %s" % exc)

    @property
    def idle_weight(self):
        return sum(r.weight for r in self.regimes if r.name == IDLE)

    @property
    def weights(self):
        return np.array([r.weight for r in self.regimes])

    def validate(self):
        if self.n_vehicles < 1 or self.n_buses < 0 or self.trips_per_vehicle < 1:
            raise ConfigError("need at least one vehicle with one trip")
        if len(self.trip_steps) != 2 or not 2 <= self.trip_steps[0] <= self.trip_steps[1]:
            raise ConfigError("trip_steps must be [min, max] with 2 <= min <= max")
        if not self.rate_hz > 0:
            raise ConfigError("rate_hz must be > 0")
        if not self.regimes:
            raise ConfigError("at least one regime is needed")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ConfigError("regime weights must be non-negative and sum to 1")
        for regime in self.regimes:
            if regime.dwell < 1:
                raise ConfigError("regime %s: dwell must be >= 1" % regime.name)
            if regime.mean.shape != (2,) or regime.cov.shape != (2, 2) or not np.allclose(regime.cov, regime.cov.T):
                raise ConfigError("regime %s: mean must be a 2 vector and cov a symmetric 2x2 matrix" % regime.name)
            if np.any(np.linalg.eigvalsh(regime.cov) < 0):
                raise ConfigError("regime %s: cov is not positive semi-definite" % regime.name)
            if regime.name == IDLE and np.any(regime.mean != 0):
                raise ConfigError("the idle regime must have mean (0, 0)")
        return self

    def to_dict(self):
        return {
            'n_vehicles': self.n_vehicles,
            'n_buses': self.n_buses,
            'trips_per_vehicle': self.trips_per_vehicle,
            'trip_steps': list(self.trip_steps),
            'rate_hz': self.rate_hz,
            'regimes': [r.to_dict() for r in self.regimes],
        }

    @classmethod
    def from_dict(cls, data):
        if data is not None and not isinstance(data, dict):
            raise ConfigError("a fleet spec must be a mapping, got %s" % type(data).__name__)
        return cls(**(data or {}))


def default_regimes(idle_weight=0.3, dwell=30.0):
    """An idle regime with idle_weight plus 7 driving regimes sharing the rest equally."""
    driving = [
        ('creep', [3.0, 0.0], [[0.5, 0.0], [0.0, 0.05]], (0.030, 0.003)),
        ('urban', [8.0, 0.0], [[1.0, 0.0], [0.0, 0.05]], (0.035, 0.003)),
        ('arterial', [14.0, 0.0], [[1.0, 0.0], [0.0, 0.05]], (0.030, 0.003)),
        ('suburban', [21.0, 0.0], [[1.0, 0.0], [0.0, 0.05]], (0.028, 0.003)),
        ('highway', [29.0, 0.0], [[1.0, 0.0], [0.0, 0.05]], (0.033, 0.003)),
        ('accelerate', [10.0, 1.5], [[2.0, 0.0], [0.0, 0.05]], (0.060, 0.006)),
        ('brake', [10.0, -1.5], [[2.0, 0.0], [0.0, 0.05]], (0.015, 0.002)),
    ]
    share = (1.0 - idle_weight) / len(driving)
    regimes = []
    if idle_weight > 0:
        regimes.append(Regime(name=IDLE, mean=[0.0, 0.0], cov=[[0.0025, 0.0], [0.0, 0.0004]], dwell=dwell,
                              weight=idle_weight, fuel=(0.050, 0.002), emission=(1.0, 0.05)))
    for name, mean, cov, fuel in driving:
        regimes.append(Regime(name=name, mean=mean, cov=cov, dwell=dwell, weight=share, fuel=fuel,
                              emission=(fuel[0] * 20.0, fuel[1] * 20.0)))
    return regimes


def simulate_trip(spec, vehicle_id, trip_id, rng, vehicle_class=VehicleClass.light_duty_car):
    """Generate one trip; returns (TripSeries, list of [regime index, start, duration])."""
    low, high = spec.trip_steps
    steps = int(rng.integers(low, high + 1))
    weights = spec.weights / spec.weights.sum()
    labels = np.empty(steps, dtype=int)
    segments = []
    start = 0
    while start < steps:
        regime = int(rng.choice(len(spec.regimes), p=weights))
        duration = min(1 + int(rng.poisson(spec.regimes[regime].dwell - 1.0)), steps - start)
        labels[start:start + duration] = regime
        segments.append([regime, start, duration])
        start += duration

    va = np.empty((steps, 2))
    fuel = np.empty(steps)
    emission = np.empty(steps)
    has_fuel = all(r.fuel is not None for r in spec.regimes)
    has_emission = all(r.emission is not None for r in spec.regimes)
    for index, regime in enumerate(spec.regimes):
        mask = labels == index
        count = int(mask.sum())
        if not count:
            continue
        va[mask] = rng.multivariate_normal(regime.mean, regime.cov, size=count, method='eigh')
        if has_fuel:
            fuel[mask] = regime.fuel[0] + regime.fuel[1] * rng.standard_normal(count)
        if has_emission:
            emission[mask] = regime.emission[0] + regime.emission[1] * rng.standard_normal(count)
    va[:, 0] = np.maximum(va[:, 0], 0.0)

    t = np.round(np.arange(steps) / spec.rate_hz, 6)
    trip = TripSeries(vehicle_id, trip_id, t, va[:, 0], va[:, 1], np.ones(steps, dtype=bool),
                      fuel_rate=np.maximum(fuel, 0.0) if has_fuel else None,
                      emission_rate=np.maximum(emission, 0.0) if has_emission else None,
                      rate_hz=spec.rate_hz, vehicle_class=vehicle_class)
    return trip, segments


def vehicle_ids(spec):
    cars = ["veh%03d" % i for i in range(spec.n_vehicles)]
    buses = ["bus%03d" % i for i in range(spec.n_buses)]
    return cars, buses


def simulate_fleet(spec, seed):
    """Generate all trips of a fleet; returns (list of TripSeries, truth dict)."""
    spec.validate()
    cars, buses = vehicle_ids(spec)
    trips, truth = [], {}
    for vehicle_id in cars + buses:
        vehicle_class = VehicleClass.bus if vehicle_id in buses else VehicleClass.light_duty_car
        for number in range(spec.trips_per_vehicle):
            trip_id = "trip%02d" % number
            trip, segments = simulate_trip(spec, vehicle_id, trip_id, rngs.derive(seed, 'simulate', vehicle_id,
                                                                                  trip_id), vehicle_class)
            trips.append(trip)
            truth["%s/%s" % (vehicle_id, trip_id)] = segments
    return trips, truth


def write_fleet(spec, out_dir, seed):
    """Write the trip logs, vehicles.json and truth.json of a synthetic fleet to out_dir."""
    logger = logging.getLogger(__name__)
    trips, truth = simulate_fleet(spec, seed)
    if not os.path.isdir(out_dir):
        os.makedirs(out_dir)
    classes = {}
    for trip in trips:
        with open(os.path.join(out_dir, trip_file_name(trip.vehicle_id, trip.trip_id)), 'w',
                  encoding='utf-8', newline='\n') as outputfile:
            outputfile.write(serialize_trip(trip))
        classes[trip.vehicle_id] = trip.vehicle_class.value
    with open(os.path.join(out_dir, VEHICLES_FILE), 'w', encoding='utf-8', newline='\n') as outputfile:
        outputfile.write(dumps(classes))
    with open(os.path.join(out_dir, TRUTH_FILE), 'w', encoding='utf-8', newline='\n') as outputfile:
        outputfile.write(dumps({'regimes': [r.name for r in spec.regimes], 'segments': truth}))
    logger.info("wrote %d trips of %d vehicles to %s", len(trips), len(classes), out_dir)
    return trips, truth


def truth_labels(segments, steps=None):
    """Per step regime index of a list of [regime, start, duration]."""
    steps = steps if steps is not None else sum(s[2] for s in segments)
    labels = np.empty(steps, dtype=int)
    for regime, start, duration in segments:
        labels[start:start + duration] = regime
    return labels
