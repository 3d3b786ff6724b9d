"""Pipeline stages

Each stage reads the artifacts of the previous stage from the store and
writes its own:

    ingest   : fleet.json, trips/<vehicle>/<trip>.csv, standardization/<vehicle>.json
    segment  : segmentation/<vehicle>.json, primitives/<vehicle>.json
    cluster  : clusters/model.json
    couple   : coupling/<eval vehicle>.json
    evaluate : evaluation/<eval vehicle>.json
    report   : report/<eval vehicle>/...

Progress is reported with status_update, failures are logged with the
resource they belong to and raised again.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from dpeval import hsmm, reports, store as layout
from dpeval.clusters import ClusterModel, cannot_link_pairs, fit_constrained_kmeans, primitive_features, \
    rank_clusters
from dpeval.config import config_hash, read_document
from dpeval.coupling import CouplingMap, EvaluationResult, GaussianMoments, aggregate_measurement, couple, evaluate
from dpeval.exceptions import ConfigError, DataError, EmptyInput, MixedConfig
from dpeval.primitives import Primitive, compute_primitives, coverage, rank_and_prune, rank_key
from dpeval.store import ArtifactStore
from dpeval.trips import StandardizationParams, VehicleClass, filter_fleet, fleet_summary, parse_trip_file, \
    split_trip_file_name, standardize
from dpeval.utils import Channel, StageStatus

VEHICLE_FILES = ('vehicles.json', 'vehicles.yml', 'vehicles.yaml')


def status_update(status, resource, message):
    """Report the progress of a stage.

    Keyword arguments:
    status - StageStatus
    resource - the vehicle or artifact the update is about
    message - contents of the status update
    """
    logging.getLogger(__name__).info("[%s] : %s: %s", resource, status, message)


def open_store(config, force=False):
    return ArtifactStore(root=config.store_dir, config_hash=config_hash(config), force=force)


def _guard(store, relpath):
    """Refuse to overwrite an artifact of another configuration unless forced."""
    if not store.exists(relpath) or store.force:
        return
    found = read_document(store.path(relpath)).get('config_hash')
    if found != store.config_hash:
        raise MixedConfig(relpath, store.config_hash, str(found))


def _run_stage(resource, stage, func, *args):
    status_update(StageStatus.start, resource, "Started %s" % stage)
    try:
        result = func(*args)
    except Exception as exc:
        status = "Error in %s : %s" % (stage, exc)
        logging.getLogger(__name__).exception("[%s] %s", resource, status)
        status_update(StageStatus.error, resource, status)
        raise
    status_update(StageStatus.done, resource, "Done %s" % stage)
    return result


# ----------------------------------------------------------------------
# ingest
# ----------------------------------------------------------------------
def _vehicle_classes(input_dir):
    for name in VEHICLE_FILES:
        filename = os.path.join(input_dir, name)
        if os.path.isfile(filename):
            try:
                return {str(k): VehicleClass(v) for k, v in read_document(filename).items()}
            except ValueError as exc:
                raise ConfigError("%s : %s" % (name, exc))
    return {}


def read_trips(input_dir, rate_hz):
    """Parse every <vehicle_id>__<trip_id>.csv file of input_dir, sorted by name."""
    if not os.path.isdir(input_dir):
        raise DataError("input %s is not a directory" % input_dir)
    names = sorted(n for n in os.listdir(input_dir) if n.lower().endswith('.csv'))
    if not names:
        raise EmptyInput("no trip files in %s" % input_dir)
    classes = _vehicle_classes(input_dir)
    trips = []
    for name in names:
        try:
            vehicle_id, trip_id = split_trip_file_name(name)
        except ValueError as exc:
            raise DataError(str(exc))
        try:
            with open(os.path.join(input_dir, name), 'rb') as inputfile:
                trips.append(parse_trip_file(inputfile, vehicle_id=vehicle_id, trip_id=trip_id, rate_hz=rate_hz,
                                             vehicle_class=classes.get(vehicle_id, VehicleClass.light_duty_car)))
        except DataError as exc:
            exc.args = ("%s: %s" % (name, exc),)
            raise
    return trips


def cmd_ingest(config, input_dir, force=False):
    """Parse, filter and standardize the trip logs of input_dir; returns the fleet summary."""
    store = open_store(config, force)
    _guard(store, layout.FLEET)
    trips = read_trips(input_dir, config.rate_hz)
    fleet = filter_fleet(trips, config.fleet_query)
    if not fleet:
        raise EmptyInput("no vehicle of %s passes the fleet query" % input_dir)

    vehicles = {}
    for vehicle_id, vehicle_trips in fleet.items():
        try:
            _, params = standardize(np.vstack([trip.physical() for trip in vehicle_trips]))
        except DataError as exc:
            exc.args = ("vehicle %s: %s" % (vehicle_id, exc),)
            raise
        for trip in vehicle_trips:
            store.write_trip(trip)
        store.write_json(layout.STANDARDIZATION % vehicle_id, params.to_dict())
        vehicles[vehicle_id] = {
            'vehicle_class': vehicle_trips[0].vehicle_class.value,
            'trips': [trip.trip_id for trip in vehicle_trips],
            'samples': int(sum(len(trip) for trip in vehicle_trips)),
            'duration_s': float(sum(trip.duration for trip in vehicle_trips)),
        }
        status_update(StageStatus.processing, vehicle_id, "%d trips ingested" % len(vehicle_trips))

    summary = fleet_summary(fleet)
    store.write_json(layout.FLEET, {'rate_hz': config.rate_hz, 'vehicles': vehicles, 'summary': summary})
    return summary


# ----------------------------------------------------------------------
# segment
# ----------------------------------------------------------------------
def load_fleet(store):
    return store.read_json('ingest', layout.FLEET)


def load_vehicle_trips(store, fleet, vehicle_id):
    if vehicle_id not in fleet['vehicles']:
        raise ConfigError("vehicle %s is not part of the ingested fleet" % vehicle_id)
    info = fleet['vehicles'][vehicle_id]
    return [store.read_trip(vehicle_id, trip_id, fleet['rate_hz'], info['vehicle_class']) for trip_id in info['trips']]


def segment_vehicle(store, config, fleet, vehicle_id):
    """Segment all trips of one vehicle and write its segmentation and primitives."""
    trips = load_vehicle_trips(store, fleet, vehicle_id)
    params = StandardizationParams.from_dict(store.read_json('ingest', layout.STANDARDIZATION % vehicle_id))
    trip_ids = [trip.trip_id for trip in trips]
    physical = [trip.physical() for trip in trips]
    obs = [(x - params.mean) / params.std for x in physical]

    sample = hsmm.fit(obs, config.hsmm, key=(vehicle_id,), trip_ids=trip_ids)
    primitives = compute_primitives(sample.label_seqs, physical, vehicle_id, trip_ids)
    retained = rank_and_prune(primitives, config.tail_fraction)
    ranked = sorted(primitives, key=rank_key)

    store.write_json(layout.SEGMENTATION % vehicle_id, {
        'vehicle_id': vehicle_id,
        'trip_ids': trip_ids,
        'used_states': sample.used_states(),
        'sample': sample.to_dict(),
    })
    store.write_json(layout.PRIMITIVES % vehicle_id, {
        'vehicle_id': vehicle_id,
        'primitives': [p.to_dict() for p in ranked],
        'retained': [p.label for p in retained],
        'coverage_top_38': coverage(ranked, 0.38),
    })
    status_update(StageStatus.processing, vehicle_id, "%d states used, %d of %d primitives retained" %
                  (len(sample.used_states()), len(retained), len(ranked)))
    return len(retained)


def cmd_segment(config, force=False, workers=1):
    """Segment every vehicle of the fleet; returns vehicle_id -> retained primitive count.

    Vehicles are processed by `workers` threads, the result does not depend on it.
    """
    store = open_store(config, force)
    fleet = load_fleet(store)
    vehicle_ids = sorted(fleet['vehicles'])
    for vehicle_id in vehicle_ids:
        _guard(store, layout.PRIMITIVES % vehicle_id)

    def work(vehicle_id):
        return _run_stage(vehicle_id, "segmentation", segment_vehicle, store, config, fleet, vehicle_id)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="Segment") as executor:
            counts = list(executor.map(work, vehicle_ids))
    else:
        counts = [work(vehicle_id) for vehicle_id in vehicle_ids]
    return dict(zip(vehicle_ids, counts))


def load_primitives(store, vehicle_id, retained_only=True):
    content = store.read_json('segment', layout.PRIMITIVES % vehicle_id)
    primitives = [Primitive.from_dict(p) for p in content['primitives']]
    if retained_only:
        keep = set(content['retained'])
        primitives = [p for p in primitives if p.label in keep]
    return primitives


# ----------------------------------------------------------------------
# cluster, couple, evaluate
# ----------------------------------------------------------------------
def _check_eval_vehicle(fleet, eval_vehicle):
    if not eval_vehicle:
        raise ConfigError("an evaluated vehicle is needed (--eval-vehicle)")
    if eval_vehicle not in fleet['vehicles']:
        raise ConfigError("vehicle %s is not part of the ingested fleet" % eval_vehicle)


def cmd_cluster(config, eval_vehicle, force=False):
    """Cluster the retained primitives of every vehicle except eval_vehicle."""
    store = open_store(config, force)
    _guard(store, layout.MODEL)
    fleet = load_fleet(store)
    _check_eval_vehicle(fleet, eval_vehicle)

    primitives = []
    for vehicle_id in sorted(fleet['vehicles']):
        if vehicle_id != eval_vehicle:
            primitives.extend(load_primitives(store, vehicle_id))
    if not primitives:
        raise EmptyInput("no training primitives besides vehicle %s" % eval_vehicle)

    features, mean, scale = primitive_features(primitives)
    model = fit_constrained_kmeans(features, cannot_link_pairs([p.vehicle_id for p in primitives]), k=config.k,
                                   seed=config.seed, max_iter=config.max_iter, restarts=config.restarts,
                                   weights=[p.point_count for p in primitives])
    model.feature_mean, model.feature_scale = mean, scale
    rank_clusters(model, primitives)
    store.write_json(layout.MODEL, {'excluded_vehicle': eval_vehicle, 'model': model.to_dict()})
    status_update(StageStatus.processing, "clusters", "%d primitives in %d clusters, objective %.6f" %
                  (len(primitives), int(np.count_nonzero(model.sizes())), model.objective))
    return model


def load_model(store, eval_vehicle):
    content = store.read_json('cluster', layout.MODEL)
    if content.get('excluded_vehicle') != eval_vehicle:
        logging.getLogger(__name__).warning("clusters were trained without %s, not the evaluated vehicle %s",
                                            content.get('excluded_vehicle'), eval_vehicle)
    return ClusterModel.from_dict(content['model'])


def cmd_couple(config, eval_vehicle, force=False):
    """Couple every retained cluster to a primitive of eval_vehicle."""
    store = open_store(config, force)
    _guard(store, layout.COUPLING % eval_vehicle)
    model = load_model(store, eval_vehicle)
    eval_primitives = load_primitives(store, eval_vehicle)
    clusters = [(cluster_id, GaussianMoments(moments[1], moments[2], "cluster %d" % cluster_id))
                for cluster_id, _, moments in model.retained()]
    coupling = couple(clusters, eval_primitives, config.kl_direction)
    store.write_json(layout.COUPLING % eval_vehicle, {'vehicle_id': eval_vehicle, 'coupling': coupling.to_dict()})
    status_update(StageStatus.processing, eval_vehicle, "%d clusters coupled to %d primitives" %
                  (len(coupling), len(coupling.multiplicity())))
    return coupling


def cmd_evaluate(config, eval_vehicle, channel=Channel.fuel, force=False):
    """Compute the weighted fuel or emission result of eval_vehicle."""
    store = open_store(config, force)
    _guard(store, layout.EVALUATION % eval_vehicle)
    channel = Channel(channel)
    fleet = load_fleet(store)
    model = load_model(store, eval_vehicle)
    coupling = CouplingMap.from_dict(store.read_json('couple', layout.COUPLING % eval_vehicle)['coupling'])
    segmentation = store.read_json('segment', layout.SEGMENTATION % eval_vehicle)
    trips = load_vehicle_trips(store, fleet, eval_vehicle)
    if [t.trip_id for t in trips] != segmentation['trip_ids']:
        raise DataError("segmentation of %s does not match its trips" % eval_vehicle)

    rates = [trip.channel(channel.column) for trip in trips]
    label_seqs = [np.asarray(labels) for labels in segmentation['sample']['label_seqs']]
    e_values = {label: aggregate_measurement(rates, label_seqs, label)
                for label in sorted(set(e.label for e in coupling.entries))}
    result = evaluate(coupling, model.omega, e_values, channel)
    store.write_json(layout.EVALUATION % eval_vehicle, {'vehicle_id': eval_vehicle, 'result': result.to_dict()})
    status_update(StageStatus.processing, eval_vehicle, "E = %.6g (%s)%s" % (
        result.E, channel.value, "" if result.mpg is None else ", %.3f mpg" % result.mpg))
    return result


def cmd_report(config, eval_vehicle, force=False):
    """Write the report bundle of eval_vehicle; returns the written files."""
    store = open_store(config, force)
    model = load_model(store, eval_vehicle)
    coupling = CouplingMap.from_dict(store.read_json('couple', layout.COUPLING % eval_vehicle)['coupling'])
    result = EvaluationResult.from_dict(store.read_json('evaluate', layout.EVALUATION % eval_vehicle)['result'])
    eval_primitives = load_primitives(store, eval_vehicle, retained_only=False)
    return reports.write_report(store, eval_vehicle, model, coupling, result, eval_primitives)


def cmd_run(config, input_dir, eval_vehicle, channel=Channel.fuel, force=False, workers=1):
    """All stages from ingest to report."""
    _run_stage(input_dir, "ingest", cmd_ingest, config, input_dir, force)
    cmd_segment(config, force, workers)
    _run_stage("clusters", "clustering", cmd_cluster, config, eval_vehicle, force)
    _run_stage(eval_vehicle, "coupling", cmd_couple, config, eval_vehicle, force)
    result = _run_stage(eval_vehicle, "evaluation", cmd_evaluate, config, eval_vehicle, channel, force)
    _run_stage(eval_vehicle, "report", cmd_report, config, eval_vehicle, force)
    return result
