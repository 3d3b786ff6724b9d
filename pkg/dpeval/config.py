"""Pipeline configuration

The configuration is a JSON or YAML document; every key is optional:

    store_dir: store
    seed: 0
    fleet_query: {min_total_duration_s: 3600, require_valid_flag: true, allowed_classes: [light_duty_car]}
    rate_hz: 10.0
    hsmm: {gamma: 6.0, alpha: 6.0, kappa_sticky: 0.0, L: 40, d_max: 300, sweeps: 200,
           niw: {mu0: [0, 0], lambda0: 0.25, psi: [[0.2, 0], [0, 0.2]], nu0: 5},
           dur: {family: poisson, a: 2.0, b: 0.1}}
    tail_fraction: 0.05
    k: 200
    max_iter: 300
    restarts: 5
    kl_direction: cluster_to_primitive

Environment variables provide the defaults that the command line can
override: DPE_CONFIG, DPE_STORE, DPE_SEED.
"""

import hashlib
import json
import os

import yaml

from dpeval import rng as rngs
from dpeval.clusters import DEFAULT_K, DEFAULT_MAX_ITER, DEFAULT_RESTARTS
from dpeval.coupling import KLDirection
from dpeval.exceptions import ConfigError
from dpeval.hsmm import HsmmHyperParams
from dpeval.primitives import DEFAULT_TAIL_FRACTION
from dpeval.trips import DEFAULT_RATE_HZ, FleetQuery
from dpeval.utils import dumps


class PipelineConfig(object):
    """All settings of a pipeline run.

    Passing config=<PipelineConfig> copies all values from that object, any
    other keyword argument overrides the copied value. The seed of the hsmm
    hyper-parameters always follows the pipeline seed.
    """

    def __init__(self, **kwargs):
        base = kwargs.get('config')
        if base is not None:
            values = base.to_dict()
            values['store_dir'] = base.store_dir
            values.update((k, v) for k, v in kwargs.items() if k != 'config')
            kwargs = values
        self.store_dir = kwargs.get('store_dir', os.getenv('DPE_STORE', 'store'))
        try:
            self.seed = rngs.check_seed(kwargs.get('seed', os.getenv('DPE_SEED', 0)))
            self.rate_hz = float(kwargs.get('rate_hz', DEFAULT_RATE_HZ))
            self.tail_fraction = float(kwargs.get('tail_fraction', DEFAULT_TAIL_FRACTION))
            self.k = int(kwargs.get('k', DEFAULT_K))
            self.max_iter = int(kwargs.get('max_iter', DEFAULT_MAX_ITER))
            self.restarts = int(kwargs.get('restarts', DEFAULT_RESTARTS))
            self.kl_direction = KLDirection(kwargs.get('kl_direction', KLDirection.cluster_to_primitive))
            query = kwargs.get('fleet_query')
            self.fleet_query = query if isinstance(query, FleetQuery) else FleetQuery.from_dict(query)
            hsmm = kwargs.get('hsmm')
            if not isinstance(hsmm, HsmmHyperParams):
                hsmm = HsmmHyperParams.from_dict(hsmm)
            self.hsmm = HsmmHyperParams(hp=hsmm, seed=self.seed)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc))

    def validate(self):
        if not self.rate_hz > 0:
            raise ConfigError("rate_hz must be > 0")
        if not 0.0 <= self.tail_fraction < 1.0:
            raise ConfigError("tail_fraction must be in [0, 1)")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.max_iter < 1 or self.restarts < 1:
            raise ConfigError("max_iter and restarts must be >= 1")
        self.fleet_query.validate()
        self.hsmm.validate()
        return self

    def to_dict(self):
        """Settings that determine the artifacts, store_dir is left out."""
        hsmm = self.hsmm.to_dict()
        del hsmm['seed']
        return {
            'seed': self.seed,
            'rate_hz': self.rate_hz,
            'fleet_query': self.fleet_query.to_dict(),
            'hsmm': hsmm,
            'tail_fraction': self.tail_fraction,
            'k': self.k,
            'max_iter': self.max_iter,
            'restarts': self.restarts,
            'kl_direction': self.kl_direction.value,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(**(data or {}))


def config_hash(config):
    """SHA-256 of the canonical json of the configuration."""
    return hashlib.sha256(dumps(config.to_dict()).encode('utf-8')).hexdigest()


def read_document(path):
    """Parse a JSON or YAML file, chosen by the extension."""
    try:
        with open(path, 'r') as handle:
            if path.endswith('.yml') or path.endswith('.yaml'):
                data = yaml.safe_load(handle)
            else:
                data = json.load(handle)
    except (OSError, IOError) as exc:
        raise ConfigError("can not read %s : %s" % (path, exc))
    except (ValueError, yaml.YAMLError) as exc:
        raise ConfigError("can not parse %s : %s" % (path, exc))
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("%s does not contain a mapping" % path)
    return data


def load_config(path=None, **overrides):
    """Build a validated PipelineConfig from a file and overrides.

    Keyword arguments:
    path -- JSON or YAML file, defaults to DPE_CONFIG; None for only defaults
    overrides -- values that replace the ones from the file, None values are ignored
    """
    if path is None:
        path = os.getenv('DPE_CONFIG')
    data = read_document(path) if path else {}
    data.update((k, v) for k, v in overrides.items() if v is not None)
    unknown = set(data) - {'store_dir', 'seed', 'rate_hz', 'fleet_query', 'hsmm', 'tail_fraction', 'k',
                           'max_iter', 'restarts', 'kl_direction'}
    if unknown:
        raise ConfigError("unknown configuration keys: %s" % ", ".join(sorted(unknown)))
    return PipelineConfig(**data).validate()
