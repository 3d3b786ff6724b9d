import json
import os
import shutil
import tempfile
import unittest
from unittest import mock

import yaml

from dpeval.config import PipelineConfig, config_hash, load_config, read_document
from dpeval.coupling import KLDirection
from dpeval.exceptions import ConfigError
from dpeval.trips import VehicleClass


class TestConfig(unittest.TestCase):
    def setUp(self):
        self.folder = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.folder)

    def write(self, name, text):
        filename = os.path.join(self.folder, name)
        with open(filename, 'w') as handle:
            handle.write(text)
        return filename

    @mock.patch.dict(os.environ, {}, clear=True)
    def test_defaults(self):
        config = load_config()
        self.assertEqual(config.store_dir, 'store')
        self.assertEqual(config.seed, 0)
        self.assertEqual(config.k, 200)
        self.assertEqual(config.tail_fraction, 0.05)
        self.assertEqual(config.hsmm.L, 40)
        self.assertEqual(config.hsmm.d_max, 300)
        self.assertEqual(config.kl_direction, KLDirection.cluster_to_primitive)
        self.assertEqual(config.fleet_query.allowed_classes, frozenset([VehicleClass.light_duty_car]))

    @mock.patch.dict(os.environ, {'DPE_SEED': '17', 'DPE_STORE': '/tmp/elsewhere'}, clear=True)
    def test_environment(self):
        config = load_config()
        self.assertEqual(config.seed, 17)
        self.assertEqual(config.hsmm.seed, 17)
        self.assertEqual(config.store_dir, '/tmp/elsewhere')

    def test_yaml_file_and_overrides(self):
        filename = self.write('config.yml', yaml.safe_dump({'k': 12, 'seed': 3, 'hsmm': {'L': 8, 'sweeps': 5}}))
        config = load_config(filename, seed=9, store_dir=None)
        self.assertEqual(config.k, 12)
        self.assertEqual(config.seed, 9)
        self.assertEqual(config.hsmm.seed, 9)
        self.assertEqual(config.hsmm.L, 8)
        self.assertEqual(config.hsmm.gamma, 6.0)

    def test_json_file(self):
        filename = self.write('config.json', json.dumps({'kl_direction': 'primitive_to_cluster'}))
        self.assertEqual(load_config(filename).kl_direction, KLDirection.primitive_to_cluster)

    def test_invalid(self):
        self.assertRaises(ConfigError, load_config, self.write('a.json', '{"k": 0}'))
        self.assertRaises(ConfigError, load_config, self.write('b.json', '{"tail_fraction": 1.0}'))
        self.assertRaises(ConfigError, load_config, self.write('c.json', '{"hsmm": {"L": 1}}'))
        self.assertRaises(ConfigError, load_config, self.write('d.json', '{"seed": -1}'))
        self.assertRaises(ConfigError, load_config, self.write('e.json', '{"kl_direction": "both"}'))
        self.assertRaises(ConfigError, load_config, self.write('f.json', '{"clusters": 5}'))
        self.assertRaises(ConfigError, load_config, self.write('g.json', '{"k": "many"}'))
        self.assertRaises(ConfigError, load_config, self.write('h.json', '{"fleet_query": {"allowed_classes": '
                                                                          '["truck"]}}'))

    def test_unreadable(self):
        self.assertRaises(ConfigError, read_document, os.path.join(self.folder, 'missing.json'))
        self.assertRaises(ConfigError, read_document, self.write('bad.json', '{'))
        self.assertRaises(ConfigError, read_document, self.write('list.yml', '- 1\n- 2\n'))
        self.assertEqual(read_document(self.write('empty.yml', '')), {})

    def test_hash(self):
        config = PipelineConfig(seed=1)
        self.assertEqual(config_hash(config), config_hash(PipelineConfig(config=config, store_dir='other')))
        self.assertNotEqual(config_hash(config), config_hash(PipelineConfig(config=config, seed=2)))
        self.assertNotEqual(config_hash(config), config_hash(PipelineConfig(config=config, k=10)))
        self.assertEqual(len(config_hash(config)), 64)

    def test_clone(self):
        config = PipelineConfig(seed=5, k=7, store_dir='x')
        clone = PipelineConfig(config=config, restarts=2)
        self.assertEqual((clone.seed, clone.k, clone.restarts, clone.store_dir), (5, 7, 2, 'x'))


if __name__ == '__main__':
    unittest.main()
