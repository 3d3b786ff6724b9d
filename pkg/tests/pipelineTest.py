import os
import shutil
import tempfile
import unittest

import pandas as pd

from dpeval import pipeline, store as layout
from dpeval.clusters import find_idle_cluster
from dpeval.config import PipelineConfig
from dpeval.coupling import CouplingMap
from dpeval.exceptions import ConfigError, DataError, EmptyInput, MissingArtifact, MixedConfig
from dpeval.simulate import SyntheticFleetSpec, write_fleet
from dpeval.utils import Channel

SMALL_HSMM = {'L': 10, 'd_max': 80, 'sweeps': 15}


def small_config(store_dir, **kwargs):
    values = dict(store_dir=store_dir, seed=3, k=10, restarts=2, max_iter=50, hsmm=SMALL_HSMM,
                  fleet_query={'min_total_duration_s': 30.0})
    values.update(kwargs)
    return PipelineConfig(**values).validate()


def read_tree(root):
    files = {}
    for folder, _, names in os.walk(root):
        for name in names:
            filename = os.path.join(folder, name)
            with open(filename, 'rb') as handle:
                files[os.path.relpath(filename, root)] = handle.read()
    return files


class TestPipeline(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.folder = tempfile.mkdtemp()
        cls.input_dir = os.path.join(cls.folder, 'input')
        spec = SyntheticFleetSpec(n_vehicles=4, n_buses=1, trips_per_vehicle=2, trip_steps=[600, 600])
        write_fleet(spec, cls.input_dir, 7)
        cls.config = small_config(os.path.join(cls.folder, 'store'))
        cls.result = pipeline.cmd_run(cls.config, cls.input_dir, 'veh003', Channel.fuel)
        cls.store = pipeline.open_store(cls.config)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.folder)

    def test_fleet(self):
        fleet = pipeline.load_fleet(self.store)
        self.assertEqual(sorted(fleet['vehicles']), ['veh000', 'veh001', 'veh002', 'veh003'])
        self.assertEqual(fleet['vehicles']['veh000']['trips'], ['trip00', 'trip01'])
        self.assertEqual(fleet['summary']['total_trip_amount'], 8)

    def test_artifacts(self):
        for vehicle_id in ['veh000', 'veh003']:
            self.assertTrue(self.store.exists(layout.SEGMENTATION % vehicle_id))
            self.assertTrue(self.store.exists(layout.PRIMITIVES % vehicle_id))
        for name in ['cluster_rank.csv', 'coupling.csv', 'summary.txt']:
            self.assertTrue(self.store.exists(layout.REPORT % ('veh003', name)))
        model = self.store.read_json('cluster', layout.MODEL)
        self.assertEqual(model['excluded_vehicle'], 'veh003')
        self.assertNotIn('veh003', set(v for v, _ in model['model']['members']))

    def test_idle_cluster_ranks_first(self):
        model = pipeline.load_model(self.store, 'veh003')
        self.assertEqual(find_idle_cluster(model), 0)
        members = {}
        for vehicle_id, cluster in zip([v for v, _ in model.members], model.assignment):
            self.assertNotIn(cluster, members.setdefault(vehicle_id, set()))
            members[vehicle_id].add(cluster)

    def test_coupling_and_result(self):
        model = pipeline.load_model(self.store, 'veh003')
        coupling = pipeline.load_primitives(self.store, 'veh003')
        content = self.store.read_json('couple', layout.COUPLING % 'veh003')['coupling']
        self.assertEqual(len(content['entries']), len(model.retained()))
        self.assertTrue(set(e['label'] for e in content['entries']) <= set(p.label for p in coupling))
        self.assertTrue(0.015 < self.result.E < 0.06)
        self.assertAlmostEqual(self.result.mpg, 1.0 / self.result.E)

    def test_report_tables(self):
        model = pipeline.load_model(self.store, 'veh003')
        ranks = pd.read_csv(self.store.path(layout.REPORT % ('veh003', 'cluster_rank.csv')))
        self.assertAlmostEqual(ranks['omega'].sum(), 1.0, delta=1e-9)
        self.assertEqual(ranks['omega'].idxmax(), 0)
        self.assertEqual(ranks['cluster_id'].tolist(), [c for c, _, _ in model.retained()])
        couples = pd.read_csv(self.store.path(layout.REPORT % ('veh003', 'coupling.csv')))
        self.assertEqual(len(couples), len(ranks))
        self.assertAlmostEqual(couples['contribution'].sum(), self.result.E, delta=1e-9)

    def test_emission_channel(self):
        result = pipeline.cmd_evaluate(self.config, 'veh003', Channel.emission)
        self.assertIsNone(result.mpg)
        self.assertTrue(0.3 < result.E < 1.2)
        pipeline.cmd_evaluate(self.config, 'veh003', Channel.fuel)

    def test_deterministic_store(self):
        other = small_config(os.path.join(self.folder, 'again'))
        pipeline.cmd_run(other, self.input_dir, 'veh003', Channel.fuel, workers=3)
        self.assertEqual(read_tree(other.store_dir), read_tree(self.config.store_dir))

    def test_mixed_config(self):
        other = PipelineConfig(config=self.config, seed=99)
        self.assertRaises(MixedConfig, pipeline.cmd_segment, other)
        self.assertRaises(MixedConfig, pipeline.cmd_ingest, other, self.input_dir)

    def test_unknown_eval_vehicle(self):
        self.assertRaises(ConfigError, pipeline.cmd_cluster, self.config, 'bus000')


class TestSyntheticFleet(unittest.TestCase):
    """Ten vehicles with 30% idle mass, veh009 evaluated."""

    @classmethod
    def setUpClass(cls):
        cls.folder = tempfile.mkdtemp()
        input_dir = os.path.join(cls.folder, 'input')
        write_fleet(SyntheticFleetSpec(n_vehicles=10, trips_per_vehicle=2, trip_steps=[3000, 3000]), input_dir, 5)
        cls.config = small_config(os.path.join(cls.folder, 'store'), k=12, restarts=3,
                                  hsmm={'L': 12, 'd_max': 100, 'sweeps': 30})
        pipeline.cmd_run(cls.config, input_dir, 'veh009', Channel.fuel, workers=4)
        cls.store = pipeline.open_store(cls.config)
        cls.model = pipeline.load_model(cls.store, 'veh009')

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.folder)

    def test_idle_cluster_dominates(self):
        retained = self.model.retained()
        (_, top, (_, mean, _)), (_, second, _) = retained[0], retained[1]
        self.assertLess(abs(mean[0]), 0.5)
        self.assertLess(abs(mean[1]), 0.05)
        self.assertGreaterEqual(top, 2 * second)
        self.assertEqual(find_idle_cluster(self.model), 0)

    def test_top_clusters_couple_to_matching_speed(self):
        coupling = CouplingMap.from_dict(self.store.read_json('couple', layout.COUPLING % 'veh009')['coupling'])
        primitives = dict((p.label, p) for p in pipeline.load_primitives(self.store, 'veh009'))
        clusters = dict((cluster_id, moments) for cluster_id, _, moments in self.model.retained())
        for entry in coupling.entries[:5]:
            cluster_v = clusters[entry.cluster_id][1][0]
            self.assertLess(abs(cluster_v - primitives[entry.label].mean[0]), 1.0)


class TestPipelineErrors(unittest.TestCase):
    def setUp(self):
        self.folder = tempfile.mkdtemp()
        self.config = small_config(os.path.join(self.folder, 'store'))

    def tearDown(self):
        shutil.rmtree(self.folder)

    def write(self, name, text):
        with open(os.path.join(self.folder, name), 'w') as handle:
            handle.write(text)

    def test_missing_artifact(self):
        with self.assertRaises(MissingArtifact) as context:
            pipeline.cmd_cluster(self.config, 'veh000')
        self.assertEqual(context.exception.stage, 'ingest')
        self.assertRaises(MissingArtifact, pipeline.cmd_segment, self.config)

    def test_bad_trip_file_named(self):
        self.write('veh000__a.csv', "t,v,a,valid\n0,1,0,1\n0.1,x,0,1\n")
        with self.assertRaises(DataError) as context:
            pipeline.cmd_ingest(self.config, self.folder)
        self.assertIn('veh000__a.csv', str(context.exception))

    def test_no_trip_files(self):
        self.assertRaises(EmptyInput, pipeline.cmd_ingest, self.config, self.folder)
        self.assertRaises(DataError, pipeline.cmd_ingest, self.config, os.path.join(self.folder, 'nothing'))

    def test_badly_named_file(self):
        self.write('veh000.csv', "t,v,a,valid\n0,1,0,1\n")
        self.assertRaises(DataError, pipeline.cmd_ingest, self.config, self.folder)

    def test_nothing_passes_query(self):
        self.write('veh000__a.csv', "t,v,a,valid\n0,1,0,1\n0.1,2,0,1\n")
        self.assertRaises(EmptyInput, pipeline.cmd_ingest, self.config, self.folder)


if __name__ == '__main__':
    unittest.main()
