import json
import os
import unittest
from dataclasses import asdict, fields, replace
from tempfile import TemporaryDirectory

from ohlrelay.config import (DEFAULTS_PATH, ExperimentConfig, config_hash,
                             load_config, write_config)
from ohlrelay.errors import ConfigError


class TestDefaults(unittest.TestCase):
    def test_file_matches_dataclass(self):
        with open(DEFAULTS_PATH, "r", encoding="utf-8") as f:
            document = json.load(f)
        self.assertEqual(set(document), {f.name for f in fields(ExperimentConfig)})
        self.assertEqual(load_config(), ExperimentConfig())

    def test_derived_objects(self):
        cfg = ExperimentConfig()
        self.assertAlmostEqual(cfg.noise_budget().sigma_prime, 6.13e-9, delta=1e-11)
        geom = cfg.link_geometry()
        self.assertEqual(geom.length_L, 1000e3)
        self.assertEqual(geom.jitter_sigma_theta, 150e-6)
        self.assertEqual(cfg.link_geometry(link_class="intra_orbit").jitter_sigma_theta, 50e-6)
        self.assertEqual(cfg.link_geometry(sigma_theta=80e-6).jitter_sigma_theta, 80e-6)
        self.assertAlmostEqual(cfg.beam_width_for(1000e3), 400.0, places=9)
        self.assertEqual(cfg.constellation_config().num_planes, 20)
        self.assertEqual(cfg.lens_system().focal_range, (15e-3, 60e-3))
        self.assertEqual(cfg.optimizer_settings().max_outer, 50)

    def test_mc_plan(self):
        cfg = ExperimentConfig()
        plan = cfg.mc_plan(threads=2)
        self.assertEqual(plan.trials, 100000)
        self.assertEqual(plan.n_batches, 10)
        self.assertEqual(plan.rng.stream_id, 2)
        self.assertEqual(cfg.mc_plan(trials=20000).trials, 20000)
        with self.assertRaises(ConfigError):
            replace(cfg, mc_batch_size=30000).mc_plan()


class TestValidation(unittest.TestCase):
    def test_integer_coercion(self):
        cfg = ExperimentConfig(mc_trials=1e5)
        self.assertIsInstance(cfg.mc_trials, int)
        with self.assertRaises(ConfigError):
            ExperimentConfig(planes=2.5)

    def test_wrong_type(self):
        with self.assertRaises(ConfigError):
            ExperimentConfig(tx_power_w="strong")

    def test_ranges(self):
        with self.assertRaises(ConfigError):
            ExperimentConfig(tx_power_w=0.0)
        with self.assertRaises(ConfigError):
            ExperimentConfig(n_sp=-1.0)
        with self.assertRaises(ConfigError):
            ExperimentConfig(relays_min=5, relays_max=2)
        with self.assertRaises(ConfigError):
            ExperimentConfig(hop_mode="fixed-angle")
        with self.assertRaises(ConfigError):
            ExperimentConfig(link_class="ground")

    def test_zero_noise_allowed(self):
        cfg = ExperimentConfig(p_bg_w=0.0, sigma_thermal=0.0, n_sp=0.0)
        self.assertEqual(cfg.noise_budget().sigma_prime, 0.0)


class TestFiles(unittest.TestCase):
    def setUp(self):
        self.tmp = TemporaryDirectory()

    def write(self, document):
        path = os.path.join(self.tmp.name, "config.json")
        with open(path, "w", encoding="utf-8") as f:
            json.dump(document, f)
        return path

    def test_overrides(self):
        cfg = load_config(self.write({"seed": 11, "link_length_m": 1600e3}))
        self.assertEqual(cfg.seed, 11)
        self.assertEqual(cfg.link_length_m, 1600e3)
        self.assertEqual(cfg.tx_power_w, 4.0)

    def test_unknown_key(self):
        with self.assertRaises(ConfigError) as ctx:
            load_config(self.write({"sead": 11}))
        self.assertIn("sead", str(ctx.exception))

    def test_not_an_object(self):
        with self.assertRaises(ConfigError):
            load_config(self.write([1, 2, 3]))

    def test_invalid_json(self):
        path = os.path.join(self.tmp.name, "broken.json")
        with open(path, "w", encoding="utf-8") as f:
            f.write("{seed: 1")
        with self.assertRaises(ConfigError):
            load_config(path)

    def test_round_trip(self):
        cfg = ExperimentConfig(seed=5, hop_mode="fixed-hop")
        path = os.path.join(self.tmp.name, "dumped.json")
        write_config(cfg, path)
        self.assertEqual(load_config(path), cfg)

    def tearDown(self):
        self.tmp.cleanup()


class TestHash(unittest.TestCase):
    def test_stable_and_sensitive(self):
        cfg = ExperimentConfig()
        self.assertEqual(config_hash(cfg), config_hash(ExperimentConfig()))
        self.assertNotEqual(config_hash(cfg), config_hash(replace(cfg, seed=8)))
        self.assertEqual(len(config_hash(cfg)), 64)
        self.assertEqual(config_hash(cfg), config_hash(ExperimentConfig(**asdict(cfg))))
