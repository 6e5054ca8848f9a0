#!/usr/bin/env python3
"""Experiment configuration parsing and validation."""

import json
import os
import sys
import tempfile
import unittest

# Add src directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from experiment_config import ExperimentConfig, describe_settings, load_config, save_config
from radio_sim import SimConfig
from utils import ConfigError


class TestExperimentConfig(unittest.TestCase):

    def test_defaults_are_valid(self):
        config = ExperimentConfig().validate()
        self.assertEqual(config.seeds, [0, 1, 2, 3, 4, 5])
        self.assertEqual(config.episode_length, 20)
        self.assertEqual(config.n_eval_episodes, 25)
        self.assertEqual(config.smoothing_window, 5)

    def test_flat_round_trip(self):
        config = ExperimentConfig(scenario='k-shield', baselines=['rule', 'model:m.mlp'], b=[0.9, 0.1],
                                  sim=SimConfig(n_ues=100, seed=3))
        data = config.to_dict()
        self.assertEqual(data['sim_n_ues'], 100)
        self.assertNotIn('sim', data)
        self.assertEqual(ExperimentConfig.from_dict(data), config)

    def test_int_accepted_for_float_sim_field(self):
        config = ExperimentConfig.from_dict({'sim_tx_power_dbm': 43})
        self.assertEqual(config.sim.tx_power_dbm, 43.0)
        self.assertIsInstance(config.sim.tx_power_dbm, float)

    def test_unknown_key(self):
        with self.assertRaises(ConfigError) as ctx:
            ExperimentConfig.from_dict({'episodes': 10})
        self.assertEqual(ctx.exception.field, 'episodes')

    def test_wrong_type(self):
        with self.assertRaises(ConfigError) as ctx:
            ExperimentConfig.from_dict({'n_train_episodes': '200'})
        self.assertEqual(ctx.exception.field, 'n_train_episodes')
        with self.assertRaises(ConfigError):
            ExperimentConfig.from_dict({'seeds': [0, True]})

    def test_scenario_requirements(self):
        cases = [
            ({'scenario': 'teleport'}, 'scenario'),
            ({'seeds': []}, 'seeds'),
            ({'scenario': 'baseline-only', 'baselines': ['rule', 'rule']}, 'baselines'),
            ({'scenario': 'predictor-shield'}, 'predictor_path'),
            ({'scenario': 'k-shield', 'baselines': ['rule'], 'b': [0.5, 0.5]}, 'b'),
            ({'scenario': 'k-shield', 'baselines': []}, 'baselines'),
            ({'baselines': ['heuristic']}, 'baselines'),
            ({'d': 1.5}, 'd'),
            ({'sim_n_ues': 0}, 'n_ues'),
        ]
        for data, field in cases:
            with self.subTest(data=data):
                with self.assertRaises(ConfigError) as ctx:
                    ExperimentConfig.from_dict(data)
                self.assertEqual(ctx.exception.field, field)

    def test_effective_agent_and_weights(self):
        self.assertEqual(ExperimentConfig(scenario='unrestricted-ac').effective_agent_kind, 'ac')
        self.assertIsNone(ExperimentConfig(scenario='baseline-only').effective_agent_kind)
        config = ExperimentConfig(scenario='k-shield', agent_kind='ac', baselines=['rule', 'model:x.mlp'])
        self.assertEqual(config.effective_agent_kind, 'ac')
        self.assertEqual(config.baseline_weights, [0.5, 0.5])

    def test_schema_documents_every_key(self):
        schema = describe_settings()
        self.assertEqual(set(schema), set(ExperimentConfig().to_dict()))
        for key, info in schema.items():
            self.assertIn('type', info)
            self.assertIn('description', info)
            self.assertIn('default', info)

    def test_file_round_trip(self):
        config = ExperimentConfig(scenario='unrestricted-dqn', seeds=[4, 5], n_train_episodes=3)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'config.json')
            save_config(config, path)
            self.assertEqual(load_config(path), config)

    def test_invalid_json(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'config.json')
            with open(path, 'w') as f:
                f.write('{"scenario": ')
            with self.assertRaises(ConfigError):
                load_config(path)
            with open(path, 'w') as f:
                json.dump([1, 2], f)
            with self.assertRaises(ConfigError):
                load_config(path)


if __name__ == '__main__':
    unittest.main()
