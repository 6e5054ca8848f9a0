#!/usr/bin/env python3
"""Dataset synthesis and end-to-end experiment runs on a small network."""

import os
import sys
import tempfile
import unittest
from unittest.mock import patch

import numpy as np
import pandas as pd
from scipy.stats import chisquare

# Add src directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from agents import AGENT, DqnAgent
from experiment_config import ExperimentConfig
from harness import (
    ExperimentRunner,
    SeedResult,
    build_shield,
    load_dataset,
    run_experiment,
    synthesize_dataset,
    train_baseline_file,
    train_predictor_file,
)
from metrics import AGGREGATED_COLUMNS
from radio_sim import SimConfig
from shield import KShieldLogic, PredictorShieldLogic
from utils import ConfigError, ContractError, NumericError

SMALL_SIM = SimConfig(n_base_stations=1, n_ues=60)


def small_config(output_dir, **overrides):
    settings = dict(
        seeds=[0, 1],
        n_train_episodes=6,
        episode_length=3,
        n_eval_episodes=2,
        smoothing_window=2,
        dqn_batch_size=5,
        epsilon_decay_episodes=3,
        max_workers=2,
        log_level='WARNING',
        output_dir=output_dir,
        sim=SMALL_SIM,
    )
    settings.update(overrides)
    return ExperimentConfig(**settings).validate()


class TestDatasetSynthesis(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def test_file_is_seed_deterministic(self):
        first = os.path.join(self.tmp.name, 'a.csv')
        second = os.path.join(self.tmp.name, 'b.csv')
        synthesize_dataset(SMALL_SIM, 100, 3, first)
        synthesize_dataset(SMALL_SIM, 100, 3, second)
        with open(first, 'rb') as fa, open(second, 'rb') as fb:
            self.assertEqual(fa.read(), fb.read())

    def test_reload_matches_records(self):
        path = os.path.join(self.tmp.name, 'data.csv')
        transitions = synthesize_dataset(SMALL_SIM, 50, 1, path)
        self.assertEqual(load_dataset(path), transitions)
        self.assertEqual(len(pd.read_csv(path)), 50)

    def test_actions_are_uniform(self):
        transitions = synthesize_dataset(SMALL_SIM, 3000, 2)
        counts = np.bincount([t.action.index for t in transitions], minlength=3)
        _, p_value = chisquare(counts)
        self.assertGreater(p_value, 0.01)
        for t in transitions:
            for value in (*t.state.kpis.as_tuple(), *t.next_state.kpis.as_tuple()):
                self.assertTrue(0.0 <= value <= 1.0)

    def test_needs_samples(self):
        with self.assertRaises(ContractError):
            synthesize_dataset(SMALL_SIM, 0, 0)


class TestScenarioWiring(unittest.TestCase):

    def test_unshielded_scenarios_have_no_logic(self):
        for scenario in ('unrestricted-dqn', 'unrestricted-ac', 'baseline-only'):
            shield = build_shield(small_config('unused', scenario=scenario), seed=0)
            self.assertIsNone(shield.logic)
            self.assertEqual(len(shield.proposers), 1)
        shield = build_shield(small_config('unused', scenario='unrestricted-ac'), seed=0)
        self.assertEqual(shield.proposers[0].role, AGENT)

    def test_k_shield_wiring(self):
        config = small_config('unused', scenario='k-shield', baselines=['rule', 'rule'], b=[0.9, 0.1])
        shield = build_shield(config, seed=0)
        self.assertIsInstance(shield.logic, KShieldLogic)
        self.assertEqual([p.source_id for p in shield.proposers], ['rule-0', 'rule-1', 'dqn'])
        self.assertEqual(shield.k, config.k_initial)

    def test_missing_model_file(self):
        config = small_config('unused', scenario='baseline-only', baselines=['model:/nonexistent/m.mlp'])
        with self.assertRaises(ConfigError) as ctx:
            build_shield(config, seed=0)
        self.assertEqual(ctx.exception.field, 'baselines')


class TestRunExperiment(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def _dir(self, name):
        return os.path.join(self.tmp.name, name)

    def test_baseline_only_run(self):
        summary = run_experiment(small_config(self._dir('rule'), scenario='baseline-only'))
        self.assertEqual(summary.completed_seeds, [0, 1])
        aggregated = pd.read_csv(summary.files['aggregated.csv'])
        self.assertEqual(list(aggregated.columns), AGGREGATED_COLUMNS)
        self.assertEqual(len(aggregated), 6)
        self.assertTrue((aggregated['source_fraction_agent'] == 0.0).all())
        self.assertTrue(aggregated['k_mean'].isna().all())
        for name in ('smoothed.csv', 'evaluation.csv', 'seed_0.csv', 'decisions_seed_1.csv'):
            self.assertTrue(os.path.exists(os.path.join(self._dir('rule'), name)), name)
        self.assertTrue(os.path.exists(os.path.join(self._dir('rule'), 'run.log')))

        evaluation = pd.read_csv(summary.files['evaluation.csv'])
        self.assertEqual(list(evaluation['seed']), [0, 1])
        self.assertTrue((evaluation['n_episodes'] == 2).all())

    def test_unrestricted_agent_owns_every_action(self):
        summary = run_experiment(small_config(self._dir('dqn'), scenario='unrestricted-dqn'))
        aggregated = pd.read_csv(summary.files['aggregated.csv'])
        self.assertTrue((aggregated['source_fraction_agent'] == 1.0).all())
        decisions = pd.read_csv(summary.files['decisions_seed_0.csv'])
        self.assertEqual(len(decisions), (6 + 2) * 3 * 3)

    def test_k_mean_non_increasing(self):
        config = small_config(self._dir('k'), scenario='k-shield', n_train_episodes=12, d=0.2, w=1)
        aggregated = pd.read_csv(run_experiment(config).files['aggregated.csv'])
        k_mean = aggregated['k_mean'].to_numpy()
        self.assertEqual(k_mean[0], config.k_initial)
        self.assertTrue(np.all(np.diff(k_mean) <= 1e-12))
        self.assertTrue(np.all((k_mean >= 0.0) & (k_mean <= 1.0)))

    def test_repeat_runs_are_byte_identical(self):
        outputs = []
        for name in ('first', 'second'):
            summary = run_experiment(small_config(self._dir(name), scenario='k-shield', agent_kind='ac'))
            with open(summary.files['aggregated.csv'], 'rb') as f:
                outputs.append(f.read())
        self.assertEqual(outputs[0], outputs[1])

    def test_predictor_shield_with_trained_models(self):
        data = self._dir('data.csv')
        synthesize_dataset(SMALL_SIM, 300, 0, data)
        predictor_path = self._dir('predictor.mlp')
        model_path = self._dir('baseline.mlp')
        train_predictor_file(data, predictor_path, epochs=2)
        train_baseline_file(data, model_path, epochs=2)

        config = small_config(self._dir('predictor'), scenario='predictor-shield',
                              baselines=['rule', f'model:{model_path}'], predictor_path=predictor_path)
        self.assertIsInstance(build_shield(config, seed=0).logic, PredictorShieldLogic)
        summary = run_experiment(config)
        decisions = pd.read_csv(summary.files['decisions_seed_0.csv'])
        self.assertTrue(set(decisions['source_id']) <= {'rule', 'model', 'dqn'})
        self.assertFalse(decisions['predicted_cov'].isna().any())

    def test_failed_seed_is_skipped(self):
        class FlakyRunner(ExperimentRunner):
            def run_seed(self, seed):
                if seed == 1:
                    return SeedResult(seed, error='diverged')
                return super().run_seed(seed)

        summary = FlakyRunner(small_config(self._dir('flaky'), scenario='unrestricted-dqn')).run()
        self.assertEqual(summary.completed_seeds, [0])
        self.assertEqual(summary.failed_seeds, {1: 'diverged'})
        self.assertFalse(os.path.exists(os.path.join(self._dir('flaky'), 'seed_1.csv')))

    def test_every_seed_failing_raises(self):
        with patch.object(DqnAgent, 'observe', side_effect=NumericError('diverged')):
            with self.assertRaises(NumericError):
                run_experiment(small_config(self._dir('broken'), scenario='unrestricted-dqn'))


if __name__ == '__main__':
    unittest.main()
