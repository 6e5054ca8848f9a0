#!/usr/bin/env python3
"""Episode recording, aggregation, smoothing and run comparison."""

import os
import sys
import tempfile
import unittest

import numpy as np
import pandas as pd

# Add src directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from metrics import (
    AGGREGATED_COLUMNS,
    AGGREGATED_FILE,
    EpisodeRecorder,
    aggregate,
    compare_runs,
    episode_frame,
    read_csv,
    smooth,
    summarize_evaluation,
    window_means,
    write_csv,
)
from shield import PassthroughDiagnostics, ShieldDecision
from tilt_env import CellState, TiltAction, Transition
from utils import AlignmentError, ContractError


def seed_frame(seed, n_episodes=8, with_k=False):
    rng = np.random.default_rng(seed)
    rows = []
    for episode in range(n_episodes):
        rows.append({
            'episode': episode,
            'reward': -rng.random(),
            'cov': rng.random(),
            'cap': rng.random(),
            'qual': rng.random(),
            'k': 0.95 - 0.1 * (episode // 2) if with_k else np.nan,
            'source_fraction_agent': rng.random(),
        })
    return episode_frame(rows)


class TestEpisodeRecorder(unittest.TestCase):

    def _step(self, recorder, rewards, sources):
        state = CellState(0.5, 0.1, 0.5, 0.2)
        transitions = [Transition(c, state, TiltAction(0), r, state, 0, 0) for c, r in enumerate(rewards)]
        decisions = [ShieldDecision(TiltAction(0), s, PassthroughDiagnostics()) for s in sources]
        recorder(transitions, decisions)

    def test_episode_row(self):
        recorder = EpisodeRecorder(agent_ids=['dqn'])
        recorder.begin_episode(3)
        self._step(recorder, [-0.2, -0.4], ['dqn', 'rule'])
        self._step(recorder, [-0.1, -0.1], ['dqn', 'dqn'])
        row = recorder.end_episode(k=0.85)
        self.assertEqual(row['episode'], 3)
        self.assertAlmostEqual(row['reward'], (-0.3 - 0.1) / 2)
        self.assertAlmostEqual(row['cov'], 0.1)
        self.assertAlmostEqual(row['source_fraction_agent'], 0.75)
        self.assertEqual(row['k'], 0.85)
        self.assertEqual(recorder.take_rows(), [row])
        self.assertEqual(recorder.rows, [])

    def test_no_agent_means_zero_fraction(self):
        recorder = EpisodeRecorder()
        recorder.begin_episode(0)
        self._step(recorder, [-0.2], ['rule'])
        row = recorder.end_episode()
        self.assertEqual(row['source_fraction_agent'], 0.0)
        self.assertTrue(np.isnan(row['k']))

    def test_step_outside_episode(self):
        recorder = EpisodeRecorder()
        with self.assertRaises(ContractError):
            self._step(recorder, [-0.2], ['rule'])
        with self.assertRaises(ContractError):
            recorder.end_episode()


class TestAggregation(unittest.TestCase):

    def setUp(self):
        self.frames = {seed: seed_frame(seed, with_k=True) for seed in range(3)}

    def test_header_is_exact(self):
        aggregated = aggregate(self.frames)
        self.assertEqual(','.join(aggregated.columns), ','.join(AGGREGATED_COLUMNS))
        self.assertEqual(
            ','.join(AGGREGATED_COLUMNS),
            'episode,reward_mean,reward_min,reward_max,cov_mean,cov_min,cov_max,cap_mean,cap_min,cap_max,'
            'qual_mean,qual_min,qual_max,k_mean,source_fraction_agent',
        )

    def test_recomputed_from_seed_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            for seed, frame in self.frames.items():
                write_csv(frame, os.path.join(tmp, f'seed_{seed}.csv'))
            write_csv(aggregate(self.frames), os.path.join(tmp, AGGREGATED_FILE))
            raw = {seed: read_csv(os.path.join(tmp, f'seed_{seed}.csv')) for seed in self.frames}
            aggregated = read_csv(os.path.join(tmp, AGGREGATED_FILE))

        stacked = {name: np.stack([raw[s][name].to_numpy() for s in sorted(raw)]) for name in ('reward', 'cov', 'cap', 'qual')}
        for name, values in stacked.items():
            np.testing.assert_array_equal(aggregated[f'{name}_min'], values.min(axis=0))
            np.testing.assert_array_equal(aggregated[f'{name}_max'], values.max(axis=0))
            np.testing.assert_allclose(aggregated[f'{name}_mean'], values.mean(axis=0), rtol=1e-12)
            self.assertTrue((aggregated[f'{name}_min'] <= aggregated[f'{name}_mean']).all())
            self.assertTrue((aggregated[f'{name}_mean'] <= aggregated[f'{name}_max']).all())

    def test_mean_of_identical_seeds_stays_within_extremes(self):
        frames = {}
        for seed in range(7):
            frame = seed_frame(seed)
            frame['cov'] = 0.1
            frame['reward'] = -1 / 3
            frames[seed] = frame
        aggregated = aggregate(frames)
        np.testing.assert_array_equal(aggregated['cov_mean'], aggregated['cov_min'])
        np.testing.assert_array_equal(aggregated['cov_mean'], 0.1)
        np.testing.assert_array_equal(aggregated['reward_mean'], aggregated['reward_max'])

    def test_k_mean_blank_without_k(self):
        frames = {seed: seed_frame(seed) for seed in range(2)}
        self.assertTrue(aggregate(frames)['k_mean'].isna().all())

    def test_mismatched_seed_lengths(self):
        with self.assertRaises(AlignmentError):
            aggregate({0: seed_frame(0, 8), 1: seed_frame(1, 6)})
        with self.assertRaises(ContractError):
            aggregate({})

    def test_smoothing_touches_means_only(self):
        aggregated = aggregate(self.frames)
        smoothed = smooth(aggregated, 3)
        pd.testing.assert_series_equal(smoothed['reward_min'], aggregated['reward_min'])
        pd.testing.assert_series_equal(smoothed['k_mean'], aggregated['k_mean'])
        self.assertAlmostEqual(smoothed['reward_mean'].iloc[0], aggregated['reward_mean'].iloc[0])
        self.assertAlmostEqual(smoothed['reward_mean'].iloc[4], aggregated['reward_mean'].iloc[2:5].mean())

    def test_written_csv_is_byte_stable(self):
        with tempfile.TemporaryDirectory() as tmp:
            first, second = os.path.join(tmp, 'a.csv'), os.path.join(tmp, 'b.csv')
            write_csv(aggregate(self.frames), first)
            write_csv(aggregate({s: seed_frame(s, with_k=True) for s in range(3)}), second)
            with open(first, 'rb') as fa, open(second, 'rb') as fb:
                self.assertEqual(fa.read(), fb.read())

    def test_evaluation_summary(self):
        summary = summarize_evaluation({1: seed_frame(1, 4), 0: seed_frame(0, 4)})
        self.assertEqual(list(summary['seed']), [0, 1])
        self.assertAlmostEqual(summary['reward'].iloc[0], seed_frame(0, 4)['reward'].mean())


class TestCompareRuns(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.runs = []
        for name, seeds in (('first', (0, 1)), ('second', (2, 3))):
            run_dir = os.path.join(self.tmp.name, name)
            os.makedirs(run_dir)
            write_csv(aggregate({s: seed_frame(s) for s in seeds}), os.path.join(run_dir, AGGREGATED_FILE))
            self.runs.append(run_dir)

    def tearDown(self):
        self.tmp.cleanup()

    def test_run_against_itself_is_zero(self):
        comparison = compare_runs([self.runs[0], self.runs[0]], 'reward')
        diff_columns = [c for c in comparison.table.columns if c.startswith('diff_')]
        self.assertEqual(len(diff_columns), 1)
        np.testing.assert_array_equal(comparison.table[diff_columns[0]], 0.0)
        np.testing.assert_array_equal(comparison.summary['early_diff'], 0.0)

    def test_table_and_windows(self):
        comparison = compare_runs(self.runs, 'reward')
        self.assertEqual(comparison.metric, 'reward_mean')
        self.assertEqual(list(comparison.table.columns), ['episode', 'first', 'second', 'diff_second'])
        expected = window_means(comparison.table['second'])
        row = comparison.summary.set_index('run').loc['second']
        self.assertAlmostEqual(row['early_mean'], expected['early_mean'])
        self.assertAlmostEqual(row['early_mean'], comparison.table['second'].iloc[:2].mean())
        self.assertAlmostEqual(row['final_mean'], comparison.table['second'].iloc[-2:].mean())

    def test_written_table(self):
        comparison = compare_runs(self.runs, 'cov')
        out = os.path.join(self.tmp.name, 'cmp.csv')
        comparison.write(out)
        self.assertTrue(os.path.exists(out))
        self.assertTrue(os.path.exists(os.path.join(self.tmp.name, 'cmp_summary.csv')))

    def test_missing_metric(self):
        with self.assertRaises(AlignmentError):
            compare_runs(self.runs, 'throughput')

    def test_mismatched_episode_counts(self):
        short = os.path.join(self.tmp.name, 'short')
        os.makedirs(short)
        write_csv(aggregate({0: seed_frame(0, 4)}), os.path.join(short, AGGREGATED_FILE))
        with self.assertRaises(AlignmentError) as ctx:
            compare_runs([self.runs[0], short], 'reward')
        self.assertIn('short', str(ctx.exception))

    def test_needs_two_runs(self):
        with self.assertRaises(ContractError):
            compare_runs(self.runs[:1])


if __name__ == '__main__':
    unittest.main()
