#!/usr/bin/env python3
"""Per-episode metrics, cross-seed aggregation and run comparison."""

import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from shield import ShieldDecision
from tilt_env import Transition
from utils import AlignmentError, ContractError, DatasetIOError, running_average

logger = logging.getLogger(__name__)

KPI_NAMES = ('reward', 'cov', 'cap', 'qual')
RAW_COLUMNS = ['episode', *KPI_NAMES, 'k', 'source_fraction_agent']
AGGREGATED_COLUMNS = [
    'episode',
    'reward_mean', 'reward_min', 'reward_max',
    'cov_mean', 'cov_min', 'cov_max',
    'cap_mean', 'cap_min', 'cap_max',
    'qual_mean', 'qual_min', 'qual_max',
    'k_mean', 'source_fraction_agent',
]
EVALUATION_COLUMNS = ['seed', 'n_episodes', *KPI_NAMES, 'source_fraction_agent']
SMOOTHED_COLUMNS = [f'{name}_mean' for name in KPI_NAMES]

AGGREGATED_FILE = 'aggregated.csv'
SMOOTHED_FILE = 'smoothed.csv'
EVALUATION_FILE = 'evaluation.csv'

# repr-exact floats keep written CSVs byte-stable and recomputation exact
FLOAT_FORMAT = '%.17g'


class EpisodeRecorder:
    """Shield subscriber turning executed steps into one metric row per episode.

    Reward is the mean over steps of the cell-mean reward; KPIs are the post-action
    cell means, averaged the same way.
    """

    def __init__(self, agent_ids: Sequence[str] = ()):
        self.agent_ids = set(agent_ids)
        self.rows: List[Dict[str, float]] = []
        self.episode: Optional[int] = None
        self._step_means: List[np.ndarray] = []
        self._executed = 0
        self._from_agent = 0

    def begin_episode(self, episode: int) -> None:
        self.episode = episode
        self._step_means = []
        self._executed = 0
        self._from_agent = 0

    def __call__(self, transitions: Sequence[Transition], decisions: Sequence[ShieldDecision]) -> None:
        if self.episode is None:
            raise ContractError("recorder received a step outside an episode")
        values = np.array([[t.reward, t.next_state.cov, t.next_state.cap, t.next_state.qual]
                           for t in transitions])
        self._step_means.append(values.mean(axis=0))
        self._executed += len(decisions)
        self._from_agent += sum(1 for d in decisions if d.source_id in self.agent_ids)

    def end_episode(self, k: Optional[float] = None) -> Dict[str, float]:
        if self.episode is None or not self._step_means:
            raise ContractError("episode ended without any recorded step")
        means = np.mean(self._step_means, axis=0)
        row = {'episode': self.episode}
        row.update({name: float(v) for name, v in zip(KPI_NAMES, means)})
        row['k'] = np.nan if k is None else float(k)
        row['source_fraction_agent'] = self._from_agent / self._executed
        self.rows.append(row)
        self.episode = None
        return row

    def take_rows(self) -> List[Dict[str, float]]:
        rows, self.rows = self.rows, []
        return rows


def episode_frame(rows: Sequence[Dict[str, float]]) -> pd.DataFrame:
    return pd.DataFrame(list(rows), columns=RAW_COLUMNS)


def write_csv(frame: pd.DataFrame, path) -> None:
    try:
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    except OSError as e:
        raise DatasetIOError(path, f"cannot write CSV: {e}") from e
    logger.debug(f"Wrote {len(frame)} rows to {path}")


def read_csv(path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, float_precision='round_trip')
    except OSError as e:
        raise DatasetIOError(path, f"cannot read CSV: {e}") from e


def aggregate(seed_frames: Dict[int, pd.DataFrame]) -> pd.DataFrame:
    """Cross-seed mean/min/max per episode, on unsmoothed data."""
    if not seed_frames:
        raise ContractError("nothing to aggregate: no surviving seeds")
    lengths = {seed: len(frame) for seed, frame in seed_frames.items()}
    if len(set(lengths.values())) != 1:
        raise AlignmentError(f"seeds recorded different episode counts: {lengths}")

    combined = pd.concat([frame.assign(seed=seed) for seed, frame in sorted(seed_frames.items())],
                         ignore_index=True)
    grouped = combined.groupby('episode', sort=True)

    result = pd.DataFrame({'episode': sorted(combined['episode'].unique())})
    for name in KPI_NAMES:
        stats = grouped[name].agg(['mean', 'min', 'max'])
        result[f'{name}_mean'] = stats['mean'].to_numpy()
        result[f'{name}_min'] = stats['min'].to_numpy()
        result[f'{name}_max'] = stats['max'].to_numpy()
    result['k_mean'] = grouped['k'].mean().to_numpy()
    result['source_fraction_agent'] = grouped['source_fraction_agent'].mean().to_numpy()

    # mean is taken in floating point and may round a hair past an extreme
    for name in KPI_NAMES:
        result[f'{name}_mean'] = result[f'{name}_mean'].clip(result[f'{name}_min'], result[f'{name}_max'])
    return result[AGGREGATED_COLUMNS]


def smooth(aggregated: pd.DataFrame, window: int) -> pd.DataFrame:
    """Running average over the mean curves; min/max columns stay as aggregated."""
    smoothed = aggregated.copy()
    for column in SMOOTHED_COLUMNS:
        smoothed[column] = running_average(aggregated[column].to_numpy(), window)
    return smoothed


def summarize_evaluation(seed_frames: Dict[int, pd.DataFrame]) -> pd.DataFrame:
    rows = []
    for seed, frame in sorted(seed_frames.items()):
        if frame.empty:
            continue
        row = {'seed': seed, 'n_episodes': len(frame)}
        row.update({name: float(frame[name].mean()) for name in KPI_NAMES})
        row['source_fraction_agent'] = float(frame['source_fraction_agent'].mean())
        rows.append(row)
    return pd.DataFrame(rows, columns=EVALUATION_COLUMNS)


def window_means(values: Sequence[float]) -> Dict[str, float]:
    """Early (first quartile of episodes) and final (last quartile) window means."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return {'early_mean': np.nan, 'final_mean': np.nan}
    span = max(1, arr.size // 4)
    return {'early_mean': float(arr[:span].mean()), 'final_mean': float(arr[-span:].mean())}


@dataclass
class RunComparison:
    metric: str
    table: pd.DataFrame
    summary: pd.DataFrame

    def write(self, path) -> None:
        write_csv(self.table, path)
        root, ext = os.path.splitext(str(path))
        write_csv(self.summary, f"{root}_summary{ext or '.csv'}")


def _metric_column(metric: str) -> str:
    if metric in KPI_NAMES or metric == 'k':
        return f'{metric}_mean'
    return metric


def _run_labels(run_dirs: Sequence[str]) -> List[str]:
    names = [os.path.basename(os.path.normpath(str(d))) or str(d) for d in run_dirs]
    return [name if names.count(name) == 1 else f'{name}#{idx}' for idx, name in enumerate(names)]


def compare_runs(run_dirs: Sequence[str], metric: str = 'reward') -> RunComparison:
    """Align one aggregated metric across runs; differences are against the first run."""
    if len(run_dirs) < 2:
        raise ContractError(f"compare needs at least two run directories, got {len(run_dirs)}")
    column = _metric_column(metric)
    labels = _run_labels(run_dirs)

    series = {}
    for label, run_dir in zip(labels, run_dirs):
        frame = read_csv(os.path.join(str(run_dir), AGGREGATED_FILE))
        if column not in frame.columns:
            raise AlignmentError(f"run {label} has no column {column!r}")
        series[label] = frame[['episode', column]]

    counts = {label: len(frame) for label, frame in series.items()}
    if len(set(counts.values())) != 1:
        raise AlignmentError(f"runs have mismatched episode counts: {counts}")
    episodes = series[labels[0]]['episode'].to_numpy()
    for label in labels[1:]:
        if not np.array_equal(series[label]['episode'].to_numpy(), episodes):
            raise AlignmentError(f"runs {labels[0]} and {label} cover different episodes")

    reference = series[labels[0]][column].to_numpy()
    table = pd.DataFrame({'episode': episodes})
    for label in labels:
        table[label] = series[label][column].to_numpy()
    for label in labels[1:]:
        table[f'diff_{label}'] = table[label].to_numpy() - reference

    ref_windows = window_means(reference)
    summary_rows = []
    for label in labels:
        windows = window_means(table[label])
        summary_rows.append({
            'run': label,
            'early_mean': windows['early_mean'],
            'final_mean': windows['final_mean'],
            'early_diff': windows['early_mean'] - ref_windows['early_mean'],
            'final_diff': windows['final_mean'] - ref_windows['final_mean'],
        })
    summary = pd.DataFrame(summary_rows, columns=['run', 'early_mean', 'final_mean', 'early_diff', 'final_diff'])
    logger.info(f"Compared {column} across {len(labels)} runs over {len(episodes)} episodes")
    return RunComparison(metric=column, table=table, summary=summary)
