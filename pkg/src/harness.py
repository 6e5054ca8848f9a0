#!/usr/bin/env python3
"""Experiment orchestration: dataset synthesis, multi-seed runs and metric files.

A run directory holds:
    config.json               resolved configuration
    seed_<s>.csv              per-episode training metrics of one seed
    evaluation_seed_<s>.csv   per-episode greedy evaluation metrics of one seed
    decisions_seed_<s>.csv    every shield decision of one seed
    aggregated.csv            cross-seed mean/min/max per training episode
    smoothed.csv              aggregated.csv with running-average mean curves
    evaluation.csv            per-seed evaluation means
    run.log                   run log
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from agents import AGENT, Proposer, make_agent
from baselines import ModelBasedPolicy, RuleBasedPolicy, train_offline_baseline
from config import EPISODE_LOG_INTERVAL, LOG_FILE_NAME, SYNTH_EPISODE_LENGTH
from experiment_config import ExperimentConfig, save_config
from logger import Logger
from metrics import (
    AGGREGATED_FILE,
    EVALUATION_FILE,
    SMOOTHED_FILE,
    EpisodeRecorder,
    aggregate,
    episode_frame,
    read_csv,
    smooth,
    summarize_evaluation,
    write_csv,
)
from radio_sim import NetworkLayout, SimConfig, build_layout
from shield import (
    KShieldLogic,
    KShieldState,
    PredictorShieldLogic,
    SafetyShield,
    ShieldLogic,
    StatePredictor,
    predictor_examples,
    predictor_train,
)
from tilt_env import CellState, EpisodeConfig, TiltAction, TiltEnvironment, Transition
from utils import ConfigError, ContractError, DatasetIOError, FormatError, NumericError

logger = logging.getLogger(__name__)

DATASET_COLUMNS = [
    'episode', 'step', 'cell',
    'tilt_norm', 'cov', 'cap', 'qual',
    'action', 'reward',
    'next_tilt_norm', 'next_cov', 'next_cap', 'next_qual',
]

SHIELDED_SCENARIOS = ('predictor-shield', 'k-shield')


# ---- Datasets ----

def transitions_frame(transitions: Sequence[Transition]) -> pd.DataFrame:
    rows = [
        (t.episode, t.step, t.cell_id,
         t.state.tilt_norm, t.state.cov, t.state.cap, t.state.qual,
         t.action.delta, t.reward,
         t.next_state.tilt_norm, t.next_state.cov, t.next_state.cap, t.next_state.qual)
        for t in transitions
    ]
    return pd.DataFrame(rows, columns=DATASET_COLUMNS)


def synthesize_dataset(sim: SimConfig, n_samples: int, seed: int, out_path=None,
                       episode_length: int = SYNTH_EPISODE_LENGTH) -> List[Transition]:
    """Random tilts, uniformly random actions; every cell of every step is one record."""
    if n_samples < 1:
        raise ContractError(f"n_samples must be >= 1, got {n_samples}")
    env = TiltEnvironment(sim, EpisodeConfig(episode_length=episode_length, n_episodes=1))
    rng = np.random.default_rng(seed)

    transitions: List[Transition] = []
    episode = 0
    while len(transitions) < n_samples:
        env.reset([seed, episode])
        for _ in range(episode_length):
            actions = [TiltAction.from_index(i) for i in rng.integers(3, size=env.n_cells)]
            _, _, step_transitions = env.step(actions)
            transitions.extend(step_transitions)
            if len(transitions) >= n_samples:
                break
        logger.debug(f"Synth episode {episode}: network mean KPIs {env.mean_kpis()}")
        episode += 1
    transitions = transitions[:n_samples]
    logger.info(f"Synthesized {len(transitions)} transitions over {episode} episodes (seed {seed})")

    if out_path is not None:
        write_csv(transitions_frame(transitions), out_path)
        logger.info(f"Wrote dataset to {out_path}")
    return transitions


def load_dataset(path) -> List[Transition]:
    frame = read_csv(path)
    missing = [c for c in DATASET_COLUMNS if c not in frame.columns]
    if missing:
        raise DatasetIOError(path, f"dataset is missing columns {missing}")
    transitions = [
        Transition(
            cell_id=int(row.cell),
            state=CellState(row.tilt_norm, row.cov, row.cap, row.qual),
            action=TiltAction(int(row.action)),
            reward=float(row.reward),
            next_state=CellState(row.next_tilt_norm, row.next_cov, row.next_cap, row.next_qual),
            episode=int(row.episode),
            step=int(row.step),
        )
        for row in frame.itertuples(index=False)
    ]
    logger.info(f"Loaded {len(transitions)} transitions from {path}")
    return transitions


def train_baseline_file(data_path, out_path, seed: int = 0, **kwargs) -> ModelBasedPolicy:
    policy = train_offline_baseline(load_dataset(data_path), seed, **kwargs)
    policy.save(out_path)
    return policy


def train_predictor_file(data_path, out_path, seed: int = 0, **kwargs) -> StatePredictor:
    predictor = predictor_train(predictor_examples(load_dataset(data_path)), seed, **kwargs)
    predictor.save(out_path)
    return predictor


# ---- Experiments ----

@dataclass
class SeedResult:
    seed: int
    train: Optional[pd.DataFrame] = None
    evaluation: Optional[pd.DataFrame] = None
    decisions: Optional[pd.DataFrame] = None
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass
class ExperimentSummary:
    output_dir: str
    scenario: str
    completed_seeds: List[int] = field(default_factory=list)
    failed_seeds: Dict[int, str] = field(default_factory=dict)
    files: Dict[str, str] = field(default_factory=dict)
    final_reward_mean: Optional[float] = None
    evaluation_reward_mean: Optional[float] = None

    def to_dict(self):
        return {
            'output_dir': self.output_dir,
            'scenario': self.scenario,
            'completed_seeds': self.completed_seeds,
            'failed_seeds': {str(k): v for k, v in self.failed_seeds.items()},
            'files': self.files,
            'final_reward_mean': self.final_reward_mean,
            'evaluation_reward_mean': self.evaluation_reward_mean,
        }


def _load_model(path: str, source_id: str) -> ModelBasedPolicy:
    if not os.path.exists(path):
        raise ConfigError('baselines', f'model file not found: {path}')
    try:
        return ModelBasedPolicy.load(path, source_id=source_id)
    except FormatError as e:
        raise ConfigError('baselines', f'{path} is not a usable model: {e}') from e


def build_baselines(config: ExperimentConfig) -> List[Proposer]:
    names = [spec.split(':', 1)[0] for spec in config.baselines]
    baselines: List[Proposer] = []
    for idx, (name, spec) in enumerate(zip(names, config.baselines)):
        source_id = name if names.count(name) == 1 else f'{name}-{idx}'
        if spec == 'rule':
            baselines.append(RuleBasedPolicy(source_id, config.rule_cov_high, config.rule_qual_high))
        else:
            baselines.append(_load_model(spec.split(':', 1)[1], source_id))
    return baselines


def build_agent(config: ExperimentConfig, seed: int) -> Optional[Proposer]:
    kind = config.effective_agent_kind
    if kind == 'dqn':
        return make_agent('dqn', seed,
                          learning_rate=config.dqn_learning_rate,
                          batch_size=config.dqn_batch_size,
                          discount=config.dqn_discount,
                          replay_capacity=config.replay_capacity,
                          epsilon_start=config.epsilon_start,
                          epsilon_end=config.epsilon_end,
                          epsilon_decay_episodes=config.epsilon_decay_episodes)
    if kind == 'ac':
        return make_agent('ac', seed, learning_rate=config.ac_learning_rate, discount=config.ac_discount)
    return None


def build_logic(config: ExperimentConfig) -> Optional[ShieldLogic]:
    """Only the shielded scenarios get a logic; the others pass one proposer through."""
    if config.scenario == 'predictor-shield':
        if not os.path.exists(config.predictor_path):
            raise ConfigError('predictor_path', f'predictor file not found: {config.predictor_path}')
        try:
            return PredictorShieldLogic(StatePredictor.load(config.predictor_path))
        except FormatError as e:
            raise ConfigError('predictor_path', f'not a usable predictor: {e}') from e
    if config.scenario == 'k-shield':
        return KShieldLogic(KShieldState(k=config.k_initial, d=config.d, w=config.w,
                                         b=tuple(config.baseline_weights)))
    return None


def build_shield(config: ExperimentConfig, seed: int, layout: Optional[NetworkLayout] = None) -> SafetyShield:
    env = TiltEnvironment(config.sim,
                          EpisodeConfig(episode_length=config.episode_length,
                                        n_episodes=config.n_train_episodes),
                          layout=layout)
    shield = SafetyShield(env, build_logic(config), seed=seed)

    agent = build_agent(config, seed)
    if config.scenario == 'baseline-only' or config.scenario in SHIELDED_SCENARIOS:
        for baseline in build_baselines(config):
            shield.register(baseline)
    if agent is not None:
        shield.register(agent)
    return shield


class ExperimentRunner:
    """Runs one configuration over all of its seeds and writes the run directory."""

    def __init__(self, config: ExperimentConfig, run_logger: Optional[Logger] = None):
        self.config = config.validate()
        self.logger = run_logger
        self.layout: Optional[NetworkLayout] = None

    def _log(self, level: str, message: str) -> None:
        if self.logger is not None:
            getattr(self.logger, level)(message)
        else:
            getattr(logger, level)(message)

    def _run_episode(self, shield: SafetyShield, recorder: EpisodeRecorder, seed: int,
                     episode: int, explore: bool, learn: bool) -> Dict[str, float]:
        shield.reset([seed, episode])
        shield.start_episode(episode)
        recorder.begin_episode(episode)
        for _ in range(self.config.episode_length):
            shield.step(explore=explore, learn=learn)
        return recorder.end_episode(shield.k)

    def run_seed(self, seed: int) -> SeedResult:
        config = self.config
        shield = build_shield(config, seed, self.layout)
        agent_ids = [p.source_id for p in shield.proposers if p.role == AGENT]
        recorder = EpisodeRecorder(agent_ids)
        shield.add_subscriber(recorder)

        try:
            for episode in range(config.n_train_episodes):
                row = self._run_episode(shield, recorder, seed, episode, explore=True, learn=True)
                shield.end_episode(row['reward'])
                if (episode + 1) % EPISODE_LOG_INTERVAL == 0 or episode + 1 == config.n_train_episodes:
                    if self.logger is not None:
                        self.logger.log_episode(seed, episode, row)
            train_rows = recorder.take_rows()

            for j in range(config.n_eval_episodes):
                self._run_episode(shield, recorder, seed, config.n_train_episodes + j,
                                  explore=False, learn=False)
            eval_rows = recorder.take_rows()
        except NumericError as e:
            if self.logger is not None:
                self.logger.log_seed_failure(seed, e)
            else:
                logger.error(f"Seed {seed} failed: {e}")
            return SeedResult(seed, error=str(e))

        self._log('info', f"Seed {seed} done: final training reward {train_rows[-1]['reward']:.4f}")
        return SeedResult(seed, train=episode_frame(train_rows), evaluation=episode_frame(eval_rows),
                          decisions=shield.decision_frame())

    def run(self) -> ExperimentSummary:
        config = self.config
        os.makedirs(config.output_dir, exist_ok=True)
        save_config(config, os.path.join(config.output_dir, 'config.json'))
        self.layout = build_layout(config.sim)
        self._log('info', f"Running {config.scenario} over seeds {config.seeds} "
                          f"({config.n_train_episodes} training episodes, {config.sim.n_cells} cells)")

        # validate proposers and model files before any worker starts
        build_shield(config, config.seeds[0], self.layout)

        with ThreadPoolExecutor(max_workers=min(config.max_workers, len(config.seeds))) as pool:
            results = list(pool.map(self.run_seed, config.seeds))

        summary = ExperimentSummary(output_dir=config.output_dir, scenario=config.scenario)
        survivors = [r for r in results if not r.failed]
        for result in results:
            if result.failed:
                summary.failed_seeds[result.seed] = result.error
        if not survivors:
            raise NumericError(f"every seed failed: {summary.failed_seeds}")
        if summary.failed_seeds:
            self._log('warning', f"Aggregating over {len(survivors)} surviving seeds; "
                                 f"failed: {sorted(summary.failed_seeds)}")

        for result in survivors:
            self._write(f'seed_{result.seed}.csv', result.train, summary)
            self._write(f'evaluation_seed_{result.seed}.csv', result.evaluation, summary)
            self._write(f'decisions_seed_{result.seed}.csv', result.decisions, summary)
            summary.completed_seeds.append(result.seed)

        aggregated = aggregate({r.seed: r.train for r in survivors})
        self._write(AGGREGATED_FILE, aggregated, summary)
        self._write(SMOOTHED_FILE, smooth(aggregated, config.smoothing_window), summary)
        evaluation = summarize_evaluation({r.seed: r.evaluation for r in survivors})
        self._write(EVALUATION_FILE, evaluation, summary)

        summary.final_reward_mean = float(aggregated['reward_mean'].iloc[-1])
        if not evaluation.empty:
            summary.evaluation_reward_mean = float(evaluation['reward'].mean())
        self._log('info', f"Run complete: {len(survivors)}/{len(results)} seeds, "
                          f"final reward mean {summary.final_reward_mean:.4f}")
        return summary

    def _write(self, name: str, frame: pd.DataFrame, summary: ExperimentSummary) -> None:
        path = os.path.join(self.config.output_dir, name)
        write_csv(frame, path)
        summary.files[name] = path


def run_experiment(config: ExperimentConfig) -> ExperimentSummary:
    """Run every seed of one scenario and write its CSVs and run log under config.output_dir.

    Args:
        config: Validated here; per-seed, aggregated, smoothed and evaluation files
            go to config.output_dir

    Returns:
        ExperimentSummary naming the completed and failed seeds and the files written

    Raises:
        ConfigError: the configuration is invalid
        NumericError: every seed diverged
    """
    config.validate()
    run_logger = Logger(os.path.join(config.output_dir, LOG_FILE_NAME), level=config.log_level,
                        capture_modules=True)
    try:
        return ExperimentRunner(config, run_logger).run()
    except NumericError as e:
        run_logger.error(f"Run failed: {e}")
        raise
    finally:
        run_logger.close()
