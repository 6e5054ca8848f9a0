#!/usr/bin/env python3
"""Experiment configuration: one flat, typed JSON document per experiment."""

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional

from config import (
    AC_DISCOUNT,
    AC_LEARNING_RATE,
    DQN_BATCH_SIZE,
    DQN_DISCOUNT,
    DQN_LEARNING_RATE,
    EPISODE_LENGTH,
    EPSILON_DECAY_EPISODES,
    EPSILON_END,
    EPSILON_START,
    K_DIMINISH,
    K_INITIAL,
    K_WINDOW,
    LOG_LEVEL,
    MAX_WORKERS,
    N_EVAL_EPISODES,
    N_SEEDS,
    N_TRAIN_EPISODES,
    REPLAY_CAPACITY,
    RULE_COV_HIGH,
    RULE_QUAL_HIGH,
    SMOOTHING_WINDOW,
)
from radio_sim import SimConfig
from utils import ConfigError

logger = logging.getLogger(__name__)

SCENARIOS = ('unrestricted-dqn', 'unrestricted-ac', 'baseline-only', 'predictor-shield', 'k-shield')
AGENT_KINDS = ('dqn', 'ac')
SIM_PREFIX = 'sim_'
LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')


@dataclass
class ExperimentConfig:
    """Everything one `run` needs. Simulator fields live in `sim` and are flattened as sim_<name>."""
    scenario: str = 'baseline-only'
    agent_kind: str = 'dqn'
    baselines: List[str] = field(default_factory=lambda: ['rule'])
    predictor_path: Optional[str] = None

    # k-shield
    b: List[float] = field(default_factory=list)  # empty = uniform over baselines
    d: float = K_DIMINISH
    w: int = K_WINDOW
    k_initial: float = K_INITIAL

    # protocol
    seeds: List[int] = field(default_factory=lambda: list(range(N_SEEDS)))
    n_train_episodes: int = N_TRAIN_EPISODES
    episode_length: int = EPISODE_LENGTH
    n_eval_episodes: int = N_EVAL_EPISODES
    smoothing_window: int = SMOOTHING_WINDOW
    output_dir: str = 'runs/experiment'
    max_workers: int = MAX_WORKERS
    log_level: str = LOG_LEVEL

    # agents
    dqn_learning_rate: float = DQN_LEARNING_RATE
    dqn_batch_size: int = DQN_BATCH_SIZE
    dqn_discount: float = DQN_DISCOUNT
    replay_capacity: int = REPLAY_CAPACITY
    epsilon_start: float = EPSILON_START
    epsilon_end: float = EPSILON_END
    epsilon_decay_episodes: int = EPSILON_DECAY_EPISODES
    ac_learning_rate: float = AC_LEARNING_RATE
    ac_discount: float = AC_DISCOUNT

    # rule baseline
    rule_cov_high: float = RULE_COV_HIGH
    rule_qual_high: float = RULE_QUAL_HIGH

    sim: SimConfig = field(default_factory=SimConfig)

    @property
    def effective_agent_kind(self) -> Optional[str]:
        """Agent the scenario trains; unrestricted scenarios name their own kind."""
        if self.scenario == 'unrestricted-dqn':
            return 'dqn'
        if self.scenario == 'unrestricted-ac':
            return 'ac'
        if self.scenario == 'baseline-only':
            return None
        return self.agent_kind

    @property
    def baseline_weights(self) -> List[float]:
        if self.b:
            return list(self.b)
        return [1.0 / len(self.baselines)] * len(self.baselines) if self.baselines else []

    def to_dict(self) -> Dict[str, Any]:
        """Flat view, simulator fields prefixed with sim_."""
        data = {f.name: getattr(self, f.name) for f in fields(self) if f.name != 'sim'}
        data = {k: list(v) if isinstance(v, list) else v for k, v in data.items()}
        data.update({SIM_PREFIX + k: v for k, v in asdict(self.sim).items()})
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ExperimentConfig':
        """Strict parse: unknown keys and wrongly typed values raise ConfigError."""
        schema = _schema()
        top, sim = {}, {}
        for key, value in data.items():
            if key not in schema:
                raise ConfigError(key, 'unknown configuration key')
            _check_type(key, value, schema[key]['type'])
            if key.startswith(SIM_PREFIX):
                sim[key[len(SIM_PREFIX):]] = value
            else:
                top[key] = value
        if 'sim' in top:
            raise ConfigError('sim', 'simulator settings are given as flat sim_<name> keys')
        sim_config = SimConfig(**{k: (float(v) if isinstance(v, int) and _sim_types()[k] == 'float' else v)
                                  for k, v in sim.items()})
        config = cls(**top, sim=sim_config)
        config.validate()
        return config

    def validate(self) -> 'ExperimentConfig':
        """Raise ConfigError naming the first offending key; return self when valid."""
        validations = [
            (self.scenario in SCENARIOS, 'scenario', f'must be one of {list(SCENARIOS)}'),
            (self.agent_kind in AGENT_KINDS, 'agent_kind', f'must be one of {list(AGENT_KINDS)}'),
            (len(self.seeds) > 0, 'seeds', 'must name at least one seed'),
            (all(isinstance(s, int) and s >= 0 for s in self.seeds), 'seeds', 'must be non-negative integers'),
            (len(set(self.seeds)) == len(self.seeds), 'seeds', 'must not repeat'),
            (self.n_train_episodes >= 1, 'n_train_episodes', 'must be >= 1'),
            (self.episode_length >= 1, 'episode_length', 'must be >= 1'),
            (self.n_eval_episodes >= 0, 'n_eval_episodes', 'must be >= 0'),
            (self.smoothing_window >= 1, 'smoothing_window', 'must be >= 1'),
            (self.max_workers >= 1, 'max_workers', 'must be >= 1'),
            (self.log_level in LOG_LEVELS, 'log_level', f'must be one of {list(LOG_LEVELS)}'),
            (bool(self.output_dir), 'output_dir', 'must be set'),
            (self.dqn_learning_rate > 0, 'dqn_learning_rate', 'must be > 0'),
            (self.dqn_batch_size >= 1, 'dqn_batch_size', 'must be >= 1'),
            (0 <= self.dqn_discount < 1, 'dqn_discount', 'must lie in [0, 1)'),
            (self.replay_capacity >= self.dqn_batch_size, 'replay_capacity', 'must be >= dqn_batch_size'),
            (0 <= self.epsilon_start <= 1, 'epsilon_start', 'must lie in [0, 1]'),
            (0 <= self.epsilon_end <= 1, 'epsilon_end', 'must lie in [0, 1]'),
            (self.epsilon_decay_episodes >= 0, 'epsilon_decay_episodes', 'must be >= 0'),
            (self.ac_learning_rate > 0, 'ac_learning_rate', 'must be > 0'),
            (0 <= self.ac_discount < 1, 'ac_discount', 'must lie in [0, 1)'),
            (0 < self.rule_cov_high < 1, 'rule_cov_high', 'must lie in (0, 1)'),
            (0 < self.rule_qual_high < 1, 'rule_qual_high', 'must lie in (0, 1)'),
            (0 <= self.k_initial <= 1, 'k_initial', 'must lie in [0, 1]'),
            (0 < self.d < 1, 'd', 'must lie in (0, 1)'),
            (self.w >= 1, 'w', 'must be >= 1'),
        ]
        for is_valid, key, message in validations:
            if not is_valid:
                raise ConfigError(key, message)

        for spec in self.baselines:
            if spec != 'rule' and not (spec.startswith('model:') and len(spec) > len('model:')):
                raise ConfigError('baselines', f"entries must be 'rule' or 'model:<path>', got {spec!r}")

        if self.scenario == 'baseline-only' and len(self.baselines) != 1:
            raise ConfigError('baselines', 'baseline-only runs exactly one baseline')
        if self.scenario in ('predictor-shield', 'k-shield') and not self.baselines:
            raise ConfigError('baselines', f'{self.scenario} needs at least one baseline')
        if self.scenario == 'predictor-shield' and not self.predictor_path:
            raise ConfigError('predictor_path', 'predictor-shield needs a trained predictor')
        if self.scenario == 'k-shield':
            weights = self.baseline_weights
            if len(weights) != len(self.baselines):
                raise ConfigError('b', f'needs {len(self.baselines)} weights, got {len(weights)}')
            if any(v < 0 for v in weights) or abs(sum(weights) - 1.0) > 1e-9:
                raise ConfigError('b', 'weights must be non-negative and sum to 1')

        self.sim.validate()
        return self


def _sim_types() -> Dict[str, str]:
    return {f.name: ('int' if f.type in (int, 'int') else 'float') for f in fields(SimConfig)}


_DESCRIPTIONS = {
    'scenario': ('string', 'Experiment scenario', {'options': list(SCENARIOS)}),
    'agent_kind': ('string', 'Agent trained behind the shield', {'options': list(AGENT_KINDS)}),
    'baselines': ('list[string]', "Ordered baselines: 'rule' or 'model:<path.mlp>'", {}),
    'predictor_path': ('optional[string]', 'State predictor model for predictor-shield', {}),
    'b': ('list[float]', 'k-shield baseline weights (empty = uniform)', {}),
    'd': ('float', 'k-shield diminishing factor', {'range': [0, 1]}),
    'w': ('integer', 'k-shield reward window in episodes', {'range': [1, None]}),
    'k_initial': ('float', 'Initial k-shield baseline probability', {'range': [0, 1]}),
    'seeds': ('list[integer]', 'Independent experiment seeds', {}),
    'n_train_episodes': ('integer', 'Training episodes per seed', {'range': [1, None]}),
    'episode_length': ('integer', 'Steps per episode', {'range': [1, None]}),
    'n_eval_episodes': ('integer', 'Greedy evaluation episodes per seed', {'range': [0, None]}),
    'smoothing_window': ('integer', 'Running-average window for smoothed.csv', {'range': [1, None]}),
    'output_dir': ('string', 'Directory receiving CSVs and the run log', {}),
    'max_workers': ('integer', 'Seeds run concurrently', {'range': [1, None]}),
    'log_level': ('string', 'Console logging level', {'options': list(LOG_LEVELS)}),
    'dqn_learning_rate': ('float', 'DQN SGD learning rate', {'range': [0, None]}),
    'dqn_batch_size': ('integer', 'DQN replay batch size', {'range': [1, None]}),
    'dqn_discount': ('float', 'DQN discount factor', {'range': [0, 1]}),
    'replay_capacity': ('integer', 'DQN replay capacity', {'range': [1, None]}),
    'epsilon_start': ('float', 'Exploration probability at episode 0', {'range': [0, 1]}),
    'epsilon_end': ('float', 'Exploration probability after decay', {'range': [0, 1]}),
    'epsilon_decay_episodes': ('integer', 'Episodes of linear epsilon decay', {'range': [0, None]}),
    'ac_learning_rate': ('float', 'Actor-critic SGD learning rate', {'range': [0, None]}),
    'ac_discount': ('float', 'Actor-critic discount factor', {'range': [0, 1]}),
    'rule_cov_high': ('float', 'Rule baseline coverage risk threshold', {'range': [0, 1]}),
    'rule_qual_high': ('float', 'Rule baseline quality risk threshold', {'range': [0, 1]}),
}


def _schema() -> Dict[str, Dict[str, Any]]:
    defaults = ExperimentConfig().to_dict()
    schema = {}
    for key, (type_name, description, extra) in _DESCRIPTIONS.items():
        schema[key] = {'type': type_name, 'description': description, 'default': defaults[key], **extra}
    for name, type_name in _sim_types().items():
        key = SIM_PREFIX + name
        schema[key] = {
            'type': 'integer' if type_name == 'int' else 'float',
            'description': f'Simulator parameter {name}',
            'default': defaults[key],
        }
    return schema


def describe_settings() -> Dict[str, Dict[str, Any]]:
    """Documented schema: type, description, default and range/options per key."""
    return _schema()


def _check_type(key: str, value: Any, type_name: str) -> None:
    def is_int(v):
        return isinstance(v, int) and not isinstance(v, bool)

    def is_float(v):
        return isinstance(v, (int, float)) and not isinstance(v, bool)

    checks = {
        'string': lambda v: isinstance(v, str),
        'optional[string]': lambda v: v is None or isinstance(v, str),
        'integer': is_int,
        'float': is_float,
        'list[string]': lambda v: isinstance(v, list) and all(isinstance(x, str) for x in v),
        'list[float]': lambda v: isinstance(v, list) and all(is_float(x) for x in v),
        'list[integer]': lambda v: isinstance(v, list) and all(is_int(x) for x in v),
    }
    if not checks[type_name](value):
        raise ConfigError(key, f'expected {type_name}, got {value!r}')


def load_config(path) -> ExperimentConfig:
    with open(path, 'r') as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(os.fspath(path), f'invalid JSON: {e}') from e
    if not isinstance(data, dict):
        raise ConfigError(os.fspath(path), 'configuration must be a JSON object')
    config = ExperimentConfig.from_dict(data)
    logger.info(f"Loaded {config.scenario} configuration from {path}")
    return config


def save_config(config: ExperimentConfig, path) -> None:
    with open(path, 'w') as f:
        json.dump(config.to_dict(), f, indent=2, sort_keys=True)
    logger.info(f"Saved configuration to {path}")
