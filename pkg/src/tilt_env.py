#!/usr/bin/env python3
"""Per-cell tilt MDP over the radio simulator: state, action, reward and episode mechanics."""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config import EPISODE_LENGTH, N_TRAIN_EPISODES
from radio_sim import CellKpis, NetworkLayout, SimConfig, TiltVector, build_layout, compute_kpis
from utils import ConfigError, ContractError, DomainError, validate_unit_interval

logger = logging.getLogger(__name__)

ACTION_DELTAS: Tuple[int, ...] = (-1, 0, 1)
MAX_REWARD_MAGNITUDE = math.log(4.0)


@dataclass(frozen=True)
class TiltAction:
    """Discrete downtilt change in degrees."""
    delta: int

    def __post_init__(self):
        if self.delta not in ACTION_DELTAS:
            raise DomainError(f"tilt action must be one of {ACTION_DELTAS}, got {self.delta}")
        object.__setattr__(self, 'delta', int(self.delta))

    @property
    def index(self) -> int:
        return ACTION_DELTAS.index(self.delta)

    @classmethod
    def from_index(cls, index: int) -> 'TiltAction':
        return cls(ACTION_DELTAS[int(index)])


@dataclass(frozen=True)
class CellState:
    """Agent observation [tilt_norm, cov, cap, qual], all in [0, 1]."""
    tilt_norm: float
    cov: float
    cap: float
    qual: float

    def __post_init__(self):
        for name in ('tilt_norm', 'cov', 'cap', 'qual'):
            value = float(getattr(self, name))
            validate_unit_interval(name, value)
            object.__setattr__(self, name, value)

    @classmethod
    def from_kpis(cls, tilt_norm: float, kpis: CellKpis) -> 'CellState':
        return cls(tilt_norm, kpis.cov, kpis.cap, kpis.qual)

    @property
    def kpis(self) -> CellKpis:
        return CellKpis(self.cov, self.cap, self.qual)

    def as_array(self) -> np.ndarray:
        return np.array([self.tilt_norm, self.cov, self.cap, self.qual], dtype=float)


@dataclass(frozen=True)
class Transition:
    cell_id: int
    state: CellState
    action: TiltAction
    reward: float
    next_state: CellState
    episode: int
    step: int


@dataclass(frozen=True)
class EpisodeConfig:
    episode_length: int = EPISODE_LENGTH
    n_episodes: int = N_TRAIN_EPISODES

    def validate(self) -> 'EpisodeConfig':
        if self.episode_length < 1:
            raise ConfigError('episode_length', 'must be >= 1')
        if self.n_episodes < 0:
            raise ConfigError('n_episodes', 'must be >= 0')
        return self


def reward(kpis: CellKpis) -> float:
    """r = -ln(1 + cov^2 + cap^2 + qual^2), in [-ln 4, 0]."""
    for name, value in zip(('cov', 'cap', 'qual'), kpis.as_tuple()):
        validate_unit_interval(name, value)
    return -math.log1p(kpis.cov ** 2 + kpis.cap ** 2 + kpis.qual ** 2)


def tilt_to_norm(tilt_deg: float, config: SimConfig) -> float:
    span = config.max_tilt_deg - config.min_tilt_deg
    if span == 0:
        return 0.0
    return (tilt_deg - config.min_tilt_deg) / span


def norm_to_tilt(tilt_norm: float, config: SimConfig) -> float:
    return config.min_tilt_deg + tilt_norm * (config.max_tilt_deg - config.min_tilt_deg)


class TiltEnvironment:
    """Synchronous multi-cell environment: every cell acts, then KPIs are recomputed once."""

    def __init__(self, sim_config: Optional[SimConfig] = None,
                 episode_config: Optional[EpisodeConfig] = None,
                 layout: Optional[NetworkLayout] = None):
        self.sim_config = (sim_config or SimConfig()).validate()
        self.episode_config = (episode_config or EpisodeConfig()).validate()
        self.layout = layout if layout is not None else build_layout(self.sim_config)
        if self.layout.n_cells != self.sim_config.n_cells:
            raise ContractError(
                f"layout has {self.layout.n_cells} cells, config expects {self.sim_config.n_cells}"
            )
        self.tilts: Optional[np.ndarray] = None
        self.kpis: List[CellKpis] = []
        self.episode = -1
        self.step_count = 0

    @property
    def n_cells(self) -> int:
        return self.sim_config.n_cells

    def _integer_tilt_range(self) -> Tuple[int, int]:
        low = math.ceil(self.sim_config.min_tilt_deg)
        high = math.floor(self.sim_config.max_tilt_deg)
        if low > high:
            raise ConfigError('min_tilt_deg', 'tilt range contains no integer degree')
        return low, high

    def _states(self) -> List[CellState]:
        return [
            CellState.from_kpis(tilt_to_norm(tilt, self.sim_config), kpis)
            for tilt, kpis in zip(self.tilts, self.kpis)
        ]

    def _recompute(self) -> None:
        self.kpis = compute_kpis(self.layout, TiltVector(tuple(self.tilts)), self.sim_config)

    def set_tilts(self, tilts_deg: Sequence[float]) -> List[CellState]:
        """Put the network into a known tilt configuration (starts a fresh episode)."""
        vector = TiltVector(tuple(tilts_deg))
        vector.validate(self.sim_config)
        self.tilts = vector.as_array()
        self.episode += 1
        self.step_count = 0
        self._recompute()
        return self._states()

    def reset(self, seed_material=None) -> List[CellState]:
        """Draw every tilt uniformly from the integer degrees in [min_tilt, max_tilt]."""
        low, high = self._integer_tilt_range()
        rng = np.random.default_rng(seed_material)
        tilts = rng.integers(low, high + 1, size=self.n_cells).astype(float)
        states = self.set_tilts(tilts)
        logger.debug(f"Reset episode {self.episode} (seed material {seed_material}): "
                     f"mean tilt {tilts.mean():.2f} deg")
        return states

    def states(self) -> List[CellState]:
        if self.tilts is None:
            raise ContractError("environment has not been reset")
        return self._states()

    def current_kpis(self) -> List[CellKpis]:
        if self.tilts is None:
            raise ContractError("environment has not been reset")
        return list(self.kpis)

    def mean_kpis(self) -> CellKpis:
        """Network-wide mean of each KPI over all cells."""
        if self.tilts is None:
            raise ContractError("environment has not been reset")
        arr = np.array([k.as_tuple() for k in self.kpis])
        return CellKpis(*(float(v) for v in arr.mean(axis=0)))

    def step(self, actions: Sequence[TiltAction]) -> Tuple[List[CellState], List[float], List[Transition]]:
        if self.tilts is None:
            raise ContractError("environment has not been reset")
        if len(actions) != self.n_cells:
            raise ContractError(f"expected {self.n_cells} actions, got {len(actions)}")
        if self.step_count >= self.episode_config.episode_length:
            raise ContractError(
                f"episode {self.episode} exhausted after {self.episode_config.episode_length} steps"
            )

        before = self._states()
        deltas = np.array([a.delta for a in actions], dtype=float)
        self.tilts = np.clip(self.tilts + deltas, self.sim_config.min_tilt_deg, self.sim_config.max_tilt_deg)
        self._recompute()
        after = self._states()

        rewards = [reward(k) for k in self.kpis]
        transitions = [
            Transition(cell, before[cell], actions[cell], rewards[cell], after[cell],
                       self.episode, self.step_count)
            for cell in range(self.n_cells)
        ]
        self.step_count += 1
        return after, rewards, transitions
