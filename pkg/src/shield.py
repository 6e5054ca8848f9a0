#!/usr/bin/env python3
"""Safety shield: the only holder of the environment, mediating between proposers and the network.

Two shield logics pick the executed action per cell:
  * state predictor logic: score each proposed action by the predicted next KPIs and
    execute the lowest ``cov'^2 + cap'^2 + qual'^2`` (ties go to the earlier-registered
    proposer; baselines register before agents);
  * k-shield logic: with probability k execute a baseline action (baseline i drawn with
    probability b_i), otherwise the agent's action; k shrinks by d whenever the mean
    episode reward of the latest w episodes is at least that of the w before.
Without a logic the shield passes a single proposer's actions straight through.
"""

import logging
from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from sklearn.model_selection import train_test_split

from agents import AGENT, BASELINE, Proposer
from config import (
    K_DIMINISH,
    K_INITIAL,
    K_WINDOW,
    PREDICTOR_BATCH_SIZE,
    PREDICTOR_EPOCHS,
    PREDICTOR_HIDDEN,
    PREDICTOR_HOLDOUT_FRACTION,
    PREDICTOR_LEARNING_RATE,
    PREDICTOR_RMSE_THRESHOLD,
)
from mlp import Mlp, SgdConfig
from radio_sim import CellKpis
from tilt_env import CellState, TiltAction, TiltEnvironment, Transition
from utils import ConfigError, ContractError, validate_probability_vector

logger = logging.getLogger(__name__)

DECISION_LOG_COLUMNS = [
    'episode', 'step', 'cell', 'source_id', 'action', 'k', 'p', 'i',
    'predicted_cov', 'predicted_cap', 'predicted_qual',
]


@dataclass(frozen=True)
class Proposal:
    source_id: str
    action: TiltAction


@dataclass(frozen=True)
class PredictorDiagnostics:
    predictions: Dict[int, Tuple[float, float, float]]  # action delta -> predicted KPIs
    chosen: Tuple[float, float, float]


@dataclass(frozen=True)
class KShieldDiagnostics:
    k: float
    p: int
    i: Optional[int]


@dataclass(frozen=True)
class PassthroughDiagnostics:
    n_proposals: int = 1


Diagnostics = Union[PredictorDiagnostics, KShieldDiagnostics, PassthroughDiagnostics]


@dataclass(frozen=True)
class ShieldDecision:
    executed: TiltAction
    source_id: str
    diagnostics: Diagnostics


# ---- State predictor ----

class StatePredictor:
    """Multi-target regressor (cov, cap, qual, action delta) -> (cov', cap', qual')."""

    def __init__(self, net: Mlp, holdout_rmse: Optional[Sequence[float]] = None):
        if net.layer_dims[0] != 4 or net.layer_dims[-1] != 3:
            raise ContractError(f"state predictor needs a 4->3 network, got {net.layer_dims}")
        self.net = net
        self.holdout_rmse = None if holdout_rmse is None else tuple(float(v) for v in holdout_rmse)

    def within_threshold(self, threshold: float = PREDICTOR_RMSE_THRESHOLD) -> bool:
        return self.holdout_rmse is not None and max(self.holdout_rmse) <= threshold

    def predict(self, kpis: CellKpis, action: TiltAction) -> CellKpis:
        raw = self.net.forward(np.array([kpis.cov, kpis.cap, kpis.qual, action.delta], dtype=float))
        return CellKpis(*(float(v) for v in np.clip(raw, 0.0, 1.0)))

    def save(self, path) -> None:
        self.net.save(path)

    @classmethod
    def load(cls, path) -> 'StatePredictor':
        return cls(Mlp.load(path))


def predictor_examples(transitions: Sequence[Transition]) -> List[Tuple[CellKpis, TiltAction, CellKpis]]:
    return [(t.state.kpis, t.action, t.next_state.kpis) for t in transitions]


def predictor_train(dataset: Sequence[Tuple[CellKpis, TiltAction, CellKpis]], seed: int,
                    epochs: int = PREDICTOR_EPOCHS,
                    batch_size: int = PREDICTOR_BATCH_SIZE,
                    learning_rate: float = PREDICTOR_LEARNING_RATE,
                    holdout_fraction: float = PREDICTOR_HOLDOUT_FRACTION,
                    hidden: Sequence[int] = PREDICTOR_HIDDEN) -> StatePredictor:
    """Fit the next-KPI regressor by MSE and report held-out RMSE per KPI.

    Args:
        dataset: (kpis, action, next_kpis) examples, e.g. from predictor_examples
        seed: Seeds the holdout split, the initial weights and the batch order
        holdout_fraction: Share of examples kept out of training for the RMSE report
        hidden: Hidden layer widths; empty for a linear regressor

    Returns:
        StatePredictor with ``holdout_rmse`` as (cov, cap, qual)
    """
    if not dataset:
        raise ContractError("state predictor needs a non-empty dataset")

    inputs = np.array([[*k.as_tuple(), a.delta] for k, a, _ in dataset], dtype=float)
    outputs = np.array([n.as_tuple() for _, _, n in dataset], dtype=float)
    if len(dataset) >= 5 and holdout_fraction > 0:
        x_train, x_test, y_train, y_test = train_test_split(
            inputs, outputs, test_size=holdout_fraction, random_state=seed
        )
    else:
        x_train, x_test, y_train, y_test = inputs, inputs, outputs, outputs

    rng = np.random.default_rng(seed)
    net = Mlp.initialize([4, *hidden, 3], rng.integers(2 ** 32))
    sgd = SgdConfig(learning_rate, batch_size)
    full_mask = np.ones(3)

    for epoch in range(epochs):
        order = rng.permutation(len(x_train))
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            net.sgd_step([(x_train[j], y_train[j], full_mask) for j in idx], sgd)

    predicted = np.clip(net.forward(x_test), 0.0, 1.0)
    rmse = np.sqrt(np.mean((predicted - y_test) ** 2, axis=0))
    logger.info(f"Trained state predictor on {len(x_train)} samples; held-out RMSE "
                f"cov {rmse[0]:.4f} cap {rmse[1]:.4f} qual {rmse[2]:.4f}")
    if np.any(rmse > PREDICTOR_RMSE_THRESHOLD):
        logger.warning(f"State predictor held-out RMSE above {PREDICTOR_RMSE_THRESHOLD} for at least one KPI")
    return StatePredictor(net, holdout_rmse=rmse)


def predicted_score(kpis: CellKpis) -> float:
    return kpis.cov ** 2 + kpis.cap ** 2 + kpis.qual ** 2


def predictor_decide(predictor: StatePredictor, state: CellState,
                     proposals: Sequence[Proposal]) -> ShieldDecision:
    """Proposals must come in registration order; the first best-scoring one wins."""
    if not proposals:
        raise ContractError("predictor logic needs at least one proposal")

    predictions: Dict[int, CellKpis] = {}
    for proposal in proposals:
        delta = proposal.action.delta
        if delta not in predictions:
            predictions[delta] = predictor.predict(state.kpis, proposal.action)

    best = min(range(len(proposals)),
               key=lambda j: (predicted_score(predictions[proposals[j].action.delta]), j))
    chosen = proposals[best]
    diagnostics = PredictorDiagnostics(
        predictions={d: k.as_tuple() for d, k in predictions.items()},
        chosen=predictions[chosen.action.delta].as_tuple(),
    )
    return ShieldDecision(chosen.action, chosen.source_id, diagnostics)


# ---- k-shield ----

@dataclass
class KShieldState:
    k: float = K_INITIAL
    d: float = K_DIMINISH
    w: int = K_WINDOW
    b: Tuple[float, ...] = (1.0,)
    episode_rewards: deque = field(default=None)
    completed_episodes: int = 0

    def __post_init__(self):
        if not 0.0 <= self.k <= 1.0:
            raise ConfigError('k', f'must lie in [0, 1], got {self.k}')
        if not 0.0 < self.d < 1.0:
            raise ConfigError('d', f'must lie in (0, 1), got {self.d}')
        if self.w < 1:
            raise ConfigError('w', f'must be >= 1, got {self.w}')
        validate_probability_vector('b', self.b)
        self.b = tuple(float(v) for v in self.b)
        history = list(self.episode_rewards or [])
        self.episode_rewards = deque(history, maxlen=2 * self.w)


def kshield_decide(state: KShieldState, agent_proposal: Proposal,
                   baseline_proposals: Sequence[Proposal], rng: np.random.Generator) -> ShieldDecision:
    if len(baseline_proposals) != len(state.b):
        raise ContractError(f"got {len(baseline_proposals)} baseline proposals for {len(state.b)} weights")
    p = int(rng.random() < state.k)
    if p:
        i = int(rng.choice(len(state.b), p=state.b))
        chosen = baseline_proposals[i]
        return ShieldDecision(chosen.action, chosen.source_id, KShieldDiagnostics(state.k, p, i))
    return ShieldDecision(agent_proposal.action, agent_proposal.source_id,
                          KShieldDiagnostics(state.k, p, None))


def kshield_update(state: KShieldState, completed_episode_mean_reward: float) -> float:
    """Record one completed episode and diminish k when the agent has stopped getting worse.

    Every w-th episode, once 2w episodes of history exist, k <- max(0, k - d) if the
    latest w-episode mean reward is at least the mean of the w episodes before.

    Args:
        state: Mutated in place (history, episode count and k)
        completed_episode_mean_reward: Mean per-step reward of the episode just finished

    Returns:
        k after the update

    Raises:
        ContractError: the reward is NaN or infinite
    """
    if not np.isfinite(completed_episode_mean_reward):
        raise ContractError(f"episode reward must be finite, got {completed_episode_mean_reward}")
    state.episode_rewards.append(float(completed_episode_mean_reward))
    state.completed_episodes += 1

    if state.completed_episodes % state.w or len(state.episode_rewards) < 2 * state.w:
        return state.k
    history = list(state.episode_rewards)
    older = float(np.mean(history[:state.w]))
    recent = float(np.mean(history[state.w:]))
    if recent >= older:
        state.k = max(0.0, state.k - state.d)
        logger.info(f"k-shield: recent mean {recent:.4f} >= older {older:.4f}, k -> {state.k:.3f}")
    return state.k


# ---- Logics ----

class ShieldLogic(ABC):
    @abstractmethod
    def decide(self, state: CellState, baseline_proposals: Sequence[Proposal],
               agent_proposals: Sequence[Proposal], rng: np.random.Generator) -> ShieldDecision:
        ...

    def end_episode(self, mean_reward: float) -> None:
        pass

    @property
    def k(self) -> Optional[float]:
        return None


class PredictorShieldLogic(ShieldLogic):
    def __init__(self, predictor: StatePredictor):
        self.predictor = predictor

    def decide(self, state, baseline_proposals, agent_proposals, rng):
        return predictor_decide(self.predictor, state, [*baseline_proposals, *agent_proposals])


class KShieldLogic(ShieldLogic):
    def __init__(self, state: KShieldState):
        self.state = state

    @property
    def k(self) -> float:
        return self.state.k

    def decide(self, state, baseline_proposals, agent_proposals, rng):
        if len(agent_proposals) != 1:
            raise ContractError(f"k-shield mixes exactly one agent, got {len(agent_proposals)}")
        return kshield_decide(self.state, agent_proposals[0], baseline_proposals, rng)

    def end_episode(self, mean_reward: float) -> None:
        kshield_update(self.state, mean_reward)


# ---- Shield ----

@dataclass(frozen=True)
class DecisionRecord:
    episode: int
    step: int
    cell: int
    decision: ShieldDecision
    role: str

    def to_row(self) -> Dict[str, object]:
        diag = self.decision.diagnostics
        row = {c: None for c in DECISION_LOG_COLUMNS}
        row.update(episode=self.episode, step=self.step, cell=self.cell,
                   source_id=self.decision.source_id, action=self.decision.executed.delta)
        if isinstance(diag, KShieldDiagnostics):
            row.update(k=diag.k, p=diag.p, i=diag.i)
        elif isinstance(diag, PredictorDiagnostics):
            row.update(predicted_cov=diag.chosen[0], predicted_cap=diag.chosen[1],
                       predicted_qual=diag.chosen[2])
        return row


class SafetyShield:
    """Owns the environment; proposers only see states and executed transitions."""

    def __init__(self, env: TiltEnvironment, logic: Optional[ShieldLogic] = None, seed: int = 0):
        self._env = env
        self.logic = logic
        self.seed = int(seed)
        self.proposers: List[Proposer] = []
        self.subscribers: List[Callable[[List[Transition], List[ShieldDecision]], None]] = []
        self.decision_log: List[DecisionRecord] = []

    # registration keeps baselines ahead of agents so ties prefer the safe source
    def register(self, proposer: Proposer) -> None:
        if any(p.source_id == proposer.source_id for p in self.proposers):
            raise ContractError(f"proposer {proposer.source_id!r} already registered")
        self.proposers.append(proposer)
        self.proposers.sort(key=lambda p: 0 if p.role == BASELINE else 1)
        logger.debug(f"Registered {proposer.role} {proposer.source_id}")

    def add_subscriber(self, callback) -> None:
        self.subscribers.append(callback)

    def _roles(self) -> Dict[str, str]:
        return {p.source_id: p.role for p in self.proposers}

    @property
    def n_cells(self) -> int:
        return self._env.n_cells

    @property
    def k(self) -> Optional[float]:
        return self.logic.k if self.logic is not None else None

    def reset(self, seed_material=None) -> List[CellState]:
        return self._env.reset(seed_material)

    def states(self) -> List[CellState]:
        return self._env.states()

    def start_episode(self, episode: int) -> None:
        for proposer in self.proposers:
            proposer.start_episode(episode)

    def end_episode(self, mean_reward: float) -> None:
        if self.logic is not None:
            self.logic.end_episode(mean_reward)

    def collect_proposals(self, states: Sequence[CellState], explore: bool = True) -> List[List[Proposal]]:
        return [
            [Proposal(p.source_id, p.propose(state, explore)) for p in self.proposers]
            for state in states
        ]

    def _decide_cell(self, cell: int, state: CellState, proposals: Sequence[Proposal]) -> ShieldDecision:
        roles = self._roles()
        seen = [p.source_id for p in proposals]
        unknown = set(seen) - set(roles)
        if unknown:
            raise ContractError(f"cell {cell}: proposals from unregistered proposers {sorted(unknown)}")
        missing = [s for s in roles if s not in seen]
        if missing or len(seen) != len(set(seen)):
            raise ContractError(f"cell {cell}: expected one proposal from each of {list(roles)}, got {seen}")

        order = {source: idx for idx, source in enumerate(roles)}
        ordered = sorted(proposals, key=lambda p: order[p.source_id])

        if self.logic is None:
            if len(ordered) != 1:
                raise ContractError(f"a shield without logic needs exactly one proposer, got {len(ordered)}")
            return ShieldDecision(ordered[0].action, ordered[0].source_id, PassthroughDiagnostics())

        baseline_proposals = [p for p in ordered if roles[p.source_id] == BASELINE]
        agent_proposals = [p for p in ordered if roles[p.source_id] == AGENT]
        rng = np.random.default_rng([self.seed, self._env.episode, self._env.step_count, cell])
        return self.logic.decide(state, baseline_proposals, agent_proposals, rng)

    def run_step(self, states: Sequence[CellState], proposals: Sequence[Sequence[Proposal]],
                 learn: bool = True) -> Tuple[List[ShieldDecision], List[Transition]]:
        if len(states) != self.n_cells or len(proposals) != self.n_cells:
            raise ContractError(f"expected states and proposals for {self.n_cells} cells, "
                                f"got {len(states)} and {len(proposals)}")
        if self._env.episode < 0:
            raise ContractError("environment has not been reset")
        episode, step = self._env.episode, self._env.step_count
        decisions = [self._decide_cell(c, s, p) for c, (s, p) in enumerate(zip(states, proposals))]

        _, _, transitions = self._env.step([d.executed for d in decisions])

        roles = self._roles()
        self.decision_log.extend(
            DecisionRecord(episode, step, cell, d, roles[d.source_id]) for cell, d in enumerate(decisions)
        )
        if learn:
            for proposer in self.proposers:
                for transition in transitions:
                    proposer.observe(transition)
        for subscriber in self.subscribers:
            subscriber(transitions, decisions)
        return decisions, transitions

    def step(self, explore: bool = True, learn: bool = True) -> Tuple[List[ShieldDecision], List[Transition]]:
        """Collect proposals for the current states and run one mediated step."""
        states = self.states()
        return self.run_step(states, self.collect_proposals(states, explore), learn=learn)

    def decision_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.to_row() for r in self.decision_log], columns=DECISION_LOG_COLUMNS, dtype=object)

    def write_decision_log(self, path) -> None:
        frame = self.decision_frame()
        frame.to_csv(path, index=False)
        logger.info(f"Wrote {len(frame)} shield decisions to {path}")


def shield_run_step(shield: SafetyShield, states: Sequence[CellState],
                    proposals: Sequence[Sequence[Proposal]]) -> Tuple[List[ShieldDecision], List[Transition]]:
    return shield.run_step(states, proposals)
