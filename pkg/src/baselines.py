#!/usr/bin/env python3
"""Safe baselines: a stateless rule table and a frozen Q-network trained offline."""

import logging
from typing import Optional, Sequence

import numpy as np

from agents import BASELINE, N_ACTIONS, STATE_DIM, Proposer, greedy_index
from config import (
    DQN_HIDDEN,
    OFFLINE_BATCH_SIZE,
    OFFLINE_EPOCHS,
    OFFLINE_LEARNING_RATE,
    RULE_COV_HIGH,
    RULE_QUAL_HIGH,
)
from mlp import Mlp, SgdConfig
from tilt_env import CellState, TiltAction, Transition
from utils import ConfigError, ContractError

logger = logging.getLogger(__name__)


class RuleBasedPolicy(Proposer):
    """Legacy-style tilt rules.

    Coverage first: cov above ``cov_high`` uptilts (-1) to widen the footprint;
    otherwise qual above ``qual_high`` downtilts (+1) to cut interference; else hold.
    Capacity never triggers a tilt change.
    """

    role = BASELINE

    def __init__(self, source_id: str = 'rule', cov_high: float = RULE_COV_HIGH,
                 qual_high: float = RULE_QUAL_HIGH):
        super().__init__(source_id)
        for name, value in (('cov_high', cov_high), ('qual_high', qual_high)):
            if not 0.0 < value < 1.0:
                raise ConfigError(name, f'must lie in (0, 1), got {value}')
        self.cov_high = cov_high
        self.qual_high = qual_high

    def propose(self, state: CellState, explore: bool = True) -> TiltAction:
        if state.cov > self.cov_high:
            return TiltAction(-1)
        if state.qual > self.qual_high:
            return TiltAction(1)
        return TiltAction(0)


class ModelBasedPolicy(Proposer):
    """Greedy policy over a frozen Q-network (4 inputs, 3 action values)."""

    role = BASELINE

    def __init__(self, q_net: Mlp, source_id: str = 'model'):
        super().__init__(source_id)
        if q_net.layer_dims[0] != STATE_DIM or q_net.layer_dims[-1] != N_ACTIONS:
            raise ContractError(f"model baseline needs a {STATE_DIM}->{N_ACTIONS} network, "
                                f"got {q_net.layer_dims}")
        self.q_net = q_net

    def propose(self, state: CellState, explore: bool = True) -> TiltAction:
        return TiltAction.from_index(greedy_index(self.q_net.forward(state.as_array())))

    def save(self, path) -> None:
        self.q_net.save(path)

    @classmethod
    def load(cls, path, source_id: str = 'model') -> 'ModelBasedPolicy':
        return cls(Mlp.load(path), source_id=source_id)


def rule_propose(policy: RuleBasedPolicy, state: CellState) -> TiltAction:
    return policy.propose(state)


def model_propose(policy: ModelBasedPolicy, state: CellState) -> TiltAction:
    return policy.propose(state)


def train_offline_baseline(dataset: Sequence[Transition], seed,
                           epochs: int = OFFLINE_EPOCHS,
                           batch_size: int = OFFLINE_BATCH_SIZE,
                           learning_rate: float = OFFLINE_LEARNING_RATE,
                           hidden: Sequence[int] = DQN_HIDDEN,
                           source_id: str = 'model') -> ModelBasedPolicy:
    """Fit Q(s, a) -> r by masked regression over logged transitions (discount 0)."""
    if not dataset:
        raise ContractError("offline baseline needs a non-empty dataset")

    rng = np.random.default_rng(seed)
    q_net = Mlp.initialize([STATE_DIM, *hidden, N_ACTIONS], rng.integers(2 ** 32))
    sgd = SgdConfig(learning_rate, batch_size)

    inputs = np.array([t.state.as_array() for t in dataset])
    action_idx = np.array([t.action.index for t in dataset])
    masks = np.zeros((len(dataset), N_ACTIONS))
    masks[np.arange(len(dataset)), action_idx] = 1.0
    targets = masks * np.array([t.reward for t in dataset])[:, None]

    loss: Optional[float] = None
    for epoch in range(epochs):
        order = rng.permutation(len(dataset))
        losses = []
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            losses.append(q_net.sgd_step(list(zip(inputs[idx], targets[idx], masks[idx])), sgd))
        loss = float(np.mean(losses))
        logger.debug(f"offline baseline epoch {epoch + 1}/{epochs}: loss {loss:.5f}")

    logger.info(f"Trained offline baseline on {len(dataset)} transitions, final loss {loss}")
    return ModelBasedPolicy(q_net, source_id=source_id)
