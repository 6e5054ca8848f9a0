#!/usr/bin/env python3
"""Proposers and the two learning agents (DQN and one-step actor-critic).

Agents never hold the environment: they propose actions for a cell state and learn
from the transitions the shield feeds back, which always carry the executed action.
"""

import logging
from abc import ABC, abstractmethod
from collections import deque
from typing import List, Optional, Sequence

import numpy as np

from config import (
    AC_DISCOUNT,
    AC_HIDDEN,
    AC_LEARNING_RATE,
    DQN_BATCH_SIZE,
    DQN_DISCOUNT,
    DQN_HIDDEN,
    DQN_LEARNING_RATE,
    EPSILON_DECAY_EPISODES,
    EPSILON_END,
    EPSILON_START,
    REPLAY_CAPACITY,
)
from mlp import Mlp, SgdConfig
from tilt_env import ACTION_DELTAS, CellState, TiltAction, Transition
from utils import ConfigError, ContractError, validate_positive

logger = logging.getLogger(__name__)

STATE_DIM = 4
N_ACTIONS = len(ACTION_DELTAS)

AGENT = 'agent'
BASELINE = 'baseline'


class Proposer(ABC):
    """Anything that proposes tilt actions to the shield."""

    role = AGENT

    def __init__(self, source_id: str):
        self.source_id = source_id

    @abstractmethod
    def propose(self, state: CellState, explore: bool = True) -> TiltAction:
        ...

    def observe(self, transition: Transition) -> None:
        """Feedback about an executed transition; ignored unless the proposer learns."""

    def start_episode(self, episode: int) -> None:
        pass

    def __repr__(self):
        return f"{type(self).__name__}({self.source_id!r})"


def greedy_index(values: np.ndarray) -> int:
    """argmax with ties going to the smallest delta (first index)."""
    return int(np.argmax(values))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = np.asarray(logits, dtype=float) - np.max(logits)
    exp = np.exp(shifted)
    return exp / exp.sum()


class DqnAgent(Proposer):
    """Q-network agent with uniform experience replay and a linear epsilon schedule.

    With discount 0 the learning target is the immediate reward and Q(s', .) is never
    evaluated, so no target network is kept.
    """

    def __init__(self, source_id: str = 'dqn', seed=0,
                 hidden: Sequence[int] = DQN_HIDDEN,
                 learning_rate: float = DQN_LEARNING_RATE,
                 batch_size: int = DQN_BATCH_SIZE,
                 discount: float = DQN_DISCOUNT,
                 replay_capacity: int = REPLAY_CAPACITY,
                 epsilon_start: float = EPSILON_START,
                 epsilon_end: float = EPSILON_END,
                 epsilon_decay_episodes: int = EPSILON_DECAY_EPISODES,
                 q_net: Optional[Mlp] = None):
        super().__init__(source_id)
        if not 0.0 <= discount < 1.0:
            raise ConfigError('discount', 'must lie in [0, 1)')
        for name, value in (('epsilon_start', epsilon_start), ('epsilon_end', epsilon_end)):
            if not 0.0 <= value <= 1.0:
                raise ConfigError(name, 'must lie in [0, 1]')
        validate_positive('learning_rate', learning_rate)
        if replay_capacity < batch_size:
            raise ConfigError('replay_capacity', 'must be at least the batch size')

        self.rng = np.random.default_rng(seed)
        self.q_net = q_net or Mlp.initialize([STATE_DIM, *hidden, N_ACTIONS], self.rng.integers(2 ** 32))
        self.sgd = SgdConfig(learning_rate, batch_size)
        self.discount = discount
        self.replay = deque(maxlen=replay_capacity)
        self.epsilon_start = epsilon_start
        self.epsilon_end = epsilon_end
        self.epsilon_decay_episodes = epsilon_decay_episodes
        self.epsilon = epsilon_start
        self.updates = 0
        self.last_loss: Optional[float] = None

    def start_episode(self, episode: int) -> None:
        if self.epsilon_decay_episodes <= 0:
            self.epsilon = self.epsilon_end
            return
        fraction = min(1.0, episode / self.epsilon_decay_episodes)
        self.epsilon = self.epsilon_start + fraction * (self.epsilon_end - self.epsilon_start)

    def q_values(self, state: CellState) -> np.ndarray:
        return self.q_net.forward(state.as_array())

    def propose(self, state: CellState, explore: bool = True) -> TiltAction:
        if explore and self.rng.random() < self.epsilon:
            return TiltAction.from_index(self.rng.integers(N_ACTIONS))
        return TiltAction.from_index(greedy_index(self.q_values(state)))

    def _targets(self, sampled) -> np.ndarray:
        rewards = np.array([t.reward for t in sampled])
        if self.discount == 0.0:
            return rewards
        next_q = self.q_net.forward(np.array([t.next_state.as_array() for t in sampled]))
        return rewards + self.discount * next_q.max(axis=1)

    def sample_replay(self) -> List[Transition]:
        """Uniform batch from the replay, without replacement."""
        picks = self.rng.choice(len(self.replay), size=self.sgd.batch_size, replace=False)
        return [self.replay[i] for i in picks]

    def observe(self, transition: Transition) -> None:
        self.replay.append(transition)
        if len(self.replay) < self.sgd.batch_size:
            return

        sampled = self.sample_replay()
        targets = self._targets(sampled)

        batch = []
        for t, y in zip(sampled, targets):
            mask = np.zeros(N_ACTIONS)
            mask[t.action.index] = 1.0
            target = np.zeros(N_ACTIONS)
            target[t.action.index] = y
            batch.append((t.state.as_array(), target, mask))
        self.last_loss = self.q_net.sgd_step(batch, self.sgd)
        self.updates += 1
        if self.updates % 1000 == 0:
            logger.debug(f"{self.source_id}: {self.updates} updates, loss {self.last_loss:.5f}, "
                         f"epsilon {self.epsilon:.3f}")

    def save(self, path) -> None:
        self.q_net.save(path)

    @classmethod
    def load(cls, path, source_id: str = 'dqn', seed=0, **kwargs) -> 'DqnAgent':
        return cls(source_id=source_id, seed=seed, q_net=Mlp.load(path), **kwargs)


class AcAgent(Proposer):
    """One-step advantage actor-critic with a softmax policy head.

    Advantage is ``r + gamma V(s') - V(s)``, i.e. ``r - V(s)`` at discount 0.
    The actor update is the policy gradient of ``-A log pi(a|s)`` pushed through a
    full-mask regression step: for logits z and probabilities pi, the target
    ``z + (n/2) A (e_a - pi)`` gives an MSE gradient of exactly ``-A (e_a - pi)``.
    """

    def __init__(self, source_id: str = 'ac', seed=0,
                 hidden: Sequence[int] = AC_HIDDEN,
                 learning_rate: float = AC_LEARNING_RATE,
                 discount: float = AC_DISCOUNT,
                 actor_net: Optional[Mlp] = None,
                 critic_net: Optional[Mlp] = None):
        super().__init__(source_id)
        validate_positive('learning_rate', learning_rate)
        if not 0.0 <= discount < 1.0:
            raise ConfigError('discount', 'must lie in [0, 1)')
        self.rng = np.random.default_rng(seed)
        self.actor_net = actor_net or Mlp.initialize([STATE_DIM, *hidden, N_ACTIONS], self.rng.integers(2 ** 32))
        self.critic_net = critic_net or Mlp.initialize([STATE_DIM, *hidden, 1], self.rng.integers(2 ** 32))
        self.sgd = SgdConfig(learning_rate, 1)
        self.discount = discount
        self.learning_rate = learning_rate

    def policy(self, state: CellState) -> np.ndarray:
        return softmax(self.actor_net.forward(state.as_array()))

    def value(self, state: CellState) -> float:
        return float(self.critic_net.forward(state.as_array())[0])

    def propose(self, state: CellState, explore: bool = True) -> TiltAction:
        probs = self.policy(state)
        if explore:
            return TiltAction.from_index(self.rng.choice(N_ACTIONS, p=probs))
        return TiltAction.from_index(greedy_index(probs))

    def observe(self, transition: Transition) -> None:
        s = transition.state.as_array()
        value = self.value(transition.state)
        target = transition.reward
        if self.discount:
            target += self.discount * self.value(transition.next_state)
        advantage = target - value

        self.critic_net.sgd_step([(s, np.array([target]), np.ones(1))], self.sgd)

        logits = self.actor_net.forward(s)
        probs = softmax(logits)
        chosen = np.zeros(N_ACTIONS)
        chosen[transition.action.index] = 1.0
        actor_target = logits + (N_ACTIONS / 2.0) * advantage * (chosen - probs)
        self.actor_net.sgd_step([(s, actor_target, np.ones(N_ACTIONS))], self.sgd)

    def save(self, path) -> None:
        self.actor_net.save(f"{path}.actor.mlp")
        self.critic_net.save(f"{path}.critic.mlp")

    @classmethod
    def load(cls, path, source_id: str = 'ac', seed=0, **kwargs) -> 'AcAgent':
        return cls(source_id=source_id, seed=seed,
                   actor_net=Mlp.load(f"{path}.actor.mlp"),
                   critic_net=Mlp.load(f"{path}.critic.mlp"), **kwargs)


def propose(agent: Proposer, state: CellState, explore: bool = True) -> TiltAction:
    return agent.propose(state, explore)


def observe(agent: Proposer, transition: Transition) -> None:
    agent.observe(transition)


def make_agent(kind: str, seed, **kwargs) -> Proposer:
    if kind == 'dqn':
        return DqnAgent(seed=seed, **kwargs)
    if kind == 'ac':
        return AcAgent(seed=seed, **kwargs)
    raise ContractError(f"unknown agent kind {kind!r}")
