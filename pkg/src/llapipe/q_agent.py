"""Tabular Q-learning over the operator graph.

The agent's state is the last executed operator (or the episode-start
sentinel); an action is the next operator or termination. The table is
27 x 27: states are the 26 operators plus START, actions are the 26
operators plus TERMINATE.

Canonical action order: operator ids 0..24, then -1 (blank), then TERMINATE.
Greedy ties break toward the lowest index in that order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .operators import BLANK_ID, BY_ID, operator_name

N_OPERATORS = 26
N_STATES = N_OPERATORS + 1  # + START
N_ACTIONS = N_OPERATORS + 1  # + TERMINATE

START_STATE_INDEX = N_OPERATORS
TERMINATE_INDEX = N_OPERATORS

ACTION_ORDER: tuple[int, ...] = tuple(range(25)) + (BLANK_ID,)
ACTION_INDEX = {op: i for i, op in enumerate(ACTION_ORDER)}


def action_index(op_id: int) -> int:
    """Index of an operator action in canonical order."""
    return ACTION_INDEX[op_id]


def index_to_op(index: int) -> int | None:
    """Operator id for an action index; None for TERMINATE."""
    if index == TERMINATE_INDEX:
        return None
    return ACTION_ORDER[index]


@dataclass(frozen=True)
class AgentState:
    """last_op None means the episode has not executed an operator yet."""

    last_op: int | None = None

    def index(self) -> int:
        if self.last_op is None:
            return START_STATE_INDEX
        return ACTION_INDEX[self.last_op]


@dataclass(frozen=True)
class QLearningConfig:
    learning_rate: float = 1.0
    discount: float = 0.9
    epsilon_start: float = 1.0
    epsilon_end: float = 0.1
    epsilon_decay: float = 0.99

    def __post_init__(self):
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must be in [0, 1)")
        if not 0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0:
            raise ValueError("need 0 <= epsilon_end <= epsilon_start <= 1")


class QLearningAgent:
    """Owner of the action-value table plus the policy operations on it."""

    def __init__(self, config: QLearningConfig | None = None):
        self.config = config or QLearningConfig()
        self.q = np.zeros((N_STATES, N_ACTIONS), dtype=np.float64)

    def select_action(
        self, state: AgentState, epsilon: float, rng: np.random.Generator
    ) -> int:
        """Epsilon-greedy action index: uniform over all 27 actions with
        probability epsilon, otherwise argmax with lowest-index ties."""
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError("epsilon must be in [0, 1]")
        if rng.random() < epsilon:
            return int(rng.integers(N_ACTIONS))
        return int(np.argmax(self.q[state.index()]))

    def update(
        self,
        state: AgentState,
        action: int,
        reward: float,
        next_state: AgentState,
        terminal: bool,
    ) -> None:
        """Bellman update; the bootstrap term is zero on terminal steps."""
        alpha = self.config.learning_rate
        gamma = self.config.discount
        bootstrap = 0.0 if terminal else float(self.q[next_state.index()].max())
        s, a = state.index(), action
        self.q[s, a] = (1.0 - alpha) * self.q[s, a] + alpha * (
            reward + gamma * bootstrap
        )

    def policy_distribution(
        self, state: AgentState, temperature: float = 0.1
    ) -> np.ndarray:
        """Max-subtracted softmax over the state's Q row."""
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        row = self.q[state.index()] / temperature
        row = row - row.max()
        e = np.exp(row)
        return e / e.sum()

    def decay_epsilon(self, epsilon: float) -> float:
        return max(self.config.epsilon_end, epsilon * self.config.epsilon_decay)

    # --- table inspection ----------------------------------------------

    def to_csv(self, path: str) -> None:
        state_labels = [operator_name(op) for op in ACTION_ORDER] + ["START"]
        action_labels = [operator_name(op) for op in ACTION_ORDER] + ["TERMINATE"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["state"] + action_labels)
            for i, label in enumerate(state_labels):
                writer.writerow([label] + [repr(float(v)) for v in self.q[i]])

    @classmethod
    def from_csv(cls, path: str, config: QLearningConfig | None = None):
        agent = cls(config)
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if len(header) != N_ACTIONS + 1:
                raise ValueError("Q-table CSV must have 27 action columns")
            rows = list(reader)
        if len(rows) != N_STATES:
            raise ValueError("Q-table CSV must have 27 state rows")
        for i, row in enumerate(rows):
            agent.q[i] = [float(v) for v in row[1:]]
        return agent
