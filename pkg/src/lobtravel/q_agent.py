"""Tabular epsilon-greedy Q-learning."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from numba import njit

from .effective_events import N_ACTIONS

CHECKPOINT_VERSION = 1


class AgentState(NamedTuple):
    inventory_sign: int
    imbalance_sign: int
    spread_bucket: int

    def cell(self) -> tuple[int, int, int]:
        """Q-table coordinates of this state."""
        return self.inventory_sign + 1, self.imbalance_sign + 1, self.spread_bucket - 1


def agent_state(inventory: int, imbalance_sign: int, spread_ticks: int, spread_cap: int = 5) -> AgentState:
    return AgentState(int(np.sign(inventory)), int(imbalance_sign), min(int(spread_ticks), spread_cap))


@dataclass
class QTable:
    values: np.ndarray  # state axes..., action axis last
    beta: float = 0.001
    gamma: float = 0.97

    @property
    def n_actions(self) -> int:
        return self.values.shape[-1]

    def copy(self) -> "QTable":
        return replace(self, values=self.values.copy())


def new_qtable(rng: np.random.Generator, spread_cap: int = 5, beta: float = 0.001, gamma: float = 0.97,
               init_scale: float = 0.01) -> QTable:
    """Market-maker table (inventory sign, imbalance sign, spread bucket, action),
    initialised i.i.d. uniform in [-init_scale, init_scale]."""
    values = rng.uniform(-init_scale, init_scale, size=(3, 3, spread_cap, N_ACTIONS))
    return QTable(values, beta, gamma)


@dataclass(frozen=True)
class ExplorationSchedule:
    epsilon: float = 0.2
    decay_factor: float = 0.9999

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon {self.epsilon} outside [0, 1]")


def decay(sched: ExplorationSchedule) -> ExplorationSchedule:
    return replace(sched, epsilon=sched.epsilon * sched.decay_factor)


def _cell(s) -> tuple:
    return s.cell() if isinstance(s, AgentState) else (s if isinstance(s, tuple) else (s,))


def q_update(q: QTable, s_prev, a_prev: int, r: float, s_now) -> QTable:
    """One-step Q-learning, in place:
    Q(s,a) += beta * (r + gamma * max_a' Q(s',a') - Q(s,a)).  Returns ``q``."""
    i = _cell(s_prev) + (int(a_prev),)
    target = r + q.gamma * q.values[_cell(s_now)].max()
    q.values[i] += q.beta * (target - q.values[i])
    return q


def select_action(q: QTable, s, sched: ExplorationSchedule, rng: np.random.Generator) -> int:
    """Greedy action (lowest index on ties), replaced by a uniformly random
    action with probability epsilon."""
    if rng.random() < sched.epsilon:
        n = q.n_actions
        return min(int(rng.random() * n), n - 1)
    return int(np.argmax(q.values[_cell(s)]))


@njit(cache=True)
def greedy_nb(row):
    best = 0
    for a in range(1, row.shape[0]):
        if row[a] > row[best]:
            best = a
    return best


@njit(cache=True)
def select_action_nb(row, epsilon, rng):
    if rng.random() < epsilon:
        n = row.shape[0]
        return min(int(rng.random() * n), n - 1)
    return greedy_nb(row)


def save_qtable(path, q: QTable, sched: ExplorationSchedule | None = None) -> None:
    sched = sched or ExplorationSchedule()
    np.savez(path, version=CHECKPOINT_VERSION, values=q.values, beta=q.beta, gamma=q.gamma,
             epsilon=sched.epsilon, decay_factor=sched.decay_factor)


def load_qtable(path) -> tuple[QTable, ExplorationSchedule]:
    with np.load(path, allow_pickle=False) as z:
        if int(z["version"]) != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {int(z['version'])}")
        q = QTable(z["values"].copy(), float(z["beta"]), float(z["gamma"]))
        return q, ExplorationSchedule(float(z["epsilon"]), float(z["decay_factor"]))
