"""One agent, one day: the activation loop tying the modules together.

At each activation ``t(u)`` the agent observes (inventory sign, imbalance
sign, spread bucket), picks an action, re-anchors its orders, the clock moves
(sequentially or by time travel), fills and rewards accumulate over the events
up to the next activation, and the Q-table is updated with that reward.

Liquidation penalties: the voluntary one (action LIQUIDATE) is charged to the
interval that follows the action; the forced one (|J| >= max at an activation)
is charged to the interval that produced the inventory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from numba import njit, types
from numba.typed import Dict

from .effective_events import reconcile_nb
from .lob_core import EventLog
from .mm_execution import process_interval_nb
from .q_agent import ExplorationSchedule, QTable, greedy_nb, new_qtable, select_action_nb
from .time_travel import (JUMP, SEQUENTIAL, JumpConfig, JumpIndex, Latency, advance_nb, next_activation_nb,
                          select_candidate_nb, window_covers_nb)

N_STATS = 6
STAT_NAMES = ("activations", "covered", "nonempty", "covered_nonempty", "jumps", "fallbacks")


@dataclass(frozen=True)
class AgentConfig:
    order_size: int = 100
    max_inventory: int = 1000
    spread_cap: int = 5
    beta: float = 0.001
    gamma: float = 0.97
    epsilon: float = 0.2
    epsilon_decay: float = 0.9999
    init_scale: float = 0.01


@dataclass
class Agent:
    q: QTable
    schedule: ExplorationSchedule = field(default_factory=ExplorationSchedule)

    @classmethod
    def fresh(cls, rng: np.random.Generator, cfg: AgentConfig = AgentConfig()) -> "Agent":
        q = new_qtable(rng, cfg.spread_cap, cfg.beta, cfg.gamma, cfg.init_scale)
        return cls(q, ExplorationSchedule(cfg.epsilon, cfg.epsilon_decay))

    def copy(self) -> "Agent":
        return Agent(self.q.copy(), self.schedule)


class EpisodeResult(NamedTuple):
    rewards: np.ndarray  # one reward per completed update, half-tick x share units
    stats: dict
    epsilon: float

    @property
    def consistency(self) -> float:
        """Fraction of activations whose continuation contains the agent's events."""
        n = self.stats["activations"]
        return self.stats["covered"] / n if n else float("nan")


@njit(cache=True)
def _sign(x):
    return (x > 0) - (x < 0)


@njit(cache=True)
def run_episode_nb(states, ev_side, ev_size, ev_price, ev_kind, sigs, timestamps,
                   masks, order, offsets, memo, n_keys,
                   q, epsilon, decay_factor, beta, gamma, spread_cap,
                   order_size, max_inv, mode, lat_mode, lat_value,
                   t_next, radius, allow_past, n_shells,
                   t_start, budget, fixed_action, learn, rng, rewards, stats):
    n_events = ev_side.shape[0]
    no_fills = np.zeros((0, 7), dtype=np.int64)
    t = t_start
    J = 0
    bp = 0
    bv = 0
    sp = 0
    sv = 0
    i0 = 1
    i1 = _sign(states[t, 1] - states[t, 5]) + 1
    i2 = min(states[t, 4] - states[t, 0], spread_cap) - 1
    if fixed_action >= 0:
        a = fixed_action
    else:
        a = select_action_nb(q[i0, i1, i2], epsilon, rng)
    n_upd = 0
    while n_upd < budget:
        b1 = states[t, 0]
        c1 = states[t, 4]
        liq = 0
        if a == 4:
            liq -= abs(J) * (c1 - b1)
            J = 0
        bp, bv, sp, sv, req = reconcile_nb(a, bp, bv, sp, sv, b1, states[t, 2], c1, states[t, 6], order_size)

        stats[0] += 1
        target = -1
        if req != 0:
            stats[2] += 1
        if mode == 0:
            landing = t
            if window_covers_nb(sigs, t, req, t_next):
                stats[1] += 1
                if req != 0:
                    stats[3] += 1
        else:
            if t < n_events and (req == 0 or (masks[t] & req) == req):
                target = t
            else:
                target = select_candidate_nb(order, offsets, masks, memo, n_keys,
                                             _sign(states[t, 1] - states[t, 5]), c1 - b1, req,
                                             t, radius, allow_past, n_shells, rng)
            if target >= 0:
                landing = advance_nb(sigs, target, req, min(n_events, target + t_next + 1))
                stats[1] += 1
                if req != 0:
                    stats[3] += 1
                if target != t:
                    stats[4] += 1
                    # keep the orders at the same distance from the best quotes
                    bp += states[target, 0] - b1
                    sp += states[target, 4] - c1
            else:
                stats[5] += 1
                k = 0
                m = req
                while m:
                    k += m & 1
                    m >>= 1
                landing = t + k
        if mode == 0:
            if landing >= n_events:
                break
            nxt = next_activation_nb(timestamps, landing, lat_mode, lat_value)
            if nxt > n_events:
                break
        else:
            if target < 0 and landing >= n_events:
                break
            # a continuation cut by the day end is followed by a forced jump
            nxt = n_events
            if landing < n_events:
                nxt = min(next_activation_nb(timestamps, landing, lat_mode, lat_value), n_events)
        bp, bv, sp, sv, J, ip, ep, _ = process_interval_nb(states, ev_side, ev_size, ev_price, ev_kind,
                                                           landing, nxt, bp, bv, sp, sv, J, no_fills)
        t = nxt
        if abs(J) >= max_inv:
            liq -= abs(J) * (states[t, 4] - states[t, 0])
            J = 0
        r = ip + ep + liq
        rewards[n_upd] = r

        j0 = _sign(J) + 1
        j1 = _sign(states[t, 1] - states[t, 5]) + 1
        j2 = min(states[t, 4] - states[t, 0], spread_cap) - 1
        if learn:
            best = q[j0, j1, j2, greedy_nb(q[j0, j1, j2])]
            q[i0, i1, i2, a] += beta * (r + gamma * best - q[i0, i1, i2, a])
        epsilon *= decay_factor
        n_upd += 1
        i0 = j0
        i1 = j1
        i2 = j2
        if fixed_action >= 0:
            a = fixed_action
        else:
            a = select_action_nb(q[i0, i1, i2], epsilon, rng)
    return n_upd, epsilon


_EMPTY_I32 = np.zeros(0, dtype=np.int32)
_EMPTY_I64 = np.zeros(0, dtype=np.int64)
_ZERO_OFFSETS = np.zeros(1, dtype=np.int64)
_EMPTY_MEMO = None


def _empty_memo():
    global _EMPTY_MEMO
    if _EMPTY_MEMO is None:
        _EMPTY_MEMO = Dict.empty(key_type=types.int64, value_type=types.int64[:])
    return _EMPTY_MEMO


def sequential_activations(log: EventLog, latency: Latency, t_start: int = 0) -> int:
    """Number of updates a sequential pass over the day performs."""
    ts = log.columns.timestamp_us
    n = len(log)
    if latency.mode == 0:
        return max(0, (n - t_start) // latency.value)
    count, t = 0, t_start
    while True:
        nxt = int(next_activation_nb(ts, t, latency.mode, latency.value))
        if nxt > n:
            return count
        count += 1
        t = nxt


def run_episode(log: EventLog, index: Optional[JumpIndex], agent: Agent, mode: int, rng: np.random.Generator,
                budget: int, agent_cfg: AgentConfig = AgentConfig(), jump_cfg: JumpConfig = JumpConfig(),
                latency: Latency = Latency(), t_start: int = 0, fixed_action: Optional[int] = None,
                learn: bool = True) -> EpisodeResult:
    """Run up to ``budget`` updates (fewer if the day ends), mutating ``agent``.

    With ``learn=False`` the Q-table is frozen and exploration is switched off.
    Sequential mode never reads ``index``.
    """
    if agent.q.values.shape[:3] != (3, 3, agent_cfg.spread_cap):
        raise ValueError("Q-table shape does not match the agent configuration")
    if mode == JUMP:
        if index is None:
            raise ValueError("jump dynamics need a JumpIndex")
        if index.t_next != jump_cfg.t_next or index.n_events != len(log):
            raise ValueError("index was built for another day or window length")
        masks, order, offsets, memo, n_keys = (index.occurrence_masks, index.bucket_order, index.bucket_offsets,
                                               index.memo, index.n_spread_keys)
        n_shells = jump_cfg.n_spread_shells(log.tick_size)
    elif mode == SEQUENTIAL:
        masks, order, offsets, memo, n_keys, n_shells = _EMPTY_I32, _EMPTY_I64, _ZERO_OFFSETS, _empty_memo(), 0, 1
        budget = min(budget, sequential_activations(log, latency, t_start))
    else:
        raise ValueError(f"unknown dynamics {mode}")
    c = log.columns
    rewards = np.zeros(max(budget, 0), dtype=np.float64)
    stats = np.zeros(N_STATS, dtype=np.int64)
    epsilon = agent.schedule.epsilon if learn else 0.0
    n_upd, eps = run_episode_nb(
        log.states, c.side, c.signed_size, c.price, c.kind, log.signatures, c.timestamp_us,
        masks, order, offsets, memo, n_keys,
        agent.q.values, epsilon, agent.schedule.decay_factor, agent.q.beta, agent.q.gamma, agent_cfg.spread_cap,
        agent_cfg.order_size, agent_cfg.max_inventory, mode, latency.mode, latency.value,
        jump_cfg.t_next, jump_cfg.exclusion_radius, jump_cfg.allow_past_jumps, n_shells,
        t_start, budget, -1 if fixed_action is None else int(fixed_action), learn, rng, rewards, stats)
    if learn:
        agent.schedule = ExplorationSchedule(eps, agent.schedule.decay_factor)
    return EpisodeResult(rewards[:n_upd], dict(zip(STAT_NAMES, stats.tolist())), eps)
