"""Limit-order-book backtesting for tabular Q-learning market makers, with
consistent data time travel."""

__version__ = "0.1.0"

from .effective_events import Action, EffectiveEvent, MMOrders, RestingOrder, reconcile, signature_of
from .episode import Agent, AgentConfig, EpisodeResult, run_episode
from .harness import ExperimentConfig, GainCurve, InsufficientDays, snr_curve, train_test_matrix
from .lob_core import (EventLog, InapplicableEvent, LobEvent, LobState, MarketStateKey, apply_event, imbalance,
                       mid_and_spread, read_log, replay, state_key, validate_log, write_log)
from .mm_execution import Inventory, RewardAccumulator, enforce_liquidation, pro_rata_fill, process_interval
from .q_agent import AgentState, ExplorationSchedule, QTable, decay, q_update, select_action
from .synth_data import ConfigInfeasible, GenConfig, generate_day, summarize
from .time_travel import (JUMP, SEQUENTIAL, DayExhausted, JumpConfig, JumpIndex, Latency, advance_after_jump,
                          build_index, fallback_advance, find_candidates, select_jump, step_dynamics)
