"""Zero-intelligence order flow with an imbalance-dependent market-order side.

The generator keeps a deeper book than the two levels it reports, so the
snapshot after a depletion is always well defined.  Levels beyond the
``book_depth`` kept internally are refilled silently behind the last one;
those refills never touch the two visible levels and are not logged.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np

from .lob_core import (ASK, BID, CANCEL, KIND_CODES, LIMIT, SIDE_CODES, TRADE, EventColumns, EventLog,
                       LobState, state_keys)


class ConfigInfeasible(ValueError):
    pass


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    n_events: int = 200_000
    day_id: str = "SYN0"
    tick_size: float = 0.005
    initial_mid_ticks: int = 8000
    # arrival weights, (bid side, ask side); market_* is the side being hit
    limit1_bid: float = 0.20
    limit1_ask: float = 0.20
    limit2_bid: float = 0.08
    limit2_ask: float = 0.08
    inside_bid: float = 0.06
    inside_ask: float = 0.06
    cancel1_bid: float = 0.12
    cancel1_ask: float = 0.12
    cancel2_bid: float = 0.04
    cancel2_ask: float = 0.04
    market_bid: float = 0.04
    market_ask: float = 0.04
    limit_volume_mean: float = 120.0
    cancel_fraction: float = 0.3  # cancel size is geometric with mean cancel_fraction * queue
    market_volume_mean: float = 150.0
    deep_volume_mean: float = 300.0
    book_depth: int = 6
    gap_probability: float = 0.2  # chance that a refilled deep level sits two ticks behind
    imbalance_feedback: float = 0.4
    mean_interarrival_us: float = 150_000.0

    def weights(self) -> np.ndarray:
        return np.array([self.limit1_bid, self.limit1_ask, self.limit2_bid, self.limit2_ask,
                         self.inside_bid, self.inside_ask, self.cancel1_bid, self.cancel1_ask,
                         self.cancel2_bid, self.cancel2_ask, self.market_bid + self.market_ask], dtype=float)

    def check(self) -> None:
        w = self.weights()
        if self.n_events < 1:
            raise ConfigInfeasible("n_events must be >= 1")
        if np.any(w < 0) or self.market_bid < 0 or self.market_ask < 0:
            raise ConfigInfeasible("weights must be non-negative")
        if w.sum() <= 0:
            raise ConfigInfeasible("all weights are zero")
        for side, adds, removes in (
                ("bid", self.limit1_bid + self.limit2_bid + self.inside_bid,
                 self.cancel1_bid + self.cancel2_bid + self.market_bid),
                ("ask", self.limit1_ask + self.limit2_ask + self.inside_ask,
                 self.cancel1_ask + self.cancel2_ask + self.market_ask)):
            if removes > 0 and adds == 0:
                raise ConfigInfeasible(f"{side} side only loses volume and would empty")
        if min(self.limit_volume_mean, self.market_volume_mean, self.deep_volume_mean) < 1:
            raise ConfigInfeasible("volume means must be >= 1")
        if not 0 < self.cancel_fraction <= 1:
            raise ConfigInfeasible("cancel_fraction must be in (0, 1]")
        if self.book_depth < 4:
            raise ConfigInfeasible("book_depth must be >= 4")
        if not 0 <= self.imbalance_feedback <= 1:
            raise ConfigInfeasible("imbalance_feedback must be in [0, 1]")
        if self.initial_mid_ticks - 2 * self.book_depth * 2 <= 0:
            raise ConfigInfeasible("initial price too close to zero")
        if self.tick_size <= 0 or self.mean_interarrival_us < 0:
            raise ConfigInfeasible("tick_size must be > 0 and mean_interarrival_us >= 0")

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))


# event-type codes, in the order of GenConfig.weights()
L1B, L1A, L2B, L2A, INB, INA, C1B, C1A, C2B, C2A, MKT = range(11)


def _geometric(rng, mean, size):
    return rng.geometric(1.0 / mean, size=size).astype(np.int64)


def _geometric_from_uniform(u, mean):
    if mean <= 1.0:
        return 1
    return 1 + int(math.log1p(-u) / math.log1p(-1.0 / mean))


def generate_day(cfg: GenConfig) -> EventLog:
    cfg.check()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_events
    w = cfg.weights()
    cum = np.cumsum(w / w.sum())
    cum[-1] = 1.0
    ask_share = cfg.market_ask / (cfg.market_bid + cfg.market_ask) if cfg.market_bid + cfg.market_ask > 0 else 0.5

    # best-first [price, volume] lists
    mid = cfg.initial_mid_ticks
    deep = _geometric(rng, cfg.deep_volume_mean, 2 * cfg.book_depth)
    bids = [[mid - 1 - i, int(deep[i])] for i in range(cfg.book_depth)]
    asks = [[mid + 1 + i, int(deep[cfg.book_depth + i])] for i in range(cfg.book_depth)]
    initial = LobState(bids[0][0], bids[0][1], bids[1][0], bids[1][1], asks[0][0], asks[0][1], asks[1][0], asks[1][1])

    kinds = np.searchsorted(cum, rng.random(n), side="right").tolist()
    u_side = rng.random(n).tolist()
    u_price = rng.random(n).tolist()
    u_gap = rng.random(n).tolist()
    v_limit = _geometric(rng, cfg.limit_volume_mean, n).tolist()
    u_cancel = rng.random(n).tolist()
    v_market = _geometric(rng, cfg.market_volume_mean, n).tolist()
    v_deep = _geometric(rng, cfg.deep_volume_mean, n).tolist()
    gaps = np.cumsum(rng.exponential(cfg.mean_interarrival_us, n)) if cfg.mean_interarrival_us > 0 else np.zeros(n)
    timestamps = np.floor(gaps).astype(np.int64)

    side_a = np.empty(n, dtype=np.int8)
    level_a = np.empty(n, dtype=np.int8)
    size_a = np.empty(n, dtype=np.int64)
    price_a = np.empty(n, dtype=np.int64)
    kind_a = np.empty(n, dtype=np.int8)
    post = np.empty((n, 8), dtype=np.int64)
    depth = cfg.book_depth
    gap_p = cfg.gap_probability
    fb = cfg.imbalance_feedback

    for t in range(n):
        k = kinds[t]
        if k == MKT:
            vb, vs = bids[0][1], asks[0][1]
            tilt = 0.5 * fb * ((vb > vs) - (vb < vs))
            side = ASK if u_side[t] < min(1.0, max(0.0, ask_share + tilt)) else BID
        else:
            side = k & 1  # even codes are bid-side, odd ask-side
        book = bids if side == BID else asks
        direction = -1 if side == BID else 1  # price step away from the spread

        if k in (INB, INA) and asks[0][0] - bids[0][0] < 2:
            k = L1B if side == BID else L1A
        if k in (L1B, L1A):
            v = v_limit[t]
            book[0][1] += v
            level, size, price, kind = 1, v, book[0][0], LIMIT
        elif k in (L2B, L2A):
            v = v_limit[t]
            book[1][1] += v
            level, size, price, kind = 2, v, book[1][0], LIMIT
        elif k in (INB, INA):
            spread = asks[0][0] - bids[0][0]
            off = 1 + int(u_price[t] * (spread - 1))
            price = bids[0][0] + off if side == BID else asks[0][0] - off
            v = v_limit[t]
            book.insert(0, [price, v])
            level, size, kind = 0, v, LIMIT
        else:
            lvl = 1 if k in (C2B, C2A) else 0
            cap = book[lvl][1]
            if k == MKT:
                v = min(v_market[t], cap)
            else:
                v = min(_geometric_from_uniform(u_cancel[t], cfg.cancel_fraction * cap), cap)
            price = book[lvl][0]
            level, size, kind = lvl + 1, -v, (TRADE if k == MKT else CANCEL)
            if v == cap:
                del book[lvl]
            else:
                book[lvl][1] -= v
        if len(book) > depth + 2:
            del book[-1]
        while len(book) < depth:
            step = 2 if u_gap[t] < gap_p else 1
            p = book[-1][0] + direction * step
            if p <= 0:
                raise ConfigInfeasible("bid side reached a non-positive price")
            book.append([p, v_deep[t]])

        side_a[t] = side
        level_a[t] = level
        size_a[t] = size
        price_a[t] = price
        kind_a[t] = kind
        post[t] = (bids[0][0], bids[0][1], bids[1][0], bids[1][1], asks[0][0], asks[0][1], asks[1][0], asks[1][1])

    cols = EventColumns(timestamps, side_a, level_a, size_a, price_a, kind_a, post)
    return EventLog(cfg.day_id, cfg.tick_size, initial, cols)


class LogSummary(NamedTuple):
    event_type_counts: dict  # "limit/1/B" -> count
    spread_histogram: dict  # spread ticks -> fraction of time indices
    key_histogram: dict  # (imbalance sign, spread) -> count of time indices


def summarize(log: EventLog) -> LogSummary:
    c = log.columns
    labels = Counter(zip(c.kind.tolist(), c.level.tolist(), c.side.tolist()))
    counts = {f"{('limit', 'cancel', 'trade')[k]}/{lvl}/{SIDE_CODES[s]}": v
              for (k, lvl, s), v in sorted(labels.items())}
    signs, spreads = state_keys(log.states[:-1])
    n = len(spreads)
    sp_vals, sp_counts = np.unique(spreads, return_counts=True)
    spread_hist = {int(s): int(cn) / n for s, cn in zip(sp_vals, sp_counts)}
    keys = Counter(zip(signs.tolist(), spreads.tolist()))
    return LogSummary(counts, spread_hist, dict(sorted(keys.items())))


__all__ = ["GenConfig", "ConfigInfeasible", "generate_day", "summarize", "LogSummary", "KIND_CODES"]
