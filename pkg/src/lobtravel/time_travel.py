"""Jump index and the replay clock under sequential or time-travel dynamics.

A time index ``t`` is keyed by the market state seen before event ``t``
(imbalance sign, spread in ticks).  ``occurrence_masks[t]`` is the OR of the
event signatures of events ``t .. t + t_next`` (truncated at day end), i.e.
what the recorded continuation after ``t`` contains within the window.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import NamedTuple, Optional

import numpy as np
from numba import njit, types
from numba.typed import Dict

from .lob_core import EventLog, MarketStateKey, state_keys

INDEX_FORMAT_VERSION = 1
SEQUENTIAL, JUMP = 0, 1
EVENT_TICKS, WALL_CLOCK = 0, 1

# instrumentation: number of JumpIndex objects built or loaded in this process
INDEX_BUILDS = 0


class DayExhausted(Exception):
    """The clock ran past the last event of the day; the episode is over."""


@dataclass(frozen=True)
class JumpConfig:
    t_next: int = 20
    delta_sigma_max: float = 0.3  # currency units
    exclusion_radius: int = 10
    allow_past_jumps: bool = True

    def __post_init__(self):
        if self.t_next < 1:
            raise ValueError("t_next must be >= 1")
        if self.delta_sigma_max < 0:
            raise ValueError("delta_sigma_max must be >= 0")
        if self.exclusion_radius < 0:
            raise ValueError("exclusion_radius must be >= 0")

    def n_spread_shells(self, tick_size: float) -> int:
        """Number of |spread difference| shells searched: 0, 1, ..., n - 1 ticks.

        The exact spread is always admissible; a non-zero difference d is
        admissible when d * tick < delta_sigma_max, i.e. d < ceil(max / tick).
        """
        ratio = Fraction(str(self.delta_sigma_max)) / Fraction(str(tick_size))
        return max(1, math.ceil(ratio))


@dataclass(frozen=True)
class Latency:
    mode: int = EVENT_TICKS
    value: int = 10  # events, or microseconds in wall-clock mode

    def __post_init__(self):
        if self.mode not in (EVENT_TICKS, WALL_CLOCK):
            raise ValueError(f"unknown latency mode {self.mode}")
        if self.mode == EVENT_TICKS and self.value < 1:
            raise ValueError("event-tick latency must be >= 1")
        if self.value < 0:
            raise ValueError("latency must be >= 0")


@dataclass
class Clock:
    t: int = 0
    u: int = 0
    latency: Latency = Latency()


# ---------------------------------------------------------------------------
# index


@njit(cache=True)
def occurrence_masks_nb(sigs, t_next):
    n = sigs.shape[0]
    out = np.zeros(n, dtype=np.int32)
    for t in range(n):
        acc = 0
        stop = min(n, t + t_next + 1)
        for s in range(t, stop):
            acc |= sigs[s]
        out[t] = acc
    return out


class JumpIndex:
    """Per-day dictionaries of time indices plus occurrence masks.

    ``by_imbalance_sign`` and ``by_spread`` map a key component to the sorted
    indices carrying it; their intersections are pre-computed as CSR buckets
    (``bucket_order`` / ``bucket_offsets``) so candidate search scans the
    smallest possible list.  Filtered buckets are memoised per required
    signature; the memo is the only mutable part and never changes results.
    """

    def __init__(self, day_id, tick_size, n_events, t_next, signs, spreads, occurrence_masks):
        global INDEX_BUILDS
        INDEX_BUILDS += 1
        self.day_id = day_id
        self.tick_size = tick_size
        self.n_events = n_events
        self.t_next = t_next
        self.signs = signs
        self.spreads = spreads
        self.occurrence_masks = occurrence_masks
        self.max_spread = int(spreads.max()) if len(spreads) else 1
        self.n_spread_keys = self.max_spread + 1
        bucket = (signs + 1) * self.n_spread_keys + spreads
        self.bucket_order = np.argsort(bucket, kind="stable").astype(np.int64)
        counts = np.bincount(bucket, minlength=3 * self.n_spread_keys)
        self.bucket_offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.memo = Dict.empty(key_type=types.int64, value_type=types.int64[:])
        for arr in (signs, spreads, occurrence_masks, self.bucket_order, self.bucket_offsets):
            arr.setflags(write=False)

    def __len__(self):
        return self.n_events

    @property
    def by_imbalance_sign(self) -> dict[int, np.ndarray]:
        return {s: np.flatnonzero(self.signs == s) for s in (-1, 0, 1) if np.any(self.signs == s)}

    @property
    def by_spread(self) -> dict[int, np.ndarray]:
        return {int(s): np.flatnonzero(self.spreads == s) for s in np.unique(self.spreads)}

    def key(self, t: int) -> MarketStateKey:
        return MarketStateKey(int(self.signs[t]), int(self.spreads[t]))


def build_index(log: EventLog, cfg: JumpConfig = JumpConfig()) -> JumpIndex:
    signs, spreads = state_keys(log.states[:-1])
    masks = occurrence_masks_nb(log.signatures, cfg.t_next)
    return JumpIndex(log.day_id, log.tick_size, len(log), cfg.t_next, signs, spreads, masks)


def save_index(index: JumpIndex, cfg: JumpConfig, path) -> None:
    """Binary cache (.npz) keyed by day and the full jump configuration."""
    np.savez(
        path,
        version=INDEX_FORMAT_VERSION,
        day_id=index.day_id,
        tick_size=index.tick_size,
        n_events=index.n_events,
        config=np.array(repr(sorted(asdict(cfg).items()))),
        signs=index.signs,
        spreads=index.spreads,
        occurrence_masks=index.occurrence_masks,
    )


def load_index(path, log: EventLog, cfg: JumpConfig) -> Optional[JumpIndex]:
    """Return the cached index, or ``None`` when the cache is stale or foreign."""
    if not os.path.exists(path):
        return None
    with np.load(path, allow_pickle=False) as z:
        if int(z["version"]) != INDEX_FORMAT_VERSION:
            return None
        if str(z["day_id"]) != log.day_id or int(z["n_events"]) != len(log):
            return None
        if str(z["config"]) != repr(sorted(asdict(cfg).items())):
            return None
        return JumpIndex(log.day_id, float(z["tick_size"]), len(log), cfg.t_next,
                         z["signs"].astype(np.int64), z["spreads"].astype(np.int64),
                         z["occurrence_masks"].astype(np.int32))


def cached_index(log: EventLog, cfg: JumpConfig, cache_dir=None) -> JumpIndex:
    if cache_dir is None:
        return build_index(log, cfg)
    path = os.path.join(cache_dir, f"{log.day_id}.tnext{cfg.t_next}.index.npz")
    index = load_index(path, log, cfg)
    if index is None:
        index = build_index(log, cfg)
        os.makedirs(cache_dir, exist_ok=True)
        save_index(index, cfg, path)
    return index


# ---------------------------------------------------------------------------
# candidate search


@njit(cache=True)
def _filtered_nb(order, offsets, masks, memo, bucket, required):
    code = bucket * 4096 + required
    if code in memo:
        return memo[code]
    lo = offsets[bucket]
    hi = offsets[bucket + 1]
    n = 0
    out = np.empty(hi - lo, dtype=np.int64)
    for i in range(lo, hi):
        t = order[i]
        if (masks[t] & required) == required:
            out[n] = t
            n += 1
    res = out[:n].copy()
    memo[code] = res
    return res


@njit(cache=True)
def _valid_range_nb(arr, t_now, radius, allow_past):
    """Split points (lo, hi): valid candidates are arr[:lo] and arr[hi:]."""
    hi = np.searchsorted(arr, t_now + radius, side="right")
    if allow_past:
        lo = np.searchsorted(arr, t_now - radius, side="left")
    else:
        lo = 0
    return lo, hi


@njit(cache=True)
def _shell_lists_nb(order, offsets, masks, memo, n_keys, sign, spread, d, required):
    """Filtered lists for spreads ``spread - d`` and ``spread + d`` (the second
    is empty for d == 0 or when out of range)."""
    empty = np.empty(0, dtype=np.int64)
    base = (sign + 1) * n_keys
    a = empty
    b = empty
    lo_sp = spread - d
    if 1 <= lo_sp < n_keys:
        a = _filtered_nb(order, offsets, masks, memo, base + lo_sp, required)
    hi_sp = spread + d
    if d > 0 and 1 <= hi_sp < n_keys:
        b = _filtered_nb(order, offsets, masks, memo, base + hi_sp, required)
    return a, b


@njit(cache=True)
def find_candidates_nb(order, offsets, masks, memo, n_keys, sign, spread, required,
                       t_now, radius, allow_past, n_shells):
    for d in range(n_shells):
        if spread - d < 1 and spread + d >= n_keys:
            break
        a, b = _shell_lists_nb(order, offsets, masks, memo, n_keys, sign, spread, d, required)
        la, ha = _valid_range_nb(a, t_now, radius, allow_past)
        lb, hb = _valid_range_nb(b, t_now, radius, allow_past)
        n = la + (a.shape[0] - ha) + lb + (b.shape[0] - hb)
        if n > 0:
            out = np.empty(n, dtype=np.int64)
            k = 0
            for i in range(la):
                out[k] = a[i]
                k += 1
            for i in range(ha, a.shape[0]):
                out[k] = a[i]
                k += 1
            for i in range(lb):
                out[k] = b[i]
                k += 1
            for i in range(hb, b.shape[0]):
                out[k] = b[i]
                k += 1
            out.sort()
            return out
    return np.empty(0, dtype=np.int64)


@njit(cache=True)
def select_candidate_nb(order, offsets, masks, memo, n_keys, sign, spread, required,
                        t_now, radius, allow_past, n_shells, rng):
    """``select_jump(find_candidates(...))`` without materialising the list
    when a single spread bucket is involved.  Returns -1 when empty."""
    for d in range(n_shells):
        if spread - d < 1 and spread + d >= n_keys:
            break
        a, b = _shell_lists_nb(order, offsets, masks, memo, n_keys, sign, spread, d, required)
        la, ha = _valid_range_nb(a, t_now, radius, allow_past)
        lb, hb = _valid_range_nb(b, t_now, radius, allow_past)
        na = la + (a.shape[0] - ha)
        nb = lb + (b.shape[0] - hb)
        n = na + nb
        if n == 0:
            continue
        k = min(int(rng.random() * n), n - 1)
        if nb == 0:
            return a[k] if k < la else a[ha + k - la]
        if na == 0:
            return b[k] if k < lb else b[hb + k - lb]
        cands = find_candidates_nb(order, offsets, masks, memo, n_keys, sign, spread, required,
                                   t_now, radius, allow_past, d + 1)
        return cands[k]
    return -1


def find_candidates(index: JumpIndex, key: MarketStateKey, required: int, t_now: int,
                    cfg: JumpConfig = JumpConfig()) -> np.ndarray:
    """Sorted jump candidates consistent with ``key`` and ``required``.

    Candidates share the imbalance sign exactly, their window contains every
    required signature bit, and they lie more than ``exclusion_radius`` events
    from ``t_now`` (and after it unless past jumps are allowed).  Spreads are
    tried at increasing distance from ``key.spread_ticks``; the first distance
    with any candidate wins.
    """
    sign, spread = int(key.imbalance_sign), int(key.spread_ticks)
    if spread < 1:
        return np.empty(0, dtype=np.int64)
    return find_candidates_nb(index.bucket_order, index.bucket_offsets, index.occurrence_masks, index.memo,
                              index.n_spread_keys, sign, spread, int(required), int(t_now),
                              cfg.exclusion_radius, cfg.allow_past_jumps, cfg.n_spread_shells(index.tick_size))


def select_jump(candidates, rng: np.random.Generator) -> Optional[int]:
    n = len(candidates)
    if n == 0:
        return None
    return int(candidates[min(int(rng.random() * n), n - 1)])


@njit(cache=True)
def advance_nb(sigs, t_prime, required, limit):
    """Smallest ``t' + n`` such that events ``t' .. t' + n - 1`` cover
    ``required``; -1 if not found before ``limit``."""
    if required == 0:
        return t_prime
    acc = 0
    for s in range(t_prime, limit):
        acc |= sigs[s]
        if (acc & required) == required:
            return s + 1
    return -1


def advance_after_jump(log: EventLog, t_prime: int, required: int, cfg: JumpConfig = JumpConfig()) -> int:
    """Index just past the shortest recorded continuation of ``t_prime`` that
    contains every required signature (``t_prime`` itself when nothing is required)."""
    limit = min(len(log), t_prime + cfg.t_next + 1)
    out = advance_nb(log.signatures, int(t_prime), int(required), limit)
    if out < 0:
        raise ValueError(f"window after {t_prime} does not cover signature {required:#x}")
    return int(out)


def fallback_advance(t_now: int, events, day_end: int) -> int:
    """``t_now + |events|``; a result equal to ``day_end`` means the day is over."""
    return min(t_now + len(events), day_end)


@njit(cache=True)
def next_activation_nb(timestamps, t, mode, value):
    """Index of the next agent activation after one at ``t``; > T when none."""
    n = timestamps.shape[0]
    if mode == 0:
        return t + value
    if t >= n:
        return n + 1
    # smallest t2 > t whose event time exceeds the time at t by more than the latency
    t2 = np.searchsorted(timestamps, timestamps[t] + value, side="right")
    if t2 <= t:
        t2 = t + 1
    if t2 >= n:
        return n + 1
    return t2


def next_activation(log: EventLog, t: int, latency: Latency) -> int:
    return int(next_activation_nb(log.columns.timestamp_us, int(t), latency.mode, int(latency.value)))


@njit(cache=True)
def window_covers_nb(sigs, t, required, t_next):
    """Direct scan: do events t .. t + t_next contain every required bit?"""
    if required == 0:
        return True
    acc = 0
    stop = min(sigs.shape[0], t + t_next + 1)
    for s in range(t, stop):
        acc |= sigs[s]
    return (acc & required) == required


class Step(NamedTuple):
    landing: int  # index the replay continues from
    next_t: int  # next activation
    target: int  # chosen continuation start t' (t itself when no jump), -1 after fallback
    covered: bool  # recorded continuation at ``target`` contains the required events
    jumped: bool


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def step_dynamics(mode: int, clock: Clock, log: EventLog, index: Optional[JumpIndex], key: MarketStateKey,
                  required: int, rng: np.random.Generator, cfg: JumpConfig = JumpConfig()) -> Step:
    """Move the replay cursor after the agent's update at ``clock.t``.

    Sequential mode ignores the agent's events.  Jump mode keeps the current
    continuation when it already contains the required events, otherwise jumps
    to a random consistent candidate, otherwise falls back to skipping one
    index per effective event.

    Sequential mode raises ``DayExhausted`` at the end of the day.  In jump
    mode a continuation cut by the day end makes the next activation (at index
    T) jump again, so only a failed search past the end exhausts the day.
    """
    t = clock.t
    n = len(log)
    if mode == SEQUENTIAL:
        landing, target, jumped = t, t, False
        covered = bool(window_covers_nb(log.signatures, t, required, cfg.t_next))
    else:
        if index is None:
            raise ValueError("jump dynamics need a JumpIndex")
        jumped = False
        if t < n and (required == 0 or (int(index.occurrence_masks[t]) & required) == required):
            target = t
        else:
            cands = find_candidates(index, key, required, t, cfg)
            pick = select_jump(cands, rng)
            target = -1 if pick is None else pick
            jumped = pick is not None
        if target >= 0:
            landing = advance_after_jump(log, target, required, cfg)
            covered = True
        else:
            landing = t + popcount(required)
            if landing >= n:
                raise DayExhausted(landing)
            covered = False
        nxt = min(next_activation(log, landing, clock.latency), n) if landing < n else n
        return Step(landing, nxt, target, covered, jumped)
    if landing >= n:
        raise DayExhausted(landing)
    nxt = next_activation(log, landing, clock.latency)
    if nxt > n:
        raise DayExhausted(nxt)
    return Step(landing, nxt, target, covered, jumped)


__all__ = [
    "JumpConfig", "JumpIndex", "Latency", "Clock", "Step", "DayExhausted", "build_index", "save_index",
    "load_index", "cached_index", "find_candidates", "select_jump", "advance_after_jump",
    "fallback_advance", "step_dynamics", "next_activation", "SEQUENTIAL", "JUMP", "EVENT_TICKS", "WALL_CLOCK",
]
