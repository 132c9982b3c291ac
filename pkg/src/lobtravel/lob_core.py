"""Two-level limit order book: state, events, replay and the event-log file format.

Index convention used across the package: ``states[t]`` is the book seen just
*before* event ``t`` is applied, so ``states[0]`` is the initial snapshot and
``states[t + 1]`` is the post-event snapshot of event ``t``.  A day of ``T``
events therefore has ``T + 1`` states.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from numba import njit

BID, ASK = 0, 1
SIDE_CODES = ("B", "S")

LIMIT, CANCEL, TRADE = 0, 1, 2
KIND_CODES = ("L", "C", "T")

# column order of the state matrix and of the snapshot columns in the CSV
STATE_FIELDS = ("b1", "vb1", "b2", "vb2", "c1", "vs1", "c2", "vs2")
B1, VB1, B2, VB2, C1, VS1, C2, VS2 = range(8)

CSV_COLUMNS = ("index", "timestamp_us", "side", "level", "signed_size", "price_ticks") + STATE_FIELDS + ("kind",)
META_PREFIX = "#meta"


class InapplicableEvent(ValueError):
    """An event cannot be applied to the given book; the log is corrupt."""


@dataclass(frozen=True, slots=True)
class LobState:
    """Two best price levels per side, prices in integer ticks, volumes in shares."""

    b1: int
    vb1: int
    b2: int
    vb2: int
    c1: int
    vs1: int
    c2: int
    vs2: int

    def problems(self) -> list[str]:
        out = []
        if not self.b2 < self.b1 < self.c1 < self.c2:
            out.append(f"price order violated: b2={self.b2} b1={self.b1} c1={self.c1} c2={self.c2}")
        if self.b2 <= 0:
            out.append(f"non-positive price b2={self.b2}")
        for name in ("vb1", "vb2", "vs1", "vs2"):
            if getattr(self, name) < 1:
                out.append(f"{name}={getattr(self, name)} < 1")
        return out

    def check(self) -> "LobState":
        issues = self.problems()
        if issues:
            raise ValueError("; ".join(issues))
        return self

    def as_tuple(self) -> tuple[int, ...]:
        return (self.b1, self.vb1, self.b2, self.vb2, self.c1, self.vs1, self.c2, self.vs2)

    @classmethod
    def from_row(cls, row: Sequence[int]) -> "LobState":
        return cls(*(int(x) for x in row))


@dataclass(frozen=True, slots=True)
class LobEvent:
    index: int
    timestamp_us: int
    side: int  # BID or ASK: the side of the book the event touches
    level: int  # 0 inside the spread, 1 best, 2 second best
    signed_size: int
    price: int
    post_state: LobState
    kind: int = LIMIT  # LIMIT, CANCEL or TRADE; removals are split into cancels and trades

    @property
    def is_trade(self) -> bool:
        return self.kind == TRADE


class MarketStateKey(NamedTuple):
    imbalance_sign: int
    spread_ticks: int


class EventColumns(NamedTuple):
    """Column-oriented storage of a day's events (row ``t`` is event ``t``)."""

    timestamp_us: np.ndarray  # int64
    side: np.ndarray  # int8
    level: np.ndarray  # int8
    signed_size: np.ndarray  # int64
    price: np.ndarray  # int64
    kind: np.ndarray  # int8
    post: np.ndarray  # int64, shape (T, 8)

    def __len__(self) -> int:
        return len(self.timestamp_us)


@dataclass(frozen=True, eq=False)
class EventLog:
    """One trading day: metadata, the initial snapshot and the event columns."""

    day_id: str
    tick_size: float
    initial_state: LobState
    columns: EventColumns

    def __post_init__(self):
        if "," in self.day_id or "\n" in self.day_id or "=" in self.day_id:
            raise ValueError(f"day_id may not contain ',', '=' or newlines: {self.day_id!r}")

    def __len__(self) -> int:
        return len(self.columns)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventLog):
            return NotImplemented
        return (
            self.day_id == other.day_id
            and self.tick_size == other.tick_size
            and self.initial_state == other.initial_state
            and all(np.array_equal(a, b) for a, b in zip(self.columns, other.columns))
        )

    @classmethod
    def from_events(cls, day_id: str, tick_size: float, initial_state: LobState, events: Iterable[LobEvent]):
        events = list(events)
        n = len(events)
        post = np.empty((n, 8), dtype=np.int64)
        for i, e in enumerate(events):
            if e.index != i:
                raise ValueError(f"event at position {i} carries index {e.index}")
            post[i] = e.post_state.as_tuple()
        cols = EventColumns(
            timestamp_us=np.array([e.timestamp_us for e in events], dtype=np.int64),
            side=np.array([e.side for e in events], dtype=np.int8),
            level=np.array([e.level for e in events], dtype=np.int8),
            signed_size=np.array([e.signed_size for e in events], dtype=np.int64),
            price=np.array([e.price for e in events], dtype=np.int64),
            kind=np.array([e.kind for e in events], dtype=np.int8),
            post=post,
        )
        return cls(day_id, tick_size, initial_state, cols)

    @cached_property
    def states(self) -> np.ndarray:
        """``(T + 1, 8)`` int64 matrix; row ``t`` is the book before event ``t``."""
        out = np.empty((len(self) + 1, 8), dtype=np.int64)
        out[0] = self.initial_state.as_tuple()
        out[1:] = self.columns.post
        out.setflags(write=False)
        return out

    @cached_property
    def signatures(self) -> np.ndarray:
        """Sign/level/side bit of every event (see ``effective_events`` for the layout)."""
        c = self.columns
        sign_bit = (c.signed_size < 0).astype(np.int64)
        sig = np.left_shift(1, c.side.astype(np.int64) * 6 + c.level.astype(np.int64) * 2 + sign_bit)
        sig = sig.astype(np.int32)
        sig.setflags(write=False)
        return sig

    def event(self, t: int) -> LobEvent:
        c = self.columns
        return LobEvent(
            index=t,
            timestamp_us=int(c.timestamp_us[t]),
            side=int(c.side[t]),
            level=int(c.level[t]),
            signed_size=int(c.signed_size[t]),
            price=int(c.price[t]),
            post_state=LobState.from_row(c.post[t]),
            kind=int(c.kind[t]),
        )

    @property
    def events(self) -> list[LobEvent]:
        return [self.event(t) for t in range(len(self))]

    def state(self, t: int) -> LobState:
        return LobState.from_row(self.states[t])


# ---------------------------------------------------------------------------
# derived quantities


@njit(cache=True)
def imbalance_sign_nb(vb1, vs1):
    if vb1 > vs1:
        return 1
    if vb1 < vs1:
        return -1
    return 0


def imbalance(state: LobState) -> float:
    return (state.vb1 - state.vs1) / (state.vb1 + state.vs1)


def mid_and_spread(state: LobState) -> tuple[int, int]:
    """Mid price in half ticks (always integral) and spread in ticks."""
    return state.b1 + state.c1, state.c1 - state.b1


def state_key(state: LobState) -> MarketStateKey:
    return MarketStateKey(int(imbalance_sign_nb(state.vb1, state.vs1)), state.c1 - state.b1)


def state_keys(states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``state_key`` over a state matrix: (imbalance signs, spreads)."""
    signs = np.sign(states[:, VB1] - states[:, VS1]).astype(np.int64)
    spreads = states[:, C1] - states[:, B1]
    return signs, spreads


# ---------------------------------------------------------------------------
# event application


def _predict(state: LobState, side: int, level: int, size: int, price: int) -> list:
    """Apply one event, returning the 8 state fields with ``None`` where the
    two-level view cannot know the value (a level vacated by a depletion)."""
    s = list(state.as_tuple())
    if side == BID:
        p1, v1, p2, v2 = B1, VB1, B2, VB2
        inside = state.b1 < price < state.c1
        between = state.b2 < price < state.b1
    elif side == ASK:
        p1, v1, p2, v2 = C1, VS1, C2, VS2
        inside = state.b1 < price < state.c1
        between = state.c1 < price < state.c2
    else:
        raise InapplicableEvent(f"unknown side {side}")
    if size == 0:
        raise InapplicableEvent("zero-size event")

    if level == 0:
        if size < 0:
            raise InapplicableEvent("level-0 events must add volume")
        if not inside:
            raise InapplicableEvent(f"level-0 price {price} not inside spread ({state.b1}, {state.c1})")
        s[p2], s[v2] = s[p1], s[v1]
        s[p1], s[v1] = price, size
        return s

    if level == 1:
        if price != s[p1]:
            raise InapplicableEvent(f"level-1 price {price} != best {s[p1]}")
        vol = s[v1] + size
        if vol < 0:
            raise InapplicableEvent(f"depletion {size} exceeds queued volume {s[v1]}")
        if vol == 0:
            s[p1], s[v1] = s[p2], s[v2]
            s[p2] = s[v2] = None
        else:
            s[v1] = vol
        return s

    if level == 2:
        if price == s[p2]:
            vol = s[v2] + size
            if vol < 0:
                raise InapplicableEvent(f"depletion {size} exceeds queued volume {s[v2]}")
            if vol == 0:
                s[p2] = s[v2] = None
            else:
                s[v2] = vol
            return s
        if between and size > 0:
            # new second level; the old one drops out of view
            s[p2], s[v2] = price, size
            return s
        raise InapplicableEvent(f"level-2 price {price} does not match second level {s[p2]}")

    raise InapplicableEvent(f"unknown level {level}")


def apply_event(state: LobState, event: LobEvent) -> LobState:
    """Next two-level book; a level vacated by a full depletion is refilled
    from the event's post-event snapshot."""
    pred = _predict(state, event.side, event.level, event.signed_size, event.price)
    snap = event.post_state.as_tuple()
    new = LobState(*(snap[i] if v is None else v for i, v in enumerate(pred)))
    issues = new.problems()
    if issues:
        raise InapplicableEvent(f"event {event.index}: " + "; ".join(issues))
    return new


def replay(log: EventLog) -> Iterable[LobState]:
    """Yield ``states[0..T]`` by applying events one after the other."""
    state = log.initial_state
    yield state
    for t in range(len(log)):
        state = apply_event(state, log.event(t))
        yield state


class Inconsistency(NamedTuple):
    index: int  # -1 for the initial snapshot
    reasons: tuple[str, ...]


def validate_log(log: EventLog) -> list[Inconsistency]:
    """Check every transition against its snapshot; one report per bad index.

    Replay continues from the *predicted* book, so a single corrupted snapshot
    yields a single report instead of a cascade.
    """
    reports: list[Inconsistency] = []
    bad = log.initial_state.problems()
    if bad:
        reports.append(Inconsistency(-1, tuple(bad)))
    c = log.columns
    state = log.initial_state
    prev_ts = None
    for t in range(len(log)):
        reasons = []
        ts = int(c.timestamp_us[t])
        if ts < 0:
            reasons.append(f"negative timestamp {ts}")
        if prev_ts is not None and ts < prev_ts:
            reasons.append(f"timestamp {ts} decreases from {prev_ts}")
        prev_ts = ts
        side, level, size, price, kind = (int(c.side[t]), int(c.level[t]), int(c.signed_size[t]),
                                          int(c.price[t]), int(c.kind[t]))
        if kind not in (LIMIT, CANCEL, TRADE):
            reasons.append(f"unknown kind {kind}")
        elif (kind == LIMIT) != (size > 0):
            reasons.append(f"kind {KIND_CODES[kind]} inconsistent with size {size}")
        snap = LobState.from_row(c.post[t])
        reasons.extend("snapshot " + p for p in snap.problems())
        try:
            pred = _predict(state, side, level, size, price)
        except InapplicableEvent as exc:
            reasons.append(str(exc))
            state = snap
        else:
            snap_t = snap.as_tuple()
            for i, v in enumerate(pred):
                if v is not None and v != snap_t[i]:
                    reasons.append(f"{STATE_FIELDS[i]}: replay gives {v}, snapshot has {snap_t[i]}")
            state = LobState(*(snap_t[i] if v is None else v for i, v in enumerate(pred)))
            if not reasons:
                reasons.extend(state.problems())
        if reasons:
            reports.append(Inconsistency(t, tuple(reasons)))
    return reports


# ---------------------------------------------------------------------------
# CSV format


def _format_meta(log: EventLog) -> list[str]:
    fields = [META_PREFIX, f"day_id={log.day_id}", f"tick_size={log.tick_size!r}"]
    fields += [f"{k}={v}" for k, v in zip(STATE_FIELDS, log.initial_state.as_tuple())]
    return fields


def write_log(log: EventLog, path_or_buf) -> None:
    """Write ``log`` as CSV: a metadata row, the header, then one row per event."""
    if isinstance(path_or_buf, (str, os.PathLike)):
        with open(path_or_buf, "w", encoding="utf-8", newline="") as fh:
            write_log(log, fh)
        return
    w = csv.writer(path_or_buf, lineterminator="\n")
    w.writerow(_format_meta(log))
    w.writerow(CSV_COLUMNS)
    c = log.columns
    post = c.post.tolist()
    for t, (ts, side, level, size, price, kind) in enumerate(zip(
            c.timestamp_us.tolist(), c.side.tolist(), c.level.tolist(),
            c.signed_size.tolist(), c.price.tolist(), c.kind.tolist())):
        w.writerow([t, ts, SIDE_CODES[side], level, size, price, *post[t], KIND_CODES[kind]])


def read_log(path_or_buf) -> EventLog:
    if isinstance(path_or_buf, (str, os.PathLike)):
        with open(path_or_buf, encoding="utf-8", newline="") as fh:
            return read_log(fh)
    reader = csv.reader(path_or_buf)
    meta = next(reader)
    if not meta or meta[0] != META_PREFIX:
        raise ValueError("event log must start with a '#meta' row")
    kv = dict(item.split("=", 1) for item in meta[1:])
    initial = LobState(*(int(kv[k]) for k in STATE_FIELDS))
    header = next(reader)
    if tuple(header) != CSV_COLUMNS:
        raise ValueError(f"unexpected header {header}")
    rows = list(reader)
    n = len(rows)
    arr = np.empty((n, 13), dtype=np.int64)
    side = np.empty(n, dtype=np.int8)
    kind = np.empty(n, dtype=np.int8)
    for i, r in enumerate(rows):
        if int(r[0]) != i:
            raise ValueError(f"row {i} carries index {r[0]}")
        side[i] = SIDE_CODES.index(r[2])
        kind[i] = KIND_CODES.index(r[14])
        arr[i, 0] = int(r[1])
        arr[i, 1:4] = int(r[3]), int(r[4]), int(r[5])
        arr[i, 4:12] = [int(x) for x in r[6:14]]
    cols = EventColumns(
        timestamp_us=arr[:, 0].copy(),
        side=side,
        level=arr[:, 1].astype(np.int8),
        signed_size=arr[:, 2].copy(),
        price=arr[:, 3].copy(),
        kind=kind,
        post=arr[:, 4:12].copy(),
    )
    return EventLog(kv["day_id"], float(kv["tick_size"]), initial, cols)


def log_to_string(log: EventLog) -> str:
    buf = io.StringIO()
    write_log(log, buf)
    return buf.getvalue()
