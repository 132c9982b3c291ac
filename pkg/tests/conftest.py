import functools
from fractions import Fraction

import numpy as np
import pytest

from lobtravel.lob_core import ASK, BID, CANCEL, LIMIT, TRADE, EventColumns, EventLog, LobState
from lobtravel.synth_data import GenConfig, generate_day


@functools.lru_cache(maxsize=None)
def synthetic_day(seed: int, n_events: int, **kw) -> EventLog:
    return generate_day(GenConfig(seed=seed, n_events=n_events, day_id=f"T{seed}", **kw))


@pytest.fixture(scope="session")
def day5k() -> EventLog:
    return synthetic_day(11, 5000)


@pytest.fixture(scope="session")
def day20k() -> EventLog:
    return synthetic_day(12, 20000)


def raw_log(states, sides, levels, sizes, prices=None, kinds=None, timestamps=None, tick_size=0.005,
            day_id="RAW") -> EventLog:
    """EventLog straight from arrays; no replay consistency is implied."""
    states = np.asarray(states, dtype=np.int64)
    n = len(sides)
    assert states.shape == (n + 1, 8)
    sizes = np.asarray(sizes, dtype=np.int64)
    if prices is None:
        prices = np.where(np.asarray(sides) == BID, states[:-1, 0], states[:-1, 4])
    if kinds is None:
        kinds = np.where(sizes > 0, LIMIT, CANCEL)
    if timestamps is None:
        timestamps = np.arange(n) * 1000
    cols = EventColumns(np.asarray(timestamps, dtype=np.int64), np.asarray(sides, dtype=np.int8),
                        np.asarray(levels, dtype=np.int8), sizes, np.asarray(prices, dtype=np.int64),
                        np.asarray(kinds, dtype=np.int8), states[1:].copy())
    return EventLog(day_id, tick_size, LobState(*states[0].tolist()), cols)


def book(b1=8000, vb1=100, b2=None, vb2=100, c1=None, vs1=100, c2=None, vs2=100) -> LobState:
    c1 = b1 + 1 if c1 is None else c1
    return LobState(b1, vb1, b1 - 1 if b2 is None else b2, vb2, c1, vs1, c1 + 1 if c2 is None else c2, vs2)


# ---------------------------------------------------------------------------
# brute-force oracles


def window_or(sigs, t, t_next):
    acc = 0
    for s in range(t, min(len(sigs), t + t_next + 1)):
        acc |= int(sigs[s])
    return acc


def brute_candidates(log: EventLog, t_next, sign, spread, required, t_now, radius, allow_past, dmax, tick):
    """Direct scan of every index with the widening-spread rule."""
    st = log.states
    sigs = log.signatures
    tol = Fraction(str(dmax))
    step = Fraction(str(tick))
    found = {}
    for t in range(len(log)):
        s = int(np.sign(st[t, 1] - st[t, 5]))
        if s != sign:
            continue
        d = abs(int(st[t, 4] - st[t, 0]) - spread)
        if d > 0 and not d * step < tol:
            continue
        if abs(t - t_now) <= radius:
            continue
        if not allow_past and t <= t_now:
            continue
        if window_or(sigs, t, t_next) & required != required:
            continue
        found.setdefault(d, []).append(t)
    if not found:
        return []
    return found[min(found)]


def brute_advance(sigs, t_prime, required, t_next):
    if required == 0:
        return t_prime
    acc = 0
    for n in range(1, t_next + 2):
        if t_prime + n - 1 >= len(sigs):
            break
        acc |= int(sigs[t_prime + n - 1])
        if acc & required == required:
            return t_prime + n
    return None


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


__all__ = ["synthetic_day", "raw_log", "book", "window_or", "brute_candidates", "brute_advance",
           "BID", "ASK", "LIMIT", "CANCEL", "TRADE"]
