import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_advance, brute_candidates, raw_log, window_or
from lobtravel import time_travel
from lobtravel.effective_events import EffectiveEvent, event_bit, signature_of
from lobtravel.lob_core import ASK, BID, MarketStateKey
from lobtravel.time_travel import (EVENT_TICKS, JUMP, SEQUENTIAL, WALL_CLOCK, Clock, DayExhausted, JumpConfig,
                                   Latency, advance_after_jump, build_index, cached_index, fallback_advance,
                                   find_candidates, load_index, next_activation, save_index, select_jump,
                                   step_dynamics)

PLAIN = [8000, 200, 7999, 100, 8001, 100, 8002, 100]  # key (+1, 1)
ODD = [8000, 100, 7999, 100, 8003, 200, 8004, 100]  # key (-1, 3)
M2S = 1 << event_bit(ASK, 2, -1)


def oracle_log():
    """60 events; only indices 5 and 40 carry key (-1, 3); only event 41 is (-, 2, S)."""
    states = np.array([ODD if t in (5, 40) else PLAIN for t in range(61)])
    sides = [BID] * 60
    levels = [1] * 60
    sizes = [10] * 60
    sides[41], levels[41], sizes[41] = ASK, 2, -5
    return raw_log(states, sides, levels, sizes)


class TestBuildIndex:
    def test_masks_match_brute_force(self, day5k):
        idx = build_index(day5k)
        rng = np.random.default_rng(0)
        for t in rng.integers(0, len(day5k), 100):
            assert idx.occurrence_masks[t] == window_or(day5k.signatures, t, 20)

    def test_all_masks_brute_force_small_window(self, day5k):
        cfg = JumpConfig(t_next=3)
        idx = build_index(day5k, cfg)
        assert all(idx.occurrence_masks[t] == window_or(day5k.signatures, t, 3) for t in range(len(day5k)))

    def test_tail_mask_covers_only_last_event(self, day5k):
        idx = build_index(day5k)
        assert idx.occurrence_masks[-1] == day5k.signatures[-1]

    def test_single_spread_key(self):
        row = [8000, 100, 7999, 100, 8002, 100, 8003, 100]
        log = raw_log(np.array([row] * 11), [BID] * 10, [1] * 10, [5] * 10)
        idx = build_index(log)
        assert list(idx.by_spread) == [2]
        assert np.array_equal(idx.by_spread[2], np.arange(10))

    def test_lists_sorted(self, day5k):
        idx = build_index(day5k)
        for lists in (idx.by_spread, idx.by_imbalance_sign):
            for arr in lists.values():
                assert np.all(np.diff(arr) > 0)
        assert sum(len(a) for a in idx.by_spread.values()) == len(day5k)


class TestFindCandidates:
    def test_empty_requirement_returns_same_key_outside_radius(self, day5k):
        idx = build_index(day5k)
        t_now = 2500
        key = idx.key(t_now)
        got = find_candidates(idx, key, 0, t_now)
        same = [t for t in range(len(day5k)) if idx.key(t) == key and abs(t - t_now) > 10]
        assert got.tolist() == same

    def test_singleton_on_hand_built_log(self):
        log = oracle_log()
        idx = build_index(log)
        got = find_candidates(idx, MarketStateKey(-1, 3), M2S, 5)
        want = brute_candidates(log, 20, -1, 3, M2S, 5, 10, True, 0.3, 0.005)
        assert got.tolist() == want == [40]

    def test_tolerance_exhausted(self, day5k):
        idx = build_index(day5k)
        assert find_candidates(idx, MarketStateKey(0, 40), 0, 0, JumpConfig(delta_sigma_max=0.05)).size == 0

    def test_widening_stops_at_first_shell(self):
        # spreads 1 (first half) and 3 (second half); query spread 2 takes both shells at distance 1
        rows = [PLAIN] * 30 + [[8000, 200, 7999, 100, 8003, 100, 8004, 100]] * 31
        log = raw_log(np.array(rows), [BID] * 60, [1] * 60, [10] * 60)
        idx = build_index(log)
        got = find_candidates(idx, MarketStateKey(1, 2), 0, 100)
        assert got.tolist() == list(range(60))
        assert find_candidates(idx, MarketStateKey(1, 2), 0, 100, JumpConfig(delta_sigma_max=0.005)).size == 0

    def test_strict_tolerance_in_currency(self):
        cfg = JumpConfig(delta_sigma_max=0.3)
        assert cfg.n_spread_shells(0.005) == 60
        assert JumpConfig(delta_sigma_max=0.0).n_spread_shells(0.005) == 1
        assert JumpConfig(delta_sigma_max=0.301).n_spread_shells(0.005) == 61

    def test_future_only(self, day5k):
        idx = build_index(day5k)
        cfg = JumpConfig(allow_past_jumps=False)
        got = find_candidates(idx, idx.key(1000), 0, 1000, cfg)
        assert got.size and got.min() > 1010

    @settings(max_examples=300, deadline=None)
    @given(st.data())
    def test_oracle_equivalence(self, day5k, data):
        idx = _index_cache.setdefault("i", build_index(day5k))
        t_now = data.draw(st.integers(0, len(day5k)))
        sign = data.draw(st.sampled_from([-1, 0, 1]))
        spread = data.draw(st.integers(1, 8))
        required = data.draw(st.integers(0, 4095)) & data.draw(st.sampled_from([0, 0x3C, 0xF3C, 0xFFF]))
        radius = data.draw(st.integers(0, 30))
        allow_past = data.draw(st.booleans())
        dmax = data.draw(st.sampled_from([0.0, 0.005, 0.01, 0.0125, 0.3]))
        cfg = JumpConfig(20, dmax, radius, allow_past)
        got = find_candidates(idx, MarketStateKey(sign, spread), required, t_now, cfg)
        want = brute_candidates(day5k, 20, sign, spread, required, t_now, radius, allow_past, dmax, 0.005)
        assert got.tolist() == want


_index_cache: dict = {}


class TestSelectJump:
    def test_empty_and_singleton(self):
        rng = np.random.default_rng(0)
        assert select_jump([], rng) is None
        assert select_jump([17], rng) == 17

    def test_uniform(self):
        rng = np.random.default_rng(1)
        draws = [select_jump([3, 9, 27, 81], rng) for _ in range(10_000)]
        freq = np.bincount([[3, 9, 27, 81].index(d) for d in draws]) / 10_000
        assert np.all((freq >= 0.23) & (freq <= 0.27))


class TestAdvance:
    def crafted(self, t_prime=4):
        sides = [ASK] * 30
        levels = [1] * 30
        sizes = [10] * 30
        sides[t_prime + 2], levels[t_prime + 2] = BID, 1
        sides[t_prime + 6], levels[t_prime + 6], sizes[t_prime + 6] = BID, 2, -5
        return raw_log(np.array([PLAIN] * 31), sides, levels, sizes)

    def test_empty(self, day5k):
        assert advance_after_jump(day5k, 123, 0) == 123

    def test_first_event(self, day5k):
        t = 200
        assert advance_after_jump(day5k, t, int(day5k.signatures[t])) == t + 1

    def test_two_required_events(self):
        log = self.crafted()
        req = signature_of([EffectiveEvent(1, 1, BID), EffectiveEvent(-1, 2, BID)])
        assert advance_after_jump(log, 4, req) == 4 + 7 == brute_advance(log.signatures, 4, req, 20)

    def test_not_covered(self):
        with pytest.raises(ValueError):
            advance_after_jump(self.crafted(), 4, 1 << event_bit(ASK, 0, -1))

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 4999), st.integers(1, 4095))
    def test_matches_linear_scan(self, day5k, t, req):
        want = brute_advance(day5k.signatures, t, req, 20)
        if want is None:
            with pytest.raises(ValueError):
                advance_after_jump(day5k, t, req)
        else:
            assert advance_after_jump(day5k, t, req) == want


def test_fallback_advance():
    assert fallback_advance(10, [], 100) == 10
    assert fallback_advance(10, ["a", "b"], 100) == 12
    assert fallback_advance(99, ["a", "b"], 100) == 100


class TestClock:
    def test_wall_clock(self):
        ts = np.array([0, 5, 10, 20, 30])
        log = raw_log(np.array([PLAIN] * 6), [BID] * 5, [1] * 5, [1] * 5, timestamps=ts)
        lat = Latency(WALL_CLOCK, 10)
        assert next_activation(log, 0, lat) == 3
        assert next_activation(log, 1, lat) == 3
        assert next_activation(log, 3, lat) == 6  # past the day end

    def test_event_ticks(self, day5k):
        assert next_activation(day5k, 7, Latency(EVENT_TICKS, 10)) == 17

    def test_bad_latency(self):
        with pytest.raises(ValueError):
            Latency(EVENT_TICKS, 0)


class TestStepDynamics:
    def test_sequential(self, day5k):
        step = step_dynamics(SEQUENTIAL, Clock(100, 0, Latency()), day5k, None, MarketStateKey(0, 1), 0xFFF,
                             np.random.default_rng(0))
        assert (step.landing, step.next_t, step.jumped) == (100, 110, False)

    def test_sequential_day_end(self, day5k):
        with pytest.raises(DayExhausted):
            step_dynamics(SEQUENTIAL, Clock(4995, 0, Latency()), day5k, None, MarketStateKey(0, 1), 0,
                          np.random.default_rng(0))

    def test_jump_fallback(self, day5k):
        idx = build_index(day5k)
        never = (1 << event_bit(BID, 0, -1)) | (1 << event_bit(ASK, 0, -1))
        step = step_dynamics(JUMP, Clock(100, 0, Latency()), day5k, idx, idx.key(100), never,
                             np.random.default_rng(0))
        assert (step.landing, step.next_t, step.target, step.covered) == (102, 112, -1, False)

    def test_jump_lands_on_unique_continuation(self):
        log = oracle_log()
        idx = build_index(log)
        step = step_dynamics(JUMP, Clock(5, 0, Latency(EVENT_TICKS, 3)), log, idx, MarketStateKey(-1, 3), M2S,
                             np.random.default_rng(0))
        assert (step.target, step.landing, step.next_t, step.jumped) == (40, 42, 45, True)

    def test_covered_continuation_does_not_jump(self, day5k):
        idx = build_index(day5k)
        t = 300
        req = int(day5k.signatures[t + 3])
        step = step_dynamics(JUMP, Clock(t, 0, Latency()), day5k, idx, idx.key(t), req, np.random.default_rng(0))
        assert step.target == t and not step.jumped and step.landing <= t + 4

    def test_jump_past_day_end_jumps_again(self, day5k):
        idx = build_index(day5k)
        n = len(day5k)
        key = MarketStateKey(*map(int, (np.sign(day5k.states[n, 1] - day5k.states[n, 5]),
                                        day5k.states[n, 4] - day5k.states[n, 0])))
        step = step_dynamics(JUMP, Clock(n, 0, Latency()), day5k, idx, key, 0, np.random.default_rng(0))
        assert step.jumped and step.target < n - 10
        assert idx.key(step.target) == key

    def test_empty_requirement_keeps_key(self, day5k):
        idx = build_index(day5k)
        rng = np.random.default_rng(3)
        for t in rng.integers(0, len(day5k) - 50, 50):
            step = step_dynamics(JUMP, Clock(int(t), 0, Latency()), day5k, idx, idx.key(t), 0, rng)
            assert step.target == t and step.landing == t

    def test_deterministic(self, day5k):
        idx = build_index(day5k)

        def run(seed):
            rng = np.random.default_rng(seed)
            out = []
            for t in range(0, 4000, 37):
                out.append(step_dynamics(JUMP, Clock(t, 0, Latency()), day5k, idx, idx.key(t), 0x3C, rng))
            return out

        assert run(5) == run(5)


class TestCache:
    def test_round_trip_and_invalidation(self, day5k, day20k, tmp_path):
        cfg = JumpConfig()
        built = time_travel.INDEX_BUILDS
        a = cached_index(day5k, cfg, tmp_path)
        b = cached_index(day5k, cfg, tmp_path)
        assert time_travel.INDEX_BUILDS == built + 2
        assert np.array_equal(a.occurrence_masks, b.occurrence_masks)
        assert np.array_equal(a.bucket_order, b.bucket_order)
        path = tmp_path / "x.npz"
        save_index(a, cfg, path)
        assert load_index(path, day5k, cfg) is not None
        assert load_index(path, day5k, JumpConfig(exclusion_radius=3)) is None
        assert load_index(path, day5k, JumpConfig(t_next=5)) is None
        assert load_index(path, day20k, cfg) is None
        assert load_index(tmp_path / "missing.npz", day5k, cfg) is None
