from hypothesis import given
from hypothesis import strategies as st

from conftest import book
from lobtravel.effective_events import (Action, EffectiveEvent, MMOrders, RestingOrder, event_bit, event_from_bit,
                                        events_of, reconcile, signature_of)
from lobtravel.lob_core import ASK, BID

P1B, M2B, P1S, P2B = EffectiveEvent(1, 1, BID), EffectiveEvent(-1, 2, BID), EffectiveEvent(1, 1, ASK), \
    EffectiveEvent(1, 2, BID)


def test_five_actions():
    assert len(Action) == 5
    pairs = {(a.buy_level, a.sell_level) for a in Action}
    assert pairs == {(1, 1), (1, 2), (2, 1), (2, 2), (0, 0)}
    assert Action.place(2, 1) is Action.B2_S1


def test_bit_layout_side_major_then_level_then_sign():
    assert event_bit(BID, 0, 1) == 0
    assert event_bit(BID, 0, -1) == 1
    assert event_bit(BID, 1, 1) == 2
    assert event_bit(BID, 2, -1) == 5
    assert event_bit(ASK, 0, 1) == 6
    assert event_bit(ASK, 2, -1) == 11
    for b in range(12):
        assert event_from_bit(b).bit == b


def test_initial_placement():
    lob = book(b1=8000, c1=8002)
    orders, events = reconcile(Action.B1_S1, MMOrders(), lob)
    assert events == {P1B, P1S}
    assert orders == MMOrders(RestingOrder(8000, 100), RestingOrder(8002, 100))


def test_best_bid_rose_one_tick():
    orders = MMOrders(RestingOrder(8000, 100), RestingOrder(8002, 100))
    lob = book(b1=8001, b2=8000, c1=8002)
    new, events = reconcile(Action.B1_S1, orders, lob)
    assert events == {M2B, P1B}
    assert new.buy == RestingOrder(8001, 100)


def test_refill_after_full_execution():
    orders = MMOrders(None, RestingOrder(8002, 100))
    new, events = reconcile(Action.B1_S1, orders, book(b1=8000, c1=8002))
    assert events == {P1B}


def test_partial_fill_replenishment_is_an_event():
    orders = MMOrders(RestingOrder(8000, 40), RestingOrder(8002, 100))
    new, events = reconcile(Action.B1_S1, orders, book(b1=8000, c1=8002))
    assert events == {P1B}
    assert new.buy.volume == 100


def test_nothing_to_do():
    orders = MMOrders(RestingOrder(8000, 100), RestingOrder(8002, 100))
    new, events = reconcile(Action.B1_S1, orders, book(b1=8000, c1=8002))
    assert events == frozenset() and new == orders


def test_liquidate_cancels_both():
    lob = book(b1=8000, c1=8002)
    orders = MMOrders(RestingOrder(7999, 100), RestingOrder(8002, 100))
    new, events = reconcile(Action.LIQUIDATE, orders, lob)
    assert new == MMOrders()
    assert events == {EffectiveEvent(-1, 2, BID), EffectiveEvent(-1, 1, ASK)}


def test_cancel_outside_window_has_no_event():
    lob = book(b1=8000, b2=7999, c1=8002)
    orders = MMOrders(RestingOrder(7990, 100), None)
    new, events = reconcile(Action.B2_S1, orders, lob)
    assert events == {P2B, P1S}
    assert new.buy == RestingOrder(7999, 100)


def test_signature_examples():
    assert signature_of([]) == 0
    assert bin(signature_of([P1B])).count("1") == 1
    assert bin(signature_of([P1B, M2B, P1B])).count("1") == 2


events_st = st.frozensets(st.builds(EffectiveEvent, st.sampled_from([1, -1]), st.integers(0, 2),
                                    st.sampled_from([BID, ASK])))


@given(events_st, events_st)
def test_signature_of_union(a, b):
    assert signature_of(a | b) == signature_of(a) | signature_of(b)
    assert events_of(signature_of(a)) == a


@st.composite
def scenarios(draw):
    b1 = draw(st.integers(1000, 1010))
    spread = draw(st.integers(1, 4))
    lob = book(b1=b1, b2=b1 - draw(st.integers(1, 2)), c1=b1 + spread, c2=b1 + spread + draw(st.integers(1, 2)))
    buy = draw(st.none() | st.builds(RestingOrder, st.integers(b1 - 4, b1), st.integers(1, 100)))
    sell = draw(st.none() | st.builds(RestingOrder, st.integers(b1 + spread, b1 + spread + 4), st.integers(1, 100)))
    return draw(st.sampled_from(list(Action))), MMOrders(buy, sell), lob


@given(scenarios())
def test_reconcile_properties(sc):
    action, orders, lob = sc
    new, events = reconcile(action, orders, lob)
    assert reconcile(action, orders, lob) == (new, events)
    # one cancel and one insert per side at most, so the mask loses nothing
    assert len(events) == bin(signature_of(events)).count("1")
    prices = {(BID, 1): lob.b1, (BID, 2): lob.b2, (ASK, 1): lob.c1, (ASK, 2): lob.c2}
    for e in events:
        assert e.level in (1, 2)
        old = orders.buy if e.side == BID else orders.sell
        if e.sign < 0:
            assert old is not None and old.price == prices[(e.side, e.level)]
        else:
            placed = new.buy if e.side == BID else new.sell
            assert placed.price == prices[(e.side, e.level)] and placed.volume == 100
    if action == Action.LIQUIDATE:
        assert new == MMOrders()
    else:
        assert new.buy.price == prices[(BID, action.buy_level)]
        assert new.sell.price == prices[(ASK, action.sell_level)]
        assert new.buy.price < new.sell.price
        # applying the same action again on an unchanged book does nothing
        assert reconcile(action, new, lob) == (new, frozenset())
