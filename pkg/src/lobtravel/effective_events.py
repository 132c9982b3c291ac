"""Agent actions, the effective events they induce, and sign-only signatures.

Signature bit layout (stable): side-major, then level, then sign::

    bit = 6 * side + 2 * level + sign      side: B=0, S=1; sign: '+'=0, '-'=1

so bits 0..5 are (+0B, -0B, +1B, -1B, +2B, -2B) and bits 6..11 the same on the
sell side.  The empty event set has signature 0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional

from numba import njit

from .lob_core import ASK, BID, LobState

N_SIGNATURE_BITS = 12


class Action(enum.IntEnum):
    """The five market-maker actions; the integer value is the Q-table column."""

    B1_S1 = 0
    B1_S2 = 1
    B2_S1 = 2
    B2_S2 = 3
    LIQUIDATE = 4

    @property
    def buy_level(self) -> int:
        """1 or 2; 0 for LIQUIDATE."""
        return 0 if self == Action.LIQUIDATE else self // 2 + 1

    @property
    def sell_level(self) -> int:
        return 0 if self == Action.LIQUIDATE else self % 2 + 1

    @classmethod
    def place(cls, buy_level: int, sell_level: int) -> "Action":
        return cls(2 * (buy_level - 1) + (sell_level - 1))


N_ACTIONS = len(Action)


class EffectiveEvent(NamedTuple):
    sign: int  # +1 or -1
    level: int
    side: int

    @property
    def bit(self) -> int:
        return event_bit(self.side, self.level, self.sign)


def event_bit(side: int, level: int, sign: int) -> int:
    return 6 * side + 2 * level + (0 if sign > 0 else 1)


def event_from_bit(bit: int) -> EffectiveEvent:
    side, rest = divmod(bit, 6)
    level, neg = divmod(rest, 2)
    return EffectiveEvent(-1 if neg else 1, level, side)


def signature_of(events: Iterable[EffectiveEvent]) -> int:
    mask = 0
    for e in events:
        mask |= 1 << e.bit
    return mask


def events_of(mask: int) -> frozenset:
    return frozenset(event_from_bit(b) for b in range(N_SIGNATURE_BITS) if mask >> b & 1)


@dataclass(frozen=True)
class RestingOrder:
    price: int
    volume: int


@dataclass(frozen=True)
class MMOrders:
    buy: Optional[RestingOrder] = None
    sell: Optional[RestingOrder] = None


# ---------------------------------------------------------------------------


@njit(cache=True)
def _reconcile_side_nb(side, target_level, old_price, old_volume, p1, p2, order_size):
    """One side of ``reconcile``.  ``old_volume == 0`` means no resting order,
    ``target_level == 0`` means withdraw.  Returns (price, volume, mask)."""
    mask = 0
    base = 6 * side
    if target_level == 0:
        if old_volume > 0:
            if old_price == p1:
                mask |= 1 << (base + 2 + 1)
            elif old_price == p2:
                mask |= 1 << (base + 4 + 1)
        return 0, 0, mask
    target = p1 if target_level == 1 else p2
    if old_volume > 0 and old_price == target:
        if old_volume < order_size:
            mask |= 1 << (base + 2 * target_level)
        return target, order_size, mask
    if old_volume > 0:
        # cancellations outside the two visible levels have no encoding
        if old_price == p1:
            mask |= 1 << (base + 2 + 1)
        elif old_price == p2:
            mask |= 1 << (base + 4 + 1)
    mask |= 1 << (base + 2 * target_level)
    return target, order_size, mask


@njit(cache=True)
def reconcile_nb(action, bp, bv, sp, sv, b1, b2, c1, c2, order_size):
    """Array-level ``reconcile``; returns (bp, bv, sp, sv, mask)."""
    if action == 4:
        bl = 0
        sl = 0
    else:
        bl = action // 2 + 1
        sl = action % 2 + 1
    nbp, nbv, mb = _reconcile_side_nb(0, bl, bp, bv, b1, b2, order_size)
    nsp, nsv, ms = _reconcile_side_nb(1, sl, sp, sv, c1, c2, order_size)
    return nbp, nbv, nsp, nsv, mb | ms


def reconcile(action: Action, orders: MMOrders, lob_now: LobState, order_size: int = 100):
    """Re-anchor the resting orders to ``action`` against the current book.

    Returns ``(new_orders, events)`` where ``events`` is the frozenset of
    effective events the update sends to the book.  Levels in the events
    always refer to ``lob_now``.
    """
    action = Action(action)
    bp, bv = (orders.buy.price, orders.buy.volume) if orders.buy else (0, 0)
    sp, sv = (orders.sell.price, orders.sell.volume) if orders.sell else (0, 0)
    nbp, nbv, nsp, nsv, mask = reconcile_nb(int(action), bp, bv, sp, sv,
                                            lob_now.b1, lob_now.b2, lob_now.c1, lob_now.c2, order_size)
    new = MMOrders(RestingOrder(nbp, nbv) if nbv > 0 else None, RestingOrder(nsp, nsv) if nsv > 0 else None)
    return new, events_of(mask)


__all__ = [
    "Action", "N_ACTIONS", "EffectiveEvent", "MMOrders", "RestingOrder", "reconcile", "reconcile_nb",
    "signature_of", "events_of", "event_bit", "event_from_bit", "N_SIGNATURE_BITS", "BID", "ASK",
]
