"""Fills of the market maker's virtual orders against recorded events, and rewards.

All rewards are integers in half-tick x share units: the mid price is carried
as ``b1 + c1`` (twice the mid in ticks), so an order price ``p`` enters as ``2p``.

The MM's orders are an overlay; they are never inserted in the recorded book
and do not take queue priority.  Buy-side execution triggers (sell side is the
mirror image):

* a recorded trade on the bid at the MM's price fills pro rata, with the
  recorded queue at that price and the MM's volume treated as disjoint;
* a recorded trade on the bid strictly below the MM's price fills fully;
* an ask arriving at or below the MM's price (the book crossing it) fills fully.

"Fully" is bounded by the volume of the triggering event, so no fill ever
exceeds the volume that traded or arrived.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from numba import njit

from .effective_events import MMOrders, RestingOrder
from .lob_core import ASK, BID, TRADE, EventLog

PRO_RATA, THROUGH, CROSSED = 0, 1, 2
FILL_FIELDS = ("t", "mm_side", "volume", "price", "trigger", "remaining_before", "event_volume")


@dataclass(frozen=True)
class Inventory:
    J: int = 0
    max_abs: int = 1000


@dataclass(frozen=True)
class RewardAccumulator:
    inventory_part: int = 0
    execution_part: int = 0
    liquidation_part: int = 0


class Fill(NamedTuple):
    t: int
    mm_side: int
    volume: int
    price: int
    trigger: int
    remaining_before: int
    event_volume: int


@njit(cache=True)
def pro_rata_fill(v_mm, v_hist, v_trans):
    """Shares of a trade of ``v_trans`` allotted to an order of ``v_mm`` queued
    alongside ``v_hist`` recorded shares: floor(v_mm * v_trans / (v_hist + v_mm)),
    never more than either volume."""
    if v_mm <= 0 or v_trans <= 0:
        return 0
    f = (v_mm * v_trans) // (v_hist + v_mm)
    return min(f, v_mm, v_trans)


@njit(cache=True)
def process_interval_nb(states, ev_side, ev_size, ev_price, ev_kind, t0, t1,
                        bp, bv, sp, sv, J, fills):
    """Run events ``t0 .. t1 - 1``.  ``fills`` is an (n, 7) int64 buffer, or
    shape (0, 7) to skip recording.  Returns
    (bp, bv, sp, sv, J, inventory_part, execution_part, n_fills)."""
    inv_part = 0
    exec_part = 0
    nf = 0
    record = fills.shape[0] > 0
    for s in range(t0, t1):
        m_prev = states[s, 0] + states[s, 4]
        m_new = states[s + 1, 0] + states[s + 1, 4]
        side = ev_side[s]
        size = ev_size[s]
        price = ev_price[s]
        is_trade = ev_kind[s] == 2
        if bv > 0:
            fill = 0
            trig = -1
            if is_trade and side == 0:
                if price < bp:
                    fill = min(bv, -size)
                    trig = 1
                elif price == bp:
                    if bp == states[s, 0]:
                        v_hist = states[s, 1]
                    elif bp == states[s, 2]:
                        v_hist = states[s, 3]
                    else:
                        v_hist = 0
                    fill = pro_rata_fill(bv, v_hist, -size)
                    trig = 0
            elif side == 1 and size > 0 and price <= bp:
                fill = min(bv, size)
                trig = 2
            if fill > 0:
                if record:
                    fills[nf, 0] = s
                    fills[nf, 1] = 0
                    fills[nf, 2] = fill
                    fills[nf, 3] = bp
                    fills[nf, 4] = trig
                    fills[nf, 5] = bv
                    fills[nf, 6] = abs(size)
                nf += 1
                exec_part += fill * (m_prev - 2 * bp)
                J += fill
                bv -= fill
        if sv > 0:
            fill = 0
            trig = -1
            if is_trade and side == 1:
                if price > sp:
                    fill = min(sv, -size)
                    trig = 1
                elif price == sp:
                    if sp == states[s, 4]:
                        v_hist = states[s, 5]
                    elif sp == states[s, 6]:
                        v_hist = states[s, 7]
                    else:
                        v_hist = 0
                    fill = pro_rata_fill(sv, v_hist, -size)
                    trig = 0
            elif side == 0 and size > 0 and price >= sp:
                fill = min(sv, size)
                trig = 2
            if fill > 0:
                if record:
                    fills[nf, 0] = s
                    fills[nf, 1] = 1
                    fills[nf, 2] = fill
                    fills[nf, 3] = sp
                    fills[nf, 4] = trig
                    fills[nf, 5] = sv
                    fills[nf, 6] = abs(size)
                nf += 1
                exec_part += fill * (2 * sp - m_prev)
                J -= fill
                sv -= fill
        inv_part += J * (m_new - m_prev)
    return bp, bv, sp, sv, J, inv_part, exec_part, nf


def simulate_interval(orders: MMOrders, inv: Inventory, log: EventLog, start: int, stop: int):
    """Like ``process_interval`` but also returns the list of ``Fill`` records."""
    if not 0 <= start <= stop <= len(log):
        raise ValueError(f"bad interval [{start}, {stop}) for a day of {len(log)} events")
    c = log.columns
    bp, bv = (orders.buy.price, orders.buy.volume) if orders.buy else (0, 0)
    sp, sv = (orders.sell.price, orders.sell.volume) if orders.sell else (0, 0)
    buf = np.zeros((2 * (stop - start), len(FILL_FIELDS)), dtype=np.int64)
    if len(buf) == 0:
        buf = np.zeros((0, len(FILL_FIELDS)), dtype=np.int64)
    bp, bv, sp, sv, J, inv_part, exec_part, nf = process_interval_nb(
        log.states, c.side, c.signed_size, c.price, c.kind, start, stop, bp, bv, sp, sv, inv.J, buf)
    new_orders = MMOrders(RestingOrder(bp, bv) if bv > 0 else None, RestingOrder(sp, sv) if sv > 0 else None)
    acc = RewardAccumulator(int(inv_part), int(exec_part), 0)
    fills = [Fill(*map(int, row)) for row in buf[:nf]]
    return new_orders, replace(inv, J=int(J)), acc, fills


def process_interval(orders: MMOrders, inv: Inventory, log: EventLog, start: int, stop: int):
    """Apply events ``start .. stop - 1`` to the MM's orders.

    Returns ``(orders, inventory, RewardAccumulator)``.  Inventory reward per
    event uses the inventory after that event's fills, J_t * (m_t - m_{t-1});
    each fill earns v * (m_{t-1} - 2p) for buys and v * (2p - m_{t-1}) for sells.
    """
    new_orders, new_inv, acc, _ = simulate_interval(orders, inv, log, start, stop)
    return new_orders, new_inv, acc


def enforce_liquidation(inv: Inventory, spread_ticks: int, voluntary: bool):
    """Flatten the inventory with a market order costing half a spread per share.

    Returns ``(inventory, penalty)``; ``penalty`` is a non-negative amount in
    half-tick x share units to be *subtracted* from the liquidation part.
    Without ``voluntary`` nothing happens unless |J| has reached the limit.
    """
    if not voluntary and abs(inv.J) < inv.max_abs:
        return inv, 0
    return replace(inv, J=0), abs(inv.J) * spread_ticks


def total_reward(acc: RewardAccumulator) -> int:
    return acc.inventory_part + acc.execution_part + acc.liquidation_part


__all__ = [
    "Inventory", "RewardAccumulator", "Fill", "pro_rata_fill", "process_interval", "simulate_interval",
    "process_interval_nb", "enforce_liquidation", "total_reward", "PRO_RATA", "THROUGH", "CROSSED",
    "BID", "ASK", "TRADE",
]
