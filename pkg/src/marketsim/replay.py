"""Market replay agent: plays historical order flow into the exchange.

The agent never looks at market state. It submits the reconstructed opening
book at the first event time at or after the open, then every historical
event once simulated time reaches the event's timestamp.
"""

from __future__ import annotations

import logging
from typing import Sequence

from .kernel import Agent, LimitOrderSubmit
from .lobster import LobsterEvent, event_to_action, opening_ids, reconstruct_opening_book

log = logging.getLogger(__name__)


class ReplayConfigError(ValueError):
    pass


class MarketReplayAgent(Agent):
    wants_notifications = False

    def __init__(self, agent_id: int, exchange_id: int, opening_row: Sequence[int] | None,
                 events: Sequence[LobsterEvent], market_open: int, market_close: int | None = None):
        super().__init__(agent_id)
        if opening_row is None:
            raise ReplayConfigError("market replay needs an opening orderbook snapshot")
        self.exchange_id = exchange_id
        self.opening = reconstruct_opening_book(opening_row, opening_ids())
        self.market_open = market_open
        self.market_close = market_close
        self.events = [ev for ev in events if ev.time >= market_open
                       and (market_close is None or ev.time <= market_close)]
        self.cursor = 0
        self.opened = False
        self.skipped: list[LobsterEvent] = []
        self.sent = 0

    def on_open(self) -> None:
        for order in self.opening:
            self.send(self.exchange_id, LimitOrderSubmit(order.order_id, int(order.side),
                                                         order.price, order.quantity))
        self.sent += len(self.opening)
        self.opened = True

    def wakeup(self, now: int) -> None:
        if not self.opened:
            first = self.events[0].time if self.events else self.market_open
            if now < first:
                self.set_wakeup(first)
                return
            self.on_open()
        self.on_wakeup(now)

    def on_wakeup(self, now: int) -> None:
        events = self.events
        i = self.cursor
        while i < len(events) and events[i].time <= now:
            action = event_to_action(events[i])
            if action is None:
                self.skipped.append(events[i])
            else:
                self.send(self.exchange_id, action)
                self.sent += 1
            i += 1
        self.cursor = i
        if i < len(events):
            self.set_wakeup(events[i].time)
