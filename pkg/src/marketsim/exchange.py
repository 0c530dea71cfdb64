"""Exchange agent: owns the order book and answers the message protocol."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .kernel import (
    Agent, CancelOrder, DepthReply, LimitOrderSubmit, MarketOrderSubmit, Message,
    OrderAccepted, OrderCancelled, OrderExecuted, PartialCancelOrder, QueryDepth,
    QuerySpread, SpreadReply,
)
from .lobster import LobsterEvent
from .orderbook import EmptyBookSideError, Order, OrderBook, Side

log = logging.getLogger(__name__)

_RECORD_TYPE = {"rest": 1, "reduce": 2, "cancel": 3, "fill": 4}


@dataclass
class QuoteHistory:
    """Best bid/ask after every change, in delivery order."""

    times: list[int] = field(default_factory=list)
    bids: list[int | None] = field(default_factory=list)
    asks: list[int | None] = field(default_factory=list)

    def record(self, t: int, bid: int | None, ask: int | None) -> None:
        if self.times and self.bids[-1] == bid and self.asks[-1] == ask:
            return
        self.times.append(t)
        self.bids.append(bid)
        self.asks.append(ask)

    def mids(self) -> list[float | None]:
        return [None if b is None or a is None else (b + a) / 2
                for b, a in zip(self.bids, self.asks)]


class LobsterRecorder:
    """Writes every book mutation as a LOBSTER message row plus its L2 snapshot."""

    def __init__(self, n_levels: int = 10):
        self.n_levels = n_levels
        self.events: list[LobsterEvent] = []
        self.snapshots: list[list[int]] = []
        self.book: OrderBook | None = None
        self.now = 0

    def __call__(self, kind: str, order: Order, qty: int) -> None:
        event_type = _RECORD_TYPE[kind]
        if kind == "reduce" and order.quantity == 0:
            event_type = 3
        self.events.append(LobsterEvent(self.now, event_type, order.order_id, qty,
                                        order.price, int(order.side)))
        self.snapshots.append(self.book.snapshot(self.n_levels))


class ExchangeAgent(Agent):
    def __init__(self, agent_id: int = 0, recorder: LobsterRecorder | None = None,
                 l2_levels: int | None = None):
        super().__init__(agent_id)
        self.recorder = recorder
        self.book = OrderBook(listener=recorder)
        if recorder is not None:
            recorder.book = self.book
        self.quotes = QuoteHistory()
        self.l2_levels = l2_levels
        # (time, snapshot) after every order-handling message when l2_levels is set
        self.l2_history: list[tuple[int, list[int]]] = []
        self.fills = []

    def _notify(self, owner: int, payload) -> None:
        agent = self.kernel.agents.get(owner)
        if agent is not None and agent.wants_notifications:
            self.send(owner, payload)

    def _report_fills(self, fills, taker_owner: int, taker_side: Side, taker_qty: int) -> None:
        book = self.book
        for f in fills:
            taker_qty -= f.quantity
            self.fills.append(f)
            maker = book.order_index.get(f.maker_order_id)
            remaining = 0 if maker is None else maker.quantity
            maker_owner = self._owners.get(f.maker_order_id, -1)
            self._notify(maker_owner, OrderExecuted(f.maker_order_id, -int(taker_side),
                                                    f.price, f.quantity, remaining))
            self._notify(taker_owner, OrderExecuted(f.taker_order_id, int(taker_side),
                                                    f.price, f.quantity, taker_qty))

    def kernel_starting(self, kernel) -> None:
        super().kernel_starting(kernel)
        self._owners: dict[int, int] = {}

    def receive(self, now: int, message: Message) -> None:
        p = message.payload
        book = self.book
        if self.recorder is not None:
            self.recorder.now = now
        kind = type(p)
        if kind is LimitOrderSubmit:
            order = Order(p.order_id, Side(p.side), p.price, p.quantity, now, message.sender)
            self._owners[p.order_id] = message.sender
            fills, rested = book.submit_limit(order)
            self._report_fills(fills, message.sender, order.side, p.quantity)
            self._notify(message.sender, OrderAccepted(p.order_id, rested))
        elif kind is MarketOrderSubmit:
            self._owners[p.order_id] = message.sender
            fills = book.submit_market(Side(p.side), p.quantity, p.order_id, now)
            self._report_fills(fills, message.sender, Side(p.side), p.quantity)
            filled = sum(f.quantity for f in fills)
            if filled < p.quantity:
                log.debug("market order %d unfilled remainder %d discarded",
                          p.order_id, p.quantity - filled)
        elif kind is CancelOrder:
            qty = book.cancel(p.order_id)
            self._notify(message.sender, OrderCancelled(p.order_id, qty))
        elif kind is PartialCancelOrder:
            qty = book.partial_cancel(p.order_id, p.quantity)
            self._notify(message.sender, OrderCancelled(p.order_id, qty))
        elif kind is QuerySpread:
            self.send(message.sender, SpreadReply(book.best_bid(), book.best_size(Side.BUY),
                                                  book.best_ask(), book.best_size(Side.SELL)))
            return
        elif kind is QueryDepth:
            side = Side(p.side)
            try:
                levels, total = book.depth_within(side, p.fraction)
                inside = levels[0][0]
            except EmptyBookSideError:
                levels, total, inside = [], 0, None
            self.send(message.sender, DepthReply(int(side), tuple(levels), total, inside))
            return
        else:
            log.warning("exchange ignoring %s", message.describe())
            return
        self.quotes.record(now, book.best_bid(), book.best_ask())
        if self.l2_levels:
            self.l2_history.append((now, book.snapshot(self.l2_levels)))
