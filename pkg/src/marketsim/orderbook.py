"""Single-instrument limit order book with price/time priority.

Prices are integers in 1e-4 currency units. Within a price level, orders are
ranked by entry time; orders entered at the same nanosecond are ranked
larger-resting-size first, then by arrival.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction
from typing import Callable, NamedTuple

# LOBSTER dummy values for missing snapshot levels
EMPTY_ASK_PRICE = 9999999999
EMPTY_BID_PRICE = -9999999999


class Side(IntEnum):
    BUY = 1
    SELL = -1

    @property
    def opposite(self) -> "Side":
        return Side(-self)


class DuplicateOrderError(ValueError):
    pass


class EmptyBookSideError(LookupError):
    """Depth was requested from a side with no resting orders."""


@dataclass(slots=True)
class Order:
    order_id: int
    side: Side
    price: int
    quantity: int
    entered_at: int = 0
    owner: int = -1
    # set when the order joins a price level
    seq: int = -1
    rest_size: int = 0

    def __post_init__(self):
        if self.quantity <= 0:
            raise ValueError(f"order {self.order_id}: quantity must be positive")
        self.side = Side(self.side)

    @property
    def priority(self) -> tuple[int, int, int]:
        return (self.entered_at, -self.rest_size, self.seq)


class Fill(NamedTuple):
    taker_order_id: int
    maker_order_id: int
    price: int
    quantity: int
    at: int


class PriceLevel:
    __slots__ = ("price", "orders", "volume")

    def __init__(self, price: int):
        self.price = price
        self.orders: list[Order] = []
        self.volume = 0

    def add(self, order: Order) -> None:
        orders = self.orders
        if not orders or orders[-1].priority < order.priority:
            orders.append(order)
        else:
            bisect.insort(orders, order, key=lambda o: o.priority)
        self.volume += order.quantity

    def remove(self, order: Order) -> None:
        self.orders.remove(order)
        self.volume -= order.quantity

    def __repr__(self) -> str:
        return f"PriceLevel({self.price}, volume={self.volume}, n={len(self.orders)})"


# listener(kind, order, quantity): kind is "rest", "fill", "cancel" or "reduce";
# called after the mutation has been applied to the book
BookListener = Callable[[str, Order, int], None]


class OrderBook:
    def __init__(self, listener: BookListener | None = None):
        self.levels: dict[Side, dict[int, PriceLevel]] = {Side.BUY: {}, Side.SELL: {}}
        # ascending price lists; bids are read from the end
        self._prices: dict[Side, list[int]] = {Side.BUY: [], Side.SELL: []}
        self.order_index: dict[int, Order] = {}
        self._seen_ids: set[int] = set()
        self._seq = 0
        self.listener = listener

    # -- queries -------------------------------------------------------------

    def best_bid(self) -> int | None:
        p = self._prices[Side.BUY]
        return p[-1] if p else None

    def best_ask(self) -> int | None:
        p = self._prices[Side.SELL]
        return p[0] if p else None

    def best_size(self, side: Side) -> int:
        best = self.best_bid() if side == Side.BUY else self.best_ask()
        return 0 if best is None else self.levels[side][best].volume

    def mid_price(self) -> Fraction | None:
        bid, ask = self.best_bid(), self.best_ask()
        if bid is None or ask is None:
            return None
        return Fraction(bid + ask, 2)

    def spread(self) -> int | None:
        bid, ask = self.best_bid(), self.best_ask()
        if bid is None or ask is None:
            return None
        return ask - bid

    def price_levels(self, side: Side) -> list[PriceLevel]:
        """Levels best-first."""
        side = Side(side)
        prices = self._prices[side]
        ordered = reversed(prices) if side == Side.BUY else prices
        return [self.levels[side][p] for p in ordered]

    def depth_within(self, side: Side, fraction) -> tuple[list[tuple[int, int]], int]:
        """Aggregate volume on ``side`` within ``fraction`` of its inside price.

        The band edge is inclusive. ``fraction`` is converted through its decimal
        string so 0.01 means exactly 1/100.
        """
        side = Side(side)
        frac = Fraction(str(fraction))
        if frac < 0:
            raise ValueError("fraction must be non-negative")
        levels = self.price_levels(side)
        if not levels:
            raise EmptyBookSideError(f"no resting {side.name} orders")
        inside = levels[0].price
        if side == Side.SELL:
            limit = inside * (1 + frac)
            chosen = [(lv.price, lv.volume) for lv in levels if lv.price <= limit]
        else:
            limit = inside * (1 - frac)
            chosen = [(lv.price, lv.volume) for lv in levels if lv.price >= limit]
        return chosen, sum(v for _, v in chosen)

    def snapshot(self, n_levels: int) -> list[int]:
        """LOBSTER orderbook row: ask_price, ask_size, bid_price, bid_size per level."""
        if n_levels < 1:
            raise ValueError("n_levels must be >= 1")
        asks = self.price_levels(Side.SELL)[:n_levels]
        bids = self.price_levels(Side.BUY)[:n_levels]
        row = []
        for i in range(n_levels):
            if i < len(asks):
                row += [asks[i].price, asks[i].volume]
            else:
                row += [EMPTY_ASK_PRICE, 0]
            if i < len(bids):
                row += [bids[i].price, bids[i].volume]
            else:
                row += [EMPTY_BID_PRICE, 0]
        return row

    def resting_orders(self) -> list[Order]:
        return list(self.order_index.values())

    def __contains__(self, order_id: int) -> bool:
        return order_id in self.order_index

    # -- mutations -----------------------------------------------------------

    def _notify(self, kind: str, order: Order, qty: int) -> None:
        if self.listener is not None:
            self.listener(kind, order, qty)

    def _claim_id(self, order_id: int) -> None:
        if order_id in self._seen_ids:
            raise DuplicateOrderError(f"duplicate order id {order_id}")
        self._seen_ids.add(order_id)

    def _match(self, taker_id: int, side: Side, limit: int | None, quantity: int,
               at: int) -> tuple[list[Fill], int]:
        """Consume opposite levels best-first; ``limit=None`` means no price cap."""
        opp = side.opposite
        prices = self._prices[opp]
        book = self.levels[opp]
        fills: list[Fill] = []
        while quantity > 0 and prices:
            best = prices[-1] if opp == Side.BUY else prices[0]
            if limit is not None and (best > limit if side == Side.BUY else best < limit):
                break
            level = book[best]
            while quantity > 0 and level.orders:
                maker = level.orders[0]
                qty = min(quantity, maker.quantity)
                maker.quantity -= qty
                level.volume -= qty
                quantity -= qty
                if maker.quantity == 0:
                    level.orders.pop(0)
                    del self.order_index[maker.order_id]
                    if not level.orders:
                        del book[best]
                        if opp == Side.BUY:
                            prices.pop()
                        else:
                            prices.pop(0)
                fills.append(Fill(taker_id, maker.order_id, best, qty, at))
                self._notify("fill", maker, qty)
        return fills, quantity

    def _rest(self, order: Order) -> None:
        order.seq = self._seq
        self._seq += 1
        order.rest_size = order.quantity
        book = self.levels[order.side]
        level = book.get(order.price)
        if level is None:
            level = book[order.price] = PriceLevel(order.price)
            bisect.insort(self._prices[order.side], order.price)
        level.add(order)
        self.order_index[order.order_id] = order
        self._notify("rest", order, order.quantity)

    def submit_limit(self, order: Order) -> tuple[list[Fill], int]:
        if order.price <= 0:
            raise ValueError(f"order {order.order_id}: limit price must be positive")
        self._claim_id(order.order_id)
        fills, remaining = self._match(order.order_id, order.side, order.price,
                                       order.quantity, order.entered_at)
        if remaining:
            order.quantity = remaining
            self._rest(order)
        return fills, remaining

    def submit_market(self, side: Side, quantity: int, order_id: int | None = None,
                      at: int = 0) -> list[Fill]:
        """Market orders never rest; an unfilled remainder is dropped."""
        if quantity <= 0:
            raise ValueError("quantity must be positive")
        if order_id is None:
            order_id = -1
        else:
            self._claim_id(order_id)
        fills, _ = self._match(order_id, Side(side), None, quantity, at)
        return fills

    def _remove(self, order: Order) -> None:
        book = self.levels[order.side]
        level = book[order.price]
        level.remove(order)
        del self.order_index[order.order_id]
        if not level.orders:
            del book[order.price]
            prices = self._prices[order.side]
            del prices[bisect.bisect_left(prices, order.price)]

    def cancel(self, order_id: int) -> int:
        """Remove a resting order; unknown or already-filled ids return 0."""
        order = self.order_index.get(order_id)
        if order is None:
            return 0
        qty = order.quantity
        self._remove(order)
        self._notify("cancel", order, qty)
        return qty

    def partial_cancel(self, order_id: int, quantity: int) -> int:
        if quantity <= 0:
            raise ValueError("quantity must be positive")
        order = self.order_index.get(order_id)
        if order is None:
            return 0
        if quantity >= order.quantity:
            return self.cancel(order_id)
        order.quantity -= quantity
        self.levels[order.side][order.price].volume -= quantity
        self._notify("reduce", order, quantity)
        return quantity

    def check_invariants(self) -> None:
        bid, ask = self.best_bid(), self.best_ask()
        assert bid is None or ask is None or bid < ask, f"crossed book {bid} >= {ask}"
        n = 0
        for side in (Side.BUY, Side.SELL):
            assert sorted(self.levels[side]) == self._prices[side]
            for price, level in self.levels[side].items():
                assert level.orders and level.volume == sum(o.quantity for o in level.orders)
                for o in level.orders:
                    assert o.price == price and o.side == side and o.quantity > 0
                    assert self.order_index[o.order_id] is o
                    n += 1
        assert n == len(self.order_index)
