"""LOBSTER message/orderbook files, opening-book reconstruction, stream stats,
and a synthetic stream generator used in place of proprietary data.

Message rows are ``time,type,order_id,size,price,direction`` with time in
decimal seconds after midnight and prices in 1e-4 currency units. Orderbook
rows repeat ``ask_price,ask_size,bid_price,bid_size`` per level.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
import os
import warnings
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal, InvalidOperation
from typing import Callable, Iterable, Iterator, Sequence, TextIO

import numpy as np

from .kernel import NS_PER_SECOND, CancelOrder, LimitOrderSubmit, PartialCancelOrder
from .orderbook import EMPTY_ASK_PRICE, EMPTY_BID_PRICE, Order, OrderBook, Side

log = logging.getLogger(__name__)

SUBMISSION, PARTIAL_CANCEL, DELETION, EXECUTION, HIDDEN_EXECUTION, CROSS, HALT = range(1, 8)
CANCEL_TYPES = (PARTIAL_CANCEL, DELETION)

# synthetic opening orders get ids from here up, above any realistic exchange id
OPENING_ID_BASE = 10**12

_SENTINELS = (EMPTY_ASK_PRICE, EMPTY_BID_PRICE)


class LobsterFormatError(ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line


class CrossedSnapshotError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class LobsterEvent:
    time: int  # ns since midnight
    event_type: int
    order_id: int
    size: int
    price: int
    direction: int

    def to_row(self) -> list[str]:
        return [format_time(self.time), str(self.event_type), str(self.order_id),
                str(self.size), str(self.price), str(self.direction)]


def parse_time(text: str) -> int:
    """Decimal seconds to integer ns, rounding half-even below 1 ns."""
    ns = (Decimal(text) * NS_PER_SECOND).quantize(Decimal(1), rounding=ROUND_HALF_EVEN)
    return int(ns)


def format_time(ns: int) -> str:
    return f"{ns // NS_PER_SECOND}.{ns % NS_PER_SECOND:09d}"


def _open_text(source) -> tuple[TextIO, bool]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline=""), True
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode()), True
    if isinstance(source, io.BufferedIOBase) or hasattr(source, "mode") and "b" in source.mode:
        return io.TextIOWrapper(source, newline=""), False
    return source, False


def _iter_messages(fh: TextIO) -> Iterator[LobsterEvent]:
    last = None
    for lineno, row in enumerate(csv.reader(fh), start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 6:
            raise LobsterFormatError(lineno, f"expected 6 columns, got {len(row)}")
        try:
            t = parse_time(row[0])
            etype, oid, size, price, direction = (int(x) for x in row[1:])
        except (InvalidOperation, ValueError) as exc:
            raise LobsterFormatError(lineno, f"bad field: {exc}") from None
        if not 1 <= etype <= 7:
            raise LobsterFormatError(lineno, f"unknown event type {etype}")
        if direction not in (1, -1):
            raise LobsterFormatError(lineno, f"direction must be 1 or -1, got {direction}")
        if last is not None and t < last:
            warnings.warn(f"line {lineno}: time goes backwards", stacklevel=3)
        last = t
        yield LobsterEvent(t, etype, oid, size, price, direction)


def parse_messages(source) -> list[LobsterEvent]:
    """Parse a message file given a path, bytes, or an open text/binary stream."""
    fh, close = _open_text(source)
    try:
        return list(_iter_messages(fh))
    finally:
        if close:
            fh.close()


def write_messages(events: Iterable[LobsterEvent], dest) -> None:
    def _write(fh):
        w = csv.writer(fh, lineterminator="\n")
        for ev in events:
            w.writerow(ev.to_row())

    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", newline="") as fh:
            _write(fh)
    else:
        _write(dest)


def parse_orderbook(source) -> list[list[int]]:
    fh, close = _open_text(source)
    try:
        rows = []
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) % 4:
                raise LobsterFormatError(lineno, f"column count {len(row)} not a multiple of 4")
            try:
                rows.append([int(x) for x in row])
            except ValueError as exc:
                raise LobsterFormatError(lineno, str(exc)) from None
        return rows
    finally:
        if close:
            fh.close()


def write_orderbook(rows: Iterable[Sequence[int]], dest) -> None:
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerows(rows)


def snapshot_levels(row: Sequence[int]) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    """Split a row into (asks, bids) lists of (price, size), skipping dummy levels."""
    asks, bids = [], []
    for i in range(0, len(row), 4):
        ap, asz, bp, bsz = row[i:i + 4]
        if ap not in _SENTINELS and asz > 0:
            asks.append((ap, asz))
        if bp not in _SENTINELS and bsz > 0:
            bids.append((bp, bsz))
    return asks, bids


def opening_ids() -> Iterator[int]:
    return itertools.count(OPENING_ID_BASE)


def reconstruct_opening_book(row: Sequence[int],
                             id_allocator: Iterator[int] | Callable[[], int] | None = None,
                             entered_at: int = 0) -> list[Order]:
    """One limit order per populated level, ask then bid for each level in turn."""
    if id_allocator is None:
        id_allocator = opening_ids()
    next_id = id_allocator if callable(id_allocator) else id_allocator.__next__
    asks, bids = snapshot_levels(row)
    if asks and bids and bids[0][0] >= asks[0][0]:
        raise CrossedSnapshotError(f"best bid {bids[0][0]} >= best ask {asks[0][0]}")
    orders = []
    for i in range(max(len(asks), len(bids))):
        if i < len(asks):
            orders.append(Order(next_id(), Side.SELL, asks[i][0], asks[i][1], entered_at))
        if i < len(bids):
            orders.append(Order(next_id(), Side.BUY, bids[i][0], bids[i][1], entered_at))
    return orders


def event_to_action(ev: LobsterEvent):
    """Translate a historical event into an exchange payload, or None for no-ops.

    Visible executions become partial cancellations of the resting order so the
    replay removes the liquidity without printing a trade.
    """
    t = ev.event_type
    if t == SUBMISSION:
        return LimitOrderSubmit(ev.order_id, ev.direction, ev.price, ev.size)
    if t in (PARTIAL_CANCEL, EXECUTION):
        return PartialCancelOrder(ev.order_id, ev.size)
    if t == DELETION:
        return CancelOrder(ev.order_id)
    log.debug("no book action for event type %d (order %d)", t, ev.order_id)
    return None


@dataclass(frozen=True)
class StreamStats:
    total_events: int = 0
    unique_order_ids: int = 0
    new_buy_limits: int = 0
    new_sell_limits: int = 0
    mean_interarrival_new_ms: float = 0.0
    cancel_count: int = 0
    mean_interarrival_cancel_ms: float = 0.0

    @property
    def new_limits(self) -> int:
        return self.new_buy_limits + self.new_sell_limits


def _mean_gap_ms(times: list[int]) -> float:
    if len(times) < 2:
        return 0.0
    return (times[-1] - times[0]) / (len(times) - 1) / 1e6


def stream_stats(events: Iterable[LobsterEvent]) -> StreamStats:
    total = 0
    ids = set()
    buys = sells = 0
    new_times, cancel_times = [], []
    for ev in events:
        total += 1
        ids.add(ev.order_id)
        if ev.event_type == SUBMISSION:
            new_times.append(ev.time)
            if ev.direction == 1:
                buys += 1
            else:
                sells += 1
        elif ev.event_type in CANCEL_TYPES:
            cancel_times.append(ev.time)
    return StreamStats(total, len(ids), buys, sells, _mean_gap_ms(new_times),
                       len(cancel_times), _mean_gap_ms(cancel_times))


# --- synthetic data ---------------------------------------------------------

# per-second rates implied by one hour containing 41,554 new limits,
# 38,791 cancellations and 6,270 other events
DEFAULT_RATES = {"limit": 41554 / 3600, "cancel": 38791 / 3600, "execution": 6270 / 3600}


def generate_synthetic_stream(seed: int, duration: float, rates: dict[str, float] | None = None,
                              *, start: int = 34200 * NS_PER_SECOND, mid: int = 100_000,
                              tick: int = 100, n_levels: int = 10, lot: int = 100,
                              partial_cancel_prob: float = 0.2, placement_p: float = 0.2,
                              improve_prob: float = 0.2,
                              ) -> tuple[list[int], list[LobsterEvent]]:
    """Poisson order flow around an evolving book.

    Returns an opening orderbook row with ``n_levels`` per side and the message
    events that follow it, starting at ``start`` ns and lasting ``duration``
    seconds. Cancels and executions target orders resting in the generator's
    own book, which is seeded through ``reconstruct_opening_book`` so the
    replay allocates the same opening ids.
    """
    rates = dict(DEFAULT_RATES if rates is None else rates)
    if any(r <= 0 for r in rates.values()):
        raise ValueError("rates must be positive")
    rng = np.random.default_rng(seed)
    kinds = list(rates)
    total_rate = sum(rates.values())
    probs = np.array([rates[k] for k in kinds]) / total_rate

    row = []
    # deeper levels hold more shares, as in typical opening books
    for i in range(1, n_levels + 1):
        row += [mid + tick * i, lot * (int(rng.integers(1, 6)) + 2 * (i - 1)),
                mid - tick * i, lot * (int(rng.integers(1, 6)) + 2 * (i - 1))]

    book = OrderBook()
    # resting ids per side, for O(1) uniform choice with swap-removal
    pools: dict[Side, list[int]] = {Side.BUY: [], Side.SELL: []}
    where: dict[int, int] = {}

    def track(order_id: int, side: Side) -> None:
        where[order_id] = len(pools[side])
        pools[side].append(order_id)

    def untrack(order_id: int, side: Side) -> None:
        pool = pools[side]
        i = where.pop(order_id)
        last = pool.pop()
        if last != order_id:
            pool[i] = last
            where[last] = i

    for order in reconstruct_opening_book(row, opening_ids(), entered_at=start):
        book.submit_limit(order)
        track(order.order_id, order.side)

    events: list[LobsterEvent] = []
    next_id = 1
    t = float(start)
    end = start + duration * NS_PER_SECOND

    def emit(ev: LobsterEvent) -> None:
        action = event_to_action(ev)
        side = Side(ev.direction)
        if isinstance(action, LimitOrderSubmit):
            book.submit_limit(Order(action.order_id, side, action.price, action.quantity, ev.time))
            track(ev.order_id, side)
        else:
            if isinstance(action, PartialCancelOrder):
                book.partial_cancel(action.order_id, action.quantity)
            else:
                book.cancel(action.order_id)
            if ev.order_id not in book.order_index:
                untrack(ev.order_id, side)
        events.append(ev)

    while True:
        t += rng.exponential(NS_PER_SECOND / total_rate)
        if t >= end:
            break
        now = int(t)
        kind = kinds[rng.choice(len(kinds), p=probs)]
        side = Side.BUY if rng.random() < 0.5 else Side.SELL
        depth = int(rng.geometric(placement_p)) - 1
        size = lot * int(rng.integers(1, 6))
        u = rng.random()
        if kind != "limit" and len(pools[side]) < 3:
            side = side.opposite
            if len(pools[side]) < 3:
                kind = "limit"
        if kind == "limit":
            bid, ask = book.best_bid(), book.best_ask()
            if bid is None:
                bid = (ask if ask is not None else mid + tick) - 2 * tick
            if ask is None:
                ask = bid + 2 * tick
            # mostly at or behind the same-side quote, sometimes inside the spread
            improve = u < improve_prob and ask - bid > tick
            if side == Side.BUY:
                price = bid + tick if improve else bid - tick * depth
            else:
                price = ask - tick if improve else ask + tick * depth
            price = max(price, tick)
            if not improve:
                size *= 1 + depth  # orders resting further out are larger
            emit(LobsterEvent(now, SUBMISSION, next_id, size, price, int(side)))
            next_id += 1
        elif kind == "cancel":
            pool = pools[side]
            order = book.order_index[pool[int(u * len(pool))]]
            if order.quantity > 1 and rng.random() < partial_cancel_prob:
                qty = int(rng.integers(1, order.quantity))
                emit(LobsterEvent(now, PARTIAL_CANCEL, order.order_id, qty, order.price, int(side)))
            else:
                emit(LobsterEvent(now, DELETION, order.order_id, order.quantity, order.price,
                                  int(side)))
        else:
            order = book.price_levels(side)[0].orders[0]
            qty = min(order.quantity, size)
            emit(LobsterEvent(now, EXECUTION, order.order_id, qty, order.price, int(side)))
    return row, events
