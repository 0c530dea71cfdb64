import io

import pytest

from marketsim.kernel import CancelOrder, LimitOrderSubmit, PartialCancelOrder
from marketsim.lobster import (
    OPENING_ID_BASE, CrossedSnapshotError, event_to_action, LobsterEvent, LobsterFormatError, format_time,
    generate_synthetic_stream, parse_messages, parse_orderbook, parse_time,
    reconstruct_opening_book, stream_stats, write_messages,
)
from marketsim.orderbook import EMPTY_ASK_PRICE, EMPTY_BID_PRICE, Order, OrderBook, Side


@pytest.fixture(scope="module")
def hour_stream():
    return generate_synthetic_stream(0, 3600)


class TestParse:
    def test_single_row(self):
        (ev,) = parse_messages(b"34200.000000001,1,42,100,1000100,1\n")
        assert ev == LobsterEvent(34_200_000_000_001, 1, 42, 100, 1_000_100, 1)

    def test_empty_input(self):
        assert parse_messages(b"") == []

    def test_wrong_column_count_names_line(self):
        data = b"34200.0,1,1,100,1000100,1\n34200.1,1,2,100,1000100\n"
        with pytest.raises(LobsterFormatError) as err:
            parse_messages(data)
        assert err.value.line == 2

    @pytest.mark.parametrize("row", [b"34200.0,9,1,100,100,1", b"34200.0,1,1,100,100,0",
                                     b"abc,1,1,100,100,1"])
    def test_bad_fields(self, row):
        with pytest.raises(LobsterFormatError):
            parse_messages(row)

    def test_sub_ns_rounds_half_even(self):
        assert parse_time("0.0000000005") == 0
        assert parse_time("0.0000000015") == 2

    def test_backwards_time_warns(self):
        with pytest.warns(UserWarning):
            parse_messages(b"2.0,1,1,1,1,1\n1.0,1,2,1,1,1\n")

    def test_text_and_binary_streams(self):
        text = "1.5,3,7,10,200,-1\n"
        assert parse_messages(io.StringIO(text)) == parse_messages(io.BytesIO(text.encode()))

    def test_write_round_trip(self, tmp_path):
        events = [LobsterEvent(34_200_123_456_789, 1, 5, 100, 1_000_100, -1),
                  LobsterEvent(34_201_000_000_000, 4, 5, 40, 1_000_100, -1)]
        path = tmp_path / "m.csv"
        write_messages(events, path)
        assert parse_messages(path) == events
        assert format_time(34_200_000_000_001) == "34200.000000001"

    def test_orderbook_columns(self):
        with pytest.raises(LobsterFormatError):
            parse_orderbook(b"1,2,3\n")


def _rebuild(row, levels):
    book = OrderBook()
    for order in reconstruct_opening_book(row):
        book.submit_limit(order)
    return book, book.snapshot(levels)


class TestOpeningBook:
    def test_five_levels_round_trip(self):
        row = []
        for i in range(1, 6):
            row += [100000 + 100 * i, 10 * i, 100000 - 100 * i, 20 * i]
        orders = reconstruct_opening_book(row)
        assert len(orders) == 10
        assert [o.side for o in orders[:2]] == [Side.SELL, Side.BUY]
        assert orders[0].order_id == OPENING_ID_BASE
        book, snap = _rebuild(row, 5)
        assert snap == row

    def test_all_dummy_row(self):
        row = [EMPTY_ASK_PRICE, 0, EMPTY_BID_PRICE, 0] * 3
        assert reconstruct_opening_book(row) == []
        assert _rebuild(row, 3)[1] == row

    def test_one_sided_row(self):
        row = [100100, 5, EMPTY_BID_PRICE, 0, 100200, 6, EMPTY_BID_PRICE, 0]
        assert _rebuild(row, 2)[1] == row

    def test_crossed_row(self):
        with pytest.raises(CrossedSnapshotError):
            reconstruct_opening_book([100000, 5, 100100, 5])

    def test_custom_allocator(self):
        ids = iter([7, 8])
        orders = reconstruct_opening_book([100100, 1, 99900, 1], ids)
        assert [o.order_id for o in orders] == [7, 8]


class TestEventToAction:
    def ev(self, etype, size=40):
        return LobsterEvent(0, etype, 9, size, 100100, -1)

    def test_submission(self):
        assert event_to_action(self.ev(1)) == LimitOrderSubmit(9, -1, 100100, 40)

    def test_partial_cancel(self):
        assert event_to_action(self.ev(2)) == PartialCancelOrder(9, 40)

    def test_deletion(self):
        assert event_to_action(self.ev(3)) == CancelOrder(9)

    def test_visible_execution_reduces(self):
        assert event_to_action(self.ev(4)) == PartialCancelOrder(9, 40)

    @pytest.mark.parametrize("etype", [5, 6, 7])
    def test_no_ops(self, etype):
        assert event_to_action(self.ev(etype)) is None


class TestStats:
    def test_empty(self):
        s = stream_stats([])
        assert (s.total_events, s.unique_order_ids, s.new_limits, s.cancel_count) == (0, 0, 0, 0)
        assert s.mean_interarrival_new_ms == 0.0

    def test_three_submissions(self):
        s = stream_stats([LobsterEvent(k * 10**9, 1, k, 1, 1, 1) for k in range(3)])
        assert s.mean_interarrival_new_ms == 1000.0
        assert s.new_buy_limits == 3 and s.new_sell_limits == 0

    def test_counts_add_under_concatenation(self, hour_stream):
        events = hour_stream[1]
        a, b = events[:30000], events[30000:]
        whole, sa, sb = stream_stats(events), stream_stats(a), stream_stats(b)
        for name in ("total_events", "new_buy_limits", "new_sell_limits", "cancel_count"):
            assert getattr(whole, name) == getattr(sa, name) + getattr(sb, name)


class TestGenerator:
    def test_repeatable(self):
        assert generate_synthetic_stream(3, 20) == generate_synthetic_stream(3, 20)
        assert generate_synthetic_stream(3, 20) != generate_synthetic_stream(4, 20)

    def test_hour_counts_near_targets(self, hour_stream):
        s = stream_stats(hour_stream[1])
        assert abs(s.new_limits - 41554) <= 0.1 * 41554
        assert abs(s.cancel_count - 38791) <= 0.1 * 38791

    def test_events_are_replayable(self):
        row, events = generate_synthetic_stream(1, 300)
        book = OrderBook()
        for order in reconstruct_opening_book(row):
            book.submit_limit(order)
        for ev in events:
            assert ev.order_id in book.order_index or ev.event_type == 1
            action = event_to_action(ev)
            if isinstance(action, LimitOrderSubmit):
                book.submit_limit(Order(ev.order_id, Side(ev.direction), ev.price, ev.size, ev.time))
            elif isinstance(action, PartialCancelOrder):
                assert book.partial_cancel(ev.order_id, ev.size) == ev.size
            else:
                assert book.cancel(ev.order_id) > 0
            book.check_invariants()
        assert book.best_bid() is not None and book.best_ask() is not None
        times = [ev.time for ev in events]
        assert times == sorted(times)
