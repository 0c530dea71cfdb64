"""Naive reference matcher: a flat list rescanned for every single match.

Independent of ``marketsim.orderbook``; used as the oracle in tests.
"""

BUY, SELL = 1, -1


class ReferenceBook:
    def __init__(self):
        self.resting = []  # dicts: id, side, price, qty, t, size_at_rest, arrival
        self.arrivals = 0
        self.used_ids = set()

    def _rank(self, o):
        # better price first, then earlier entry, then larger resting size, then arrival
        price_key = -o["price"] if o["side"] == BUY else o["price"]
        return (price_key, o["t"], -o["size_at_rest"], o["arrival"])

    def _best_opposite(self, side, limit):
        best = None
        for o in self.resting:
            if o["side"] == side:
                continue
            if limit is not None:
                if side == BUY and o["price"] > limit:
                    continue
                if side == SELL and o["price"] < limit:
                    continue
            if best is None or self._rank(o) < self._rank(best):
                best = o
        return best

    def _match(self, taker_id, side, limit, qty, t):
        fills = []
        while qty > 0:
            maker = self._best_opposite(side, limit)
            if maker is None:
                break
            q = min(qty, maker["qty"])
            maker["qty"] -= q
            qty -= q
            fills.append((taker_id, maker["id"], maker["price"], q, t))
            if maker["qty"] == 0:
                self.resting.remove(maker)
        return fills, qty

    def limit(self, oid, side, price, qty, t):
        if oid in self.used_ids:
            raise ValueError("duplicate")
        self.used_ids.add(oid)
        fills, rem = self._match(oid, side, price, qty, t)
        if rem:
            self.resting.append(dict(id=oid, side=side, price=price, qty=rem, t=t,
                                     size_at_rest=rem, arrival=self.arrivals))
            self.arrivals += 1
        return fills, rem

    def market(self, oid, side, qty, t):
        self.used_ids.add(oid)
        return self._match(oid, side, None, qty, t)[0]

    def cancel(self, oid):
        for o in self.resting:
            if o["id"] == oid:
                self.resting.remove(o)
                return o["qty"]
        return 0

    def partial_cancel(self, oid, qty):
        for o in self.resting:
            if o["id"] == oid:
                q = min(qty, o["qty"])
                o["qty"] -= q
                if o["qty"] == 0:
                    self.resting.remove(o)
                return q
        return 0

    def state(self):
        """Per side, resting (id, price, qty) in priority order."""
        out = {}
        for side in (BUY, SELL):
            orders = sorted((o for o in self.resting if o["side"] == side), key=self._rank)
            out[side] = [(o["id"], o["price"], o["qty"]) for o in orders]
        return out
