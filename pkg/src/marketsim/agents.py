"""Zero-intelligence background traders and the experimental impact agents."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from .kernel import (
    Agent, CancelOrder, DepthReply, LimitOrderSubmit, MarketOrderSubmit, Message,
    OrderAccepted, OrderCancelled, OrderExecuted, QueryDepth, QuerySpread, SpreadReply,
    ns_to_units, units_to_ns,
)
from .oracle import FundamentalParams, FundamentalSeries
from .orderbook import Side

log = logging.getLogger(__name__)

# order ids are agent_id * ORDER_ID_STRIDE + local counter
ORDER_ID_STRIDE = 10**7


@dataclass(frozen=True)
class FundamentalBelief:
    mean: float
    variance: float
    last_update: int = 0


def belief_update(belief: FundamentalBelief, observation: float, elapsed_units: int,
                  obs_noise_sq: float, fparams: FundamentalParams) -> FundamentalBelief:
    """Propagate the belief through the mean-reverting dynamics, then merge a
    noisy observation by precision weighting."""
    if elapsed_units < 0:
        raise ValueError("elapsed_units must be non-negative")
    keep = 1.0 - fparams.kappa
    decay = keep ** elapsed_units
    mean = (1.0 - decay) * fparams.r_bar + decay * belief.mean
    if keep == 1.0:
        shock = elapsed_units * fparams.sigma_shock_sq
    else:
        # finite geometric sum of keep**(2i), i < elapsed_units
        shock = fparams.sigma_shock_sq * (1.0 - keep ** (2 * elapsed_units)) / (1.0 - keep * keep)
    variance = decay * decay * belief.variance + shock
    last = belief.last_update + elapsed_units
    if math.isinf(obs_noise_sq):
        return FundamentalBelief(mean, variance, last)
    total = variance + obs_noise_sq
    if total == 0:
        # both exact: the observation is the truth
        return FundamentalBelief(float(observation), 0.0, last)
    weight = variance / total
    mean += weight * (observation - mean)
    variance = variance * obs_noise_sq / total
    return FundamentalBelief(mean, variance, last)


def project_final(belief: FundamentalBelief, now: int, fparams: FundamentalParams) -> int:
    remaining = fparams.horizon_T - now
    decay = (1.0 - fparams.kappa) ** remaining
    return int(round((1.0 - decay) * fparams.r_bar + decay * belief.mean))


@dataclass
class ZIParams:
    surplus_min: int = 0
    surplus_max: int = 2000
    eta: float = 1.0
    obs_noise_sq: float = 1e6
    arrival_rate: float = 0.05
    q_max: int = 10
    private_values: Sequence[int] = ()

    def __post_init__(self):
        if not 0 <= self.surplus_min <= self.surplus_max:
            raise ValueError("need 0 <= surplus_min <= surplus_max")
        if not 0 <= self.eta <= 1:
            raise ValueError("eta must lie in [0, 1]")
        if self.arrival_rate <= 0:
            raise ValueError("arrival_rate must be positive")
        pv = list(self.private_values)
        if pv and (len(pv) != 2 * self.q_max or any(a < b for a, b in zip(pv, pv[1:]))):
            raise ValueError("private_values needs 2*q_max non-increasing entries")


def draw_private_values(rng: np.random.Generator, q_max: int, pv_var: float) -> list[int]:
    draws = rng.normal(0.0, math.sqrt(pv_var), size=2 * q_max)
    return [int(round(x)) for x in sorted(draws, reverse=True)]


def draw_first_arrival(rng: np.random.Generator) -> float:
    """First market arrival, uniform on [0, 100] units."""
    return rng.uniform(0.0, 100.0)


@dataclass
class ZIState:
    holdings: int
    q_max: int
    private_values: Sequence[int]
    estimate: int  # projected final fundamental
    surplus_min: int
    surplus_max: int
    eta: float


@dataclass(frozen=True)
class OrderDecision:
    side: Side
    price: int
    quantity: int = 1
    takes_quote: bool = False


def zi_act(state: ZIState, best_bid: int | None, best_ask: int | None,
           rng: np.random.Generator) -> OrderDecision | None:
    """Pick a side by coin flip and a requested surplus, then price one share.

    Both draws happen on every call so a run consumes the same random numbers
    whatever the market state.
    """
    buy = rng.random() < 0.5
    surplus = int(rng.integers(state.surplus_min, state.surplus_max + 1))
    h, q = state.holdings, state.q_max
    if buy:
        if h + 1 > q:
            return None
        value = state.estimate + state.private_values[q + h]
        if best_ask is not None and value - best_ask >= state.eta * surplus:
            return OrderDecision(Side.BUY, best_ask, takes_quote=True)
        return OrderDecision(Side.BUY, max(1, value - surplus))
    if h - 1 < -q:
        return None
    value = state.estimate + state.private_values[q + h - 1]
    if best_bid is not None and best_bid - value >= state.eta * surplus:
        return OrderDecision(Side.SELL, best_bid, takes_quote=True)
    return OrderDecision(Side.SELL, max(1, value + surplus))


class TradingAgent(Agent):
    """Tracks holdings and open orders from exchange notifications."""

    def __init__(self, agent_id: int, exchange_id: int):
        super().__init__(agent_id)
        self.exchange_id = exchange_id
        self.holdings = 0
        self.open_orders: set[int] = set()
        self._next_local = 0

    def new_order_id(self) -> int:
        self._next_local += 1
        return self.id * ORDER_ID_STRIDE + self._next_local

    def receive(self, now: int, message: Message) -> None:
        p = message.payload
        if type(p) is OrderExecuted:
            self.holdings += p.side * p.quantity
            if p.remaining == 0:
                self.open_orders.discard(p.order_id)
        elif type(p) is OrderAccepted:
            if p.rested_quantity == 0:
                self.open_orders.discard(p.order_id)
        elif type(p) is OrderCancelled:
            self.open_orders.discard(p.order_id)


class ZIAgent(TradingAgent):
    def __init__(self, agent_id: int, exchange_id: int, oracle: FundamentalSeries,
                 params: ZIParams, pv_var: float = 5e6):
        super().__init__(agent_id, exchange_id)
        self.oracle = oracle
        self.fparams = oracle.params
        self.params = params
        self.pv_var = pv_var
        self.belief = FundamentalBelief(float(self.fparams.r_bar), 0.0, 0)
        self.arrivals = 0
        self._pending: int | None = None

    def kernel_starting(self, kernel) -> None:
        super().kernel_starting(kernel)
        self.rng = kernel.agent_stream(self.id)
        if not self.params.private_values:
            self.params = replace(self.params, private_values=draw_private_values(
                self.rng, self.params.q_max, self.pv_var))
        self.first_arrival = math.ceil(draw_first_arrival(self.rng))

    def wakeup(self, now: int) -> None:
        unit = ns_to_units(now)
        if self.arrivals == 0 and unit < self.first_arrival:
            self.set_wakeup(units_to_ns(self.first_arrival))
            return
        self.zi_arrival(unit)

    def zi_arrival(self, unit: int) -> None:
        self.arrivals += 1
        for oid in sorted(self.open_orders):
            self.send(self.exchange_id, CancelOrder(oid))
        self.open_orders.clear()
        obs = self.oracle.observe(unit, self.params.obs_noise_sq, self.rng)
        gap = max(1, math.ceil(self.rng.exponential(1.0 / self.params.arrival_rate)))
        self.belief = belief_update(self.belief, obs, unit - self.belief.last_update,
                                    self.params.obs_noise_sq, self.fparams)
        self._pending = unit
        self.send(self.exchange_id, QuerySpread())
        nxt = unit + gap
        if nxt <= self.fparams.horizon_T:
            self.set_wakeup(units_to_ns(nxt))

    def receive(self, now: int, message: Message) -> None:
        p = message.payload
        if type(p) is not SpreadReply:
            super().receive(now, message)
            return
        if self._pending is None:
            return
        unit, self._pending = self._pending, None
        p_ = self.params
        state = ZIState(self.holdings, p_.q_max, p_.private_values,
                        project_final(self.belief, unit, self.fparams),
                        p_.surplus_min, p_.surplus_max, p_.eta)
        decision = zi_act(state, p.best_bid, p.best_ask, self.rng)
        if decision is None:
            return
        oid = self.new_order_id()
        self.open_orders.add(oid)
        self.send(self.exchange_id, LimitOrderSubmit(oid, int(decision.side), decision.price,
                                                     decision.quantity))


@dataclass
class ImpactParams:
    trigger_time: int = 200
    side: Side = Side.BUY
    greed: float = 1.0
    band_fraction: float = 0.01
    active: bool = True
    market_order: bool = False

    def __post_init__(self):
        if self.greed <= 0:
            raise ValueError("greed must be positive")
        self.side = Side(self.side)


def impact_act(params: ImpactParams, reply: DepthReply) -> OrderDecision | None:
    """Size the impact order from band liquidity; price it at the band's far edge."""
    if not params.active:
        return None
    if reply.total_volume == 0 or reply.inside is None:
        log.info("impact agent found no liquidity within the band; no order")
        return None
    qty = math.floor(Fraction(str(params.greed)) * reply.total_volume)
    if qty <= 0:
        return None
    band = Fraction(str(params.band_fraction))
    if params.side == Side.BUY:
        price = math.floor(reply.inside * (1 + band))
    else:
        price = math.ceil(reply.inside * (1 - band))
    return OrderDecision(params.side, max(1, price), qty)


class ImpactAgent(TradingAgent):
    """Places one liquidity-sized order at ``trigger_time`` (in units).

    In control mode it still queries depth but sends no order.
    """

    def __init__(self, agent_id: int, exchange_id: int, params: ImpactParams):
        super().__init__(agent_id, exchange_id)
        self.params = params
        self.decision: OrderDecision | None = None
        self._order_id: int | None = None

    def wakeup(self, now: int) -> None:
        trigger = units_to_ns(self.params.trigger_time)
        if now < trigger:
            self.set_wakeup(trigger, late=True)
            return
        if now == trigger:
            self.send(self.exchange_id, QueryDepth(int(self.params.side.opposite),
                                                   str(self.params.band_fraction)))

    def receive(self, now: int, message: Message) -> None:
        p = message.payload
        if type(p) is DepthReply:
            self.decision = impact_act(self.params, p)
            if self.decision is None:
                return
            self._order_id = self.new_order_id()
            if self.params.market_order:
                self.send(self.exchange_id, MarketOrderSubmit(self._order_id, int(self.decision.side),
                                                              self.decision.quantity))
            else:
                self.open_orders.add(self._order_id)
                self.send(self.exchange_id, LimitOrderSubmit(self._order_id, int(self.decision.side),
                                                             self.decision.price,
                                                             self.decision.quantity))
            return
        super().receive(now, message)
        if type(p) is OrderAccepted and p.order_id == self._order_id and p.rested_quantity:
            # unfilled remainder is discarded, never left resting
            self.send(self.exchange_id, CancelOrder(p.order_id))


class ReplayImpactAgent(TradingAgent):
    """Backtest experimental agent: one market order sized off the inside quote.

    Size is ``ceil(multiplier * opposite inside size)`` read just before
    submission; the trigger wakeup runs after historical events sharing its
    timestamp.
    """

    def __init__(self, agent_id: int, exchange_id: int, trigger_ns: int, side: Side,
                 multiplier: float):
        super().__init__(agent_id, exchange_id)
        self.trigger_ns = trigger_ns
        self.side = Side(side)
        self.multiplier = multiplier
        self.order_size = 0
        self.filled = 0

    def wakeup(self, now: int) -> None:
        if now < self.trigger_ns:
            self.set_wakeup(self.trigger_ns, late=True)
        elif now == self.trigger_ns:
            self.send(self.exchange_id, QuerySpread())

    def receive(self, now: int, message: Message) -> None:
        p = message.payload
        if type(p) is SpreadReply:
            inside = p.ask_size if self.side == Side.BUY else p.bid_size
            self.order_size = math.ceil(Fraction(str(self.multiplier)) * inside)
            if self.order_size > 0:
                self.send(self.exchange_id, MarketOrderSubmit(self.new_order_id(), int(self.side),
                                                              self.order_size))
            return
        if type(p) is OrderExecuted:
            self.filled += p.quantity
        super().receive(now, message)
