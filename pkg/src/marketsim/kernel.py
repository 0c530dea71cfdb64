"""Discrete-event simulation kernel.

Agents exchange timestamped messages through a single priority queue. Time is
an integer count of nanoseconds since midnight; the discrete IABS clock maps
unit ``u`` to ``u * UNIT_NS``.
"""

from __future__ import annotations

import csv
import heapq
import io
import logging
from dataclasses import dataclass, field, fields
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

NS_PER_SECOND = 1_000_000_000
NS_PER_MS = 1_000_000
# one discrete IABS time unit is 100 ms
UNIT_NS = 100 * NS_PER_MS

_AGENT_STREAM = 0
_ORACLE_STREAM = 1


def units_to_ns(units: int) -> int:
    return int(units) * UNIT_NS


def ns_to_units(ns: int) -> int:
    return ns // UNIT_NS


class SimulationError(RuntimeError):
    """An agent raised while handling a message; the run is aborted."""

    def __init__(self, message: "Message", cause: BaseException):
        super().__init__(f"agent {message.recipient} failed on {message.describe()}: {cause!r}")
        self.message = message
        self.cause = cause


class SchedulingError(ValueError):
    pass


# --- payloads ---------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Wakeup:
    pass


@dataclass(frozen=True, slots=True)
class LimitOrderSubmit:
    order_id: int
    side: int
    price: int
    quantity: int


@dataclass(frozen=True, slots=True)
class MarketOrderSubmit:
    order_id: int
    side: int
    quantity: int


@dataclass(frozen=True, slots=True)
class CancelOrder:
    order_id: int


@dataclass(frozen=True, slots=True)
class PartialCancelOrder:
    order_id: int
    quantity: int


@dataclass(frozen=True, slots=True)
class QueryDepth:
    side: int
    fraction: str


@dataclass(frozen=True, slots=True)
class DepthReply:
    side: int
    levels: tuple
    total_volume: int
    inside: int | None


@dataclass(frozen=True, slots=True)
class QuerySpread:
    pass


@dataclass(frozen=True, slots=True)
class SpreadReply:
    best_bid: int | None
    bid_size: int
    best_ask: int | None
    ask_size: int


@dataclass(frozen=True, slots=True)
class OrderAccepted:
    order_id: int
    rested_quantity: int


@dataclass(frozen=True, slots=True)
class OrderExecuted:
    order_id: int
    side: int
    price: int
    quantity: int
    remaining: int


@dataclass(frozen=True, slots=True)
class OrderCancelled:
    order_id: int
    quantity: int


PAYLOAD_KINDS = (
    LimitOrderSubmit, MarketOrderSubmit, CancelOrder, PartialCancelOrder,
    QueryDepth, DepthReply, QuerySpread, SpreadReply,
    OrderAccepted, OrderExecuted, OrderCancelled, Wakeup,
)


def payload_fields(payload: Any) -> str:
    """Render payload fields as ``name=value`` pairs joined by ``;``."""
    return ";".join(f"{f.name}={getattr(payload, f.name)!r}" for f in fields(payload))


@dataclass(frozen=True, slots=True)
class Message:
    sender: int
    recipient: int
    sent_at: int
    deliver_at: int
    payload: Any

    def describe(self) -> str:
        return (f"{type(self.payload).__name__}({payload_fields(self.payload)}) "
                f"from {self.sender} at {self.deliver_at}")


@dataclass
class KernelConfig:
    start: int
    stop: int
    global_seed: int = 0
    latency_ns: int | Mapping[tuple[int, int], int] = 0
    computation_delay_ns: int | Mapping[int, int] = 0

    def __post_init__(self):
        if not 0 <= self.start < self.stop:
            raise ValueError(f"need 0 <= start < stop, got {self.start}, {self.stop}")
        if not 0 <= self.global_seed < 2**64:
            raise ValueError("global_seed must fit in 64 unsigned bits")
        delays = []
        for d in (self.latency_ns, self.computation_delay_ns):
            delays.extend(d.values() if isinstance(d, Mapping) else [d])
        if any(d < 0 for d in delays):
            raise ValueError("delays must be non-negative")

    def latency(self, sender: int, recipient: int) -> int:
        if isinstance(self.latency_ns, Mapping):
            return self.latency_ns.get((sender, recipient), 0)
        return self.latency_ns

    def computation_delay(self, sender: int) -> int:
        if isinstance(self.computation_delay_ns, Mapping):
            return self.computation_delay_ns.get(sender, 0)
        return self.computation_delay_ns


# --- random streams ---------------------------------------------------------


def _stream(global_seed: int, key: tuple[int, ...]) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=int(global_seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(seq))


def agent_stream(global_seed: int, agent_id: int) -> np.random.Generator:
    """Random stream that depends only on ``(global_seed, agent_id)``."""
    if agent_id < 0:
        raise ValueError("agent ids are non-negative")
    return _stream(global_seed, (_AGENT_STREAM, agent_id))


def oracle_stream(global_seed: int) -> np.random.Generator:
    return _stream(global_seed, (_ORACLE_STREAM,))


# --- agents and the kernel --------------------------------------------------


class Agent:
    """Base class. Subclasses override ``wakeup`` and ``receive``."""

    # exchange skips execution/cancel notices to agents that set this False
    wants_notifications = True

    def __init__(self, agent_id: int):
        self.id = agent_id
        self.kernel: Kernel | None = None

    def kernel_starting(self, kernel: "Kernel") -> None:
        self.kernel = kernel

    def wakeup(self, now: int) -> None:
        pass

    def receive(self, now: int, message: Message) -> None:
        pass

    def send(self, recipient: int, payload: Any) -> None:
        self.kernel.send(self.id, recipient, payload)

    def set_wakeup(self, at: int, late: bool = False) -> None:
        self.kernel.set_wakeup(self.id, at, late=late)


@dataclass
class SimulationLog:
    messages: list[Message] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.messages)

    def __iter__(self):
        return iter(self.messages)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["deliver_at_ns", "sender", "recipient", "payload_kind", "payload_fields"])
        for m in self.messages:
            w.writerow([m.deliver_at, m.sender, m.recipient,
                        type(m.payload).__name__, payload_fields(m.payload)])
        return buf.getvalue()


class Kernel:
    """Delivers messages in ``(deliver_at, phase, insertion)`` order.

    ``phase`` is 0 for ordinary messages and 1 for late wakeups, which run
    only once no ordinary message remains queued for their nanosecond.
    """

    def __init__(self, config: KernelConfig, agents: Sequence[Agent]):
        ids = [a.id for a in agents]
        if len(set(ids)) != len(ids):
            raise ValueError("agent ids must be unique")
        self.config = config
        self.agents = {a.id: a for a in agents}
        self._order = list(agents)
        self.now = config.start
        self._queue: list[tuple[int, int, int, Message]] = []
        self._seq = 0
        self.log = SimulationLog()
        lat, comp = config.latency_ns, config.computation_delay_ns
        self._scalar_delay = (None if isinstance(lat, Mapping) or isinstance(comp, Mapping)
                              else lat + comp)

    def agent_stream(self, agent_id: int) -> np.random.Generator:
        return agent_stream(self.config.global_seed, agent_id)

    def schedule_message(self, msg: Message, late: bool = False) -> None:
        if msg.deliver_at < self.now:
            raise SchedulingError(f"cannot schedule into the past: {msg.deliver_at} < {self.now}")
        heapq.heappush(self._queue, (msg.deliver_at, int(late), self._seq, msg))
        self._seq += 1

    def send(self, sender: int, recipient: int, payload: Any) -> None:
        if recipient not in self.agents:
            raise KeyError(f"unknown recipient {recipient}")
        delay = self._scalar_delay
        if delay is None:
            delay = (self.config.latency(sender, recipient)
                     + self.config.computation_delay(sender))
        now = self.now
        heapq.heappush(self._queue, (now + delay, 0, self._seq,
                                     Message(sender, recipient, now, now + delay, payload)))
        self._seq += 1

    def set_wakeup(self, agent_id: int, at: int, late: bool = False) -> None:
        self.schedule_message(Message(agent_id, agent_id, self.now, at, Wakeup()), late=late)

    def run(self) -> SimulationLog:
        for agent in self._order:
            agent.kernel_starting(self)
        for agent in self._order:
            self.set_wakeup(agent.id, self.config.start)
        stop = self.config.stop
        queue = self._queue
        append = self.log.messages.append
        while queue:
            deliver_at, _, _, msg = heapq.heappop(queue)
            if deliver_at > stop:
                break
            self.now = deliver_at
            append(msg)
            agent = self.agents[msg.recipient]
            try:
                if type(msg.payload) is Wakeup:
                    agent.wakeup(deliver_at)
                else:
                    agent.receive(deliver_at, msg)
            except SimulationError:
                raise
            except Exception as exc:
                raise SimulationError(msg, exc) from exc
        log.debug("kernel finished at %d after %d messages", self.now, len(self.log))
        return self.log


def run(config: KernelConfig, agents: Iterable[Agent]) -> SimulationLog:
    return Kernel(config, list(agents)).run()
