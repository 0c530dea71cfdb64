"""Deterministic agent-based market simulator for market-replay and
interactive agent-based impact studies."""

from .kernel import Agent, Kernel, KernelConfig, Message, SimulationLog, agent_stream, run
from .orderbook import Fill, Order, OrderBook, Side

__all__ = [
    "Agent", "Fill", "Kernel", "KernelConfig", "Message", "Order", "OrderBook", "Side",
    "SimulationLog", "agent_stream", "run",
]
