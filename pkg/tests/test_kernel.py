import numpy as np
import pytest

from marketsim.kernel import (
    UNIT_NS, Agent, CancelOrder, Kernel, KernelConfig, Message, SchedulingError,
    SimulationError, Wakeup, agent_stream, run, units_to_ns,
)


class Quiet(Agent):
    pass


class PingPong(Agent):
    """Sends ``hops`` messages back and forth with a peer."""

    def __init__(self, agent_id, peer, hops):
        super().__init__(agent_id)
        self.peer, self.hops = peer, hops

    def wakeup(self, now):
        if self.hops:
            self.send(self.peer, CancelOrder(self.hops))

    def receive(self, now, message):
        n = message.payload.order_id - 1
        if n > 0:
            self.send(message.sender, CancelOrder(n))


class Randomised(Agent):
    def kernel_starting(self, kernel):
        super().kernel_starting(kernel)
        self.rng = kernel.agent_stream(self.id)

    def wakeup(self, now):
        gap = int(self.rng.integers(1, 50))
        if now + gap < self.kernel.config.stop:
            self.set_wakeup(now + gap)
            self.send(0 if self.id else 1, CancelOrder(int(self.rng.integers(1000))))


def config(**kw):
    base = dict(start=0, stop=10_000)
    base.update(kw)
    return KernelConfig(**base)


def test_zero_agents():
    assert len(run(config(), [])) == 0


def test_single_wakeup_only():
    log = run(config(), [Quiet(0)])
    assert len(log) == 1 and isinstance(log.messages[0].payload, Wakeup)


def test_repeat_runs_identical():
    agents = lambda: [Randomised(0), Randomised(1), Randomised(2)]
    a = run(config(global_seed=7), agents())
    b = run(config(global_seed=7), agents())
    assert a.to_csv() == b.to_csv()
    assert len(a) > 100


def test_log_time_monotone_and_causal():
    log = run(config(latency_ns=3, computation_delay_ns=2), [PingPong(0, 1, 5), PingPong(1, 0, 0)])
    times = [m.deliver_at for m in log]
    assert times == sorted(times)
    for m in log:
        assert m.deliver_at >= m.sent_at
        if not isinstance(m.payload, Wakeup):
            assert m.deliver_at == m.sent_at + 3 + 2


def test_per_pair_latency():
    cfg = config(latency_ns={(0, 1): 11}, computation_delay_ns={0: 4})
    log = run(cfg, [PingPong(0, 1, 2), PingPong(1, 0, 0)])
    msgs = [m for m in log if not isinstance(m.payload, Wakeup)]
    assert [(m.sender, m.deliver_at - m.sent_at) for m in msgs] == [(0, 15), (1, 0)]


def test_fifo_tiebreak():
    k = Kernel(config(), [Quiet(0)])
    a = Message(0, 0, 0, 5, CancelOrder(1))
    b = Message(0, 0, 0, 5, CancelOrder(2))
    k.schedule_message(a)
    k.schedule_message(b)
    log = k.run()
    delivered = [m.payload.order_id for m in log if isinstance(m.payload, CancelOrder)]
    assert delivered == [1, 2]


def test_late_wakeup_runs_after_same_time_messages():
    order = []

    class Rec(Agent):
        def wakeup(self, now):
            order.append(("wake", self.id, now))
            if now == 0 and self.id == 0:
                self.set_wakeup(5, late=True)
            if now == 0 and self.id == 1:
                self.set_wakeup(5)

    run(config(), [Rec(0), Rec(1)])
    assert order[-2:] == [("wake", 1, 5), ("wake", 0, 5)]


def test_past_scheduling_is_an_error():
    class Bad(Agent):
        def wakeup(self, now):
            if now == 10:
                self.kernel.schedule_message(Message(0, 0, now, 5, Wakeup()))
            elif now == 0:
                self.set_wakeup(10)

    with pytest.raises(SimulationError) as err:
        run(config(), [Bad(0)])
    assert isinstance(err.value.cause, SchedulingError)
    assert err.value.message.deliver_at == 10


def test_stop_is_inclusive():
    k = Kernel(config(stop=100), [Quiet(0)])
    k.schedule_message(Message(0, 0, 0, 100, CancelOrder(1)))
    k.schedule_message(Message(0, 0, 0, 101, CancelOrder(2)))
    log = k.run()
    assert [m.deliver_at for m in log] == [0, 100]


def test_duplicate_agent_ids():
    with pytest.raises(ValueError):
        Kernel(config(), [Quiet(1), Quiet(1)])


@pytest.mark.parametrize("kw", [dict(start=5, stop=5), dict(latency_ns=-1)])
def test_bad_config(kw):
    with pytest.raises(ValueError):
        config(**kw)


def test_agent_stream_repeatable():
    a = agent_stream(3, 5).random(1000)
    b = agent_stream(3, 5).random(1000)
    assert np.array_equal(a, b)


def test_agent_streams_differ():
    a = agent_stream(1, 5).random(10)
    b = agent_stream(1, 6).random(10)
    assert not np.array_equal(a, b)


def test_stream_independent_of_roster():
    draws = {}
    for n in (10, 11):
        agents = [Randomised(i) for i in range(n)]
        k = Kernel(config(global_seed=1), agents)
        k.run()
        draws[n] = k.agent_stream(5).random(20)
    assert np.array_equal(draws[10], draws[11])
    assert np.array_equal(draws[10], agent_stream(1, 5).random(20))


def test_units():
    assert units_to_ns(3) == 3 * UNIT_NS == 300_000_000


def test_log_csv_layout():
    log = run(config(), [PingPong(0, 1, 1), Quiet(1)])
    lines = log.to_csv().splitlines()
    assert lines[0] == "deliver_at_ns,sender,recipient,payload_kind,payload_fields"
    assert lines[-1] == "0,0,1,CancelOrder,order_id=1"
