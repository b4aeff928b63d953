import pytest
from hypothesis import given, settings, strategies as st

from llnsim.kernel import (MAX_DRIFT_PPM, SECOND, ClockModel, EventCapExceeded, SimulationError,
                           Simulator, rng_stream)


def test_event_fires_at_exact_tick():
    sim = Simulator()
    seen = []
    sim.schedule(5 * SECOND, lambda ev: seen.append(sim.now))
    assert sim.run_until(10 * SECOND) == 1
    assert seen == [5 * SECOND]
    assert sim.now == 10 * SECOND


def test_equal_times_fire_in_insertion_order():
    sim = Simulator()
    order = []
    for i in range(5):
        sim.schedule(100, lambda ev, i=i: order.append(i))
    sim.run_until(100)
    assert order == [0, 1, 2, 3, 4]


def test_schedule_in_past_rejected():
    sim = Simulator()
    sim.run_until(50)
    with pytest.raises(SimulationError):
        sim.schedule(49)
    with pytest.raises(SimulationError):
        sim.run_until(10)


def test_cancel_semantics():
    sim = Simulator()
    fired = []
    a = sim.schedule(10, lambda ev: fired.append("a"))
    b = sim.schedule(20, lambda ev: fired.append("b"))
    assert sim.cancel(a) is True
    assert sim.cancel(a) is False
    sim.run_until(30)
    assert fired == ["b"]
    assert sim.cancel(b) is False
    assert sim.cancel(12345) is False
    assert sim.cancel(None) is False


def test_run_until_counts():
    sim = Simulator()
    assert sim.run_until(SECOND) == 0 and sim.now == SECOND
    for t in (SECOND + 1, SECOND + 2, 2 * SECOND, 3 * SECOND):
        sim.schedule(t)
    assert sim.run_until(2 * SECOND) == 3


def test_cascade_fires_in_same_call():
    sim = Simulator()
    times = []

    def first(ev):
        times.append(sim.now)
        sim.schedule_in(7, lambda ev: times.append(sim.now))

    sim.schedule(3, first)
    assert sim.run_until(10) == 2
    assert times == [3, 10]


def test_event_cap_is_an_error():
    sim = Simulator(event_cap=100)

    def again(ev):
        sim.schedule_in(1, again)

    sim.schedule(0, again)
    with pytest.raises(EventCapExceeded):
        sim.run_until(10**9)


@pytest.mark.parametrize("drift, offset, glob, expected", [
    (0, 0, 10 * SECOND, 10 * SECOND),
    (100, 0, 10 * SECOND, 10_001_000),
    (-50, 0, 20 * SECOND, 19_999_000),
    (0, 250, 1000, 1250),
])
def test_local_time_examples(drift, offset, glob, expected):
    sim = Simulator()
    sim.add_clock(1, ClockModel(drift, offset))
    assert sim.local_time(1, glob) == expected


def test_local_time_unknown_node():
    with pytest.raises(KeyError):
        Simulator().local_time(9, 0)


def test_drift_bound():
    ClockModel(MAX_DRIFT_PPM)
    with pytest.raises(ValueError):
        ClockModel(MAX_DRIFT_PPM + 1)


def test_rng_streams_reproducible_and_independent():
    a = [rng_stream(7, "mac:3").random() for _ in range(3)]
    assert rng_stream(7, "mac:3").random() == a[0]
    assert rng_stream(7, "mac:4").random() != a[0]
    assert rng_stream(8, "mac:3").random() != a[0]
    # pinned values guard against an accidental change of the derivation
    assert rng_stream(1, "clock:5").randrange(1_000_000) == 756196


@settings(max_examples=200, deadline=None)
@given(times=st.lists(st.integers(0, 10_000), min_size=1, max_size=60))
def test_total_order_property(times):
    sim = Simulator()
    fired = []
    ids = [sim.schedule(t, lambda ev: fired.append((ev.fire_at, ev.seq, ev.id))) for t in times]
    assert len(set(ids)) == len(ids)
    sim.run_until(10_000)
    assert fired == sorted(fired)
    assert len({f[2] for f in fired}) == len(times)


@settings(max_examples=300, deadline=None)
@given(drift=st.integers(-MAX_DRIFT_PPM, MAX_DRIFT_PPM), offset=st.integers(0, 10**6),
       g=st.integers(0, 10**12))
def test_clock_monotone_and_invertible(drift, offset, g):
    c = ClockModel(drift, offset)
    # rounding can repeat one reading at the most extreme drift; two ticks always advance
    assert c.local(g + 2) > c.local(g)
    assert c.local(g + 1) >= c.local(g)
    loc = c.local(g)
    back = c.to_global(loc)
    assert c.local(back) >= loc and back <= g
    assert back == 0 or c.local(back - 1) < loc
