import pytest

from carat.simcore import Event, EventKind, EventQueue, SchedulingError, substream


def make_queue():
    fired = []
    q = EventQueue(lambda ev: fired.append(ev))
    return q, fired


def test_pop_order_is_by_fire_time():
    q, fired = make_queue()
    q.schedule_at(10, EventKind.PROBE_TICK, "a")
    q.schedule_at(5, EventKind.PROBE_TICK, "b")
    q.run_until(20)
    assert [ev.payload for ev in fired] == ["b", "a"]


def test_equal_fire_times_process_in_seq_order():
    q, fired = make_queue()
    e1 = q.schedule_at(7, EventKind.PROBE_TICK, "first")
    e2 = q.schedule_at(7, EventKind.PROBE_TICK, "second")
    assert e1.event.seq < e2.event.seq
    q.run_until(7)
    assert [ev.payload for ev in fired] == ["first", "second"]


def test_scheduling_in_the_past_fails_loudly():
    q, _ = make_queue()
    q.schedule_at(1, EventKind.PROBE_TICK)
    q.run_until(5)
    with pytest.raises(SchedulingError):
        q.schedule_at(2, EventKind.PROBE_TICK)


def test_run_until_empty_queue_advances_clock():
    q, fired = make_queue()
    assert q.run_until(100) == 0
    assert q.now == 100
    assert not fired


def test_run_until_boundary_is_inclusive():
    q, _ = make_queue()
    for t in (1, 2, 3):
        q.schedule_at(t, EventKind.PROBE_TICK)
    assert q.run_until(2) == 2
    assert q.pending == 1


def test_self_scheduling_chain():
    q = EventQueue()

    def handler(ev):
        q.schedule_at(q.now + 1, EventKind.PROBE_TICK)

    q.set_handler(handler)
    q.schedule_at(1, EventKind.PROBE_TICK)
    # Events at 1..10 fire; each schedules a follow-up one tick later.
    assert q.run_until(10) == 10


def test_cancel_pending_event():
    q, fired = make_queue()
    h = q.schedule_at(10, EventKind.EXTENT_TIMEOUT)
    assert q.cancel(h) is True
    q.run_until(20)
    assert not fired


def test_cancel_after_fire_returns_false():
    q, _ = make_queue()
    h = q.schedule_at(10, EventKind.EXTENT_TIMEOUT)
    q.run_until(20)
    assert q.cancel(h) is False


def test_double_cancel_returns_false():
    q, _ = make_queue()
    h = q.schedule_at(10, EventKind.EXTENT_TIMEOUT)
    assert q.cancel(h) is True
    assert q.cancel(h) is False


def test_event_conservation():
    q, _ = make_queue()
    handles = [q.schedule_at(t, EventKind.PROBE_TICK) for t in range(10)]
    q.cancel(handles[9])
    q.run_until(4)
    assert q.scheduled == q.processed + q.cancelled + q.pending
    assert q.processed == 5
    assert q.cancelled == 1
    assert q.pending == 4


def test_log_fingerprint_deterministic():
    def run():
        q = EventQueue()

        def handler(ev):
            if ev.fire_at < 50:
                q.schedule_at(ev.fire_at + 3, EventKind.RPC_CLIENT_COMPLETE)
                q.schedule_at(ev.fire_at + 3, EventKind.PROBE_TICK)

        q.set_handler(handler)
        q.schedule_at(0, EventKind.REQUEST_ARRIVAL)
        q.run_until(100)
        return q.log_fingerprint

    assert run() == run()


def test_substreams_are_independent_and_reproducible():
    a1 = substream(42, 0).integers(0, 1 << 30, 8)
    a2 = substream(42, 0).integers(0, 1 << 30, 8)
    b = substream(42, 1).integers(0, 1 << 30, 8)
    assert (a1 == a2).all()
    assert (a1 != b).any()
