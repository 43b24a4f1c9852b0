import pytest

from carat.server import Ost, ServerParams, stripe_target


def make_ost(c_fixed=200, c_page=5, d_net=50):
    return Ost(ost_id=0, params=ServerParams(c_fixed, c_page, d_net))


def test_idle_service_time_formula():
    ost = make_ost()
    # 256 pages: 200 + 5*256 = 1480 us of service, completion seen at +d_net.
    done = ost.enqueue_rpc(256, 256 * 4096, arrive_at=0, is_read=False)
    assert done == 1480 + 50
    assert ost.busy_until == 1480


def test_fifo_second_rpc_waits():
    ost = make_ost()
    ost.enqueue_rpc(1024, 1024 * 4096, arrive_at=0, is_read=False)
    done2 = ost.enqueue_rpc(1024, 1024 * 4096, arrive_at=0, is_read=False)
    # Second waits the full 200 + 5120 us of the first before service begins.
    first_svc = 200 + 5 * 1024
    assert done2 == first_svc + first_svc + 50


def test_small_rpc_penalty_for_same_bytes():
    # 64 one-page RPCs cost 64*205 = 13120 us of service;
    # one 64-page RPC costs 200 + 320 = 520 us.
    many = make_ost()
    for _ in range(64):
        many.enqueue_rpc(1, 4096, arrive_at=0, is_read=True)
    one = make_ost()
    one.enqueue_rpc(64, 64 * 4096, arrive_at=0, is_read=True)
    assert many.busy_time_us == 13120
    assert one.busy_time_us == 520


def test_work_conservation_total_busy_time():
    ost = make_ost()
    pages = [3, 10, 256, 77]
    for p in pages:
        ost.enqueue_rpc(p, p * 4096, arrive_at=0, is_read=False)
    assert ost.busy_time_us == sum(200 + 5 * p for p in pages)
    assert ost.served_pages == sum(pages)


def test_never_idle_while_queued():
    ost = make_ost()
    # Back-to-back arrivals: service periods must abut with no gaps.
    end1 = ost.enqueue_rpc(10, 40960, arrive_at=100, is_read=False) - 50
    end2 = ost.enqueue_rpc(10, 40960, arrive_at=120, is_read=False) - 50
    assert end1 == 100 + 250
    assert end2 == end1 + 250


def test_stripe_round_robin():
    assert [stripe_target(0, i, 4) for i in range(4)] == [0, 1, 2, 3]


def test_stripe_modulo():
    assert stripe_target(0, 7, 4) == 3


def test_stripe_single_ost():
    for i in range(5):
        assert stripe_target(0, i, 1) == 0


def test_stripe_requires_positive_ost_count():
    with pytest.raises(ValueError):
        stripe_target(0, 0, 0)
