import pytest

from carat.client import (
    CacheConfig,
    Client,
    RpcConfig,
    TRIGGER_FULL,
    TRIGGER_PRESSURE,
    TRIGGER_TIMEOUT,
)
from carat.metrics import PAGE_SIZE
from carat.server import Ost, ServerParams
from carat.simcore import EventKind, EventQueue

MB = 1024 * 1024


def make_client(pages=1024, window=8, cache_mb=256, d_net=50):
    engine = EventQueue()
    ost = Ost(ost_id=0, params=ServerParams(d_net_us=d_net))
    departures = []
    client = Client(
        client_id=0,
        node_id=0,
        ost=ost,
        engine=engine,
        rpc_config=RpcConfig(pages, window),
        cache_config=CacheConfig(cache_mb),
    )

    orig_dispatch = client._dispatch

    def tracking_dispatch(rpc, now):
        departures.append(rpc)
        orig_dispatch(rpc, now)

    client._dispatch = tracking_dispatch

    def handler(ev):
        if ev.kind == EventKind.EXTENT_TIMEOUT:
            c, key = ev.payload
            c.on_extent_timeout(key, engine.now)
        elif ev.kind == EventKind.RPC_CLIENT_COMPLETE:
            c, rpc = ev.payload
            c.on_rpc_complete(rpc, engine.now)

    engine.set_handler(handler)
    return engine, ost, client, departures


def test_config_values_must_come_from_discrete_sets():
    with pytest.raises(ValueError):
        RpcConfig(100, 8)
    with pytest.raises(ValueError):
        RpcConfig(1024, 7)
    with pytest.raises(ValueError):
        CacheConfig(100)


def test_aligned_write_fills_whole_extents_and_dispatches():
    # Same structure as a 64 kB request at a 64 kB offset with 4-page extents,
    # scaled onto the 16-page grid point: 256 kB at a 256 kB offset fills
    # exactly 4 full extents, all dispatched immediately.
    engine, ost, client, departed = make_client(pages=16, window=64)
    client.admit_write(file_id=0, offset=256 * 1024, length=256 * 1024, now=0)
    assert len(departed) == 4
    assert all(r.pages == 16 and r.trigger == TRIGGER_FULL for r in departed)
    assert sorted(r.ost_id for r in departed) == [0, 0, 0, 0]
    assert not client.open_extents


def test_unaligned_small_write_straddles_two_pages_no_dispatch():
    engine, ost, client, departed = make_client()
    client.admit_write(file_id=0, offset=2048, length=4096, now=0)
    assert not departed
    (ext,) = client.open_extents.values()
    assert ext.pages == {0, 1}
    assert client.dirty_bytes == 2 * PAGE_SIZE


def test_write_at_cache_limit_blocks_and_forces_oldest_extent_out():
    engine, ost, client, departed = make_client(pages=1024, window=64, cache_mb=32)
    client.admit_write(0, 0, 30 * MB, now=0)  # 7 full extents + one 2 MB partial
    assert client.dirty_bytes == 30 * MB
    open_before = list(client.open_extents)
    assert len(open_before) == 1
    client.admit_write(0, 40 * MB, 4 * MB, now=0)
    assert client.blocked_writers
    assert client.dirty_bytes == 32 * MB
    pressure = [r for r in departed if r.trigger == TRIGGER_PRESSURE]
    assert pressure and pressure[0].pages == 512  # the oldest (partial) extent
    # Draining the queue eventually admits the blocked remainder.
    engine.run_to_exhaustion()
    assert not client.blocked_writers
    assert client.dirty_bytes == 0


def test_byte_conservation_after_drain():
    engine, ost, client, _ = make_client(pages=64, window=8, cache_mb=32)
    client.admit_write(0, 0, 10 * MB, now=0)
    client.admit_write(0, 5 * MB, 10 * MB, now=0)  # overlaps: some pages rewritten
    engine.run_to_exhaustion()
    c = client.counters
    assert (
        c.total_admitted_write_bytes
        == c.total_completed_write_bytes + client.dirty_bytes + c.total_inplace_bytes
    )


def test_sequential_read_splits_into_extent_sized_rpcs():
    engine, ost, client, departed = make_client(pages=1024, window=8)
    rpcs = client.admit_read(0, 0, 8 * MB, now=0)
    assert [r.pages for r in rpcs] == [1024, 1024]


def test_small_read_is_one_rpc():
    engine, ost, client, _ = make_client()
    rpcs = client.admit_read(0, 0, 8192, now=0)
    assert [r.pages for r in rpcs] == [2]


def test_nonadjacent_single_page_reads_stay_separate():
    engine, ost, client, _ = make_client()
    rpcs = []
    for off in (0, 40 * MB, 80 * MB):
        rpcs += client.admit_read(0, off, 4096, now=0)
    assert [r.pages for r in rpcs] == [1, 1, 1]


def test_dispatch_blocked_when_window_full():
    engine, ost, client, _ = make_client(pages=16, window=8)
    for _ in range(9):
        client.add_read_rpc(1, now=0)
    assert client.maybe_dispatch(0) == 8
    assert len(client.inflight) == 8
    assert client.maybe_dispatch(0) == 0
    assert len(client.pending) == 1


def test_dispatch_fills_window_remainder():
    engine, ost, client, _ = make_client(pages=16, window=8)
    for _ in range(3):
        client.add_read_rpc(1, now=0)
    client.maybe_dispatch(0)
    assert len(client.inflight) == 3
    for _ in range(10):
        client.add_read_rpc(1, now=0)
    assert client.maybe_dispatch(0) == 5


def test_idle_partial_extent_dispatches_on_timeout():
    engine, ost, client, departed = make_client(pages=1024)
    client.admit_write(0, 0, 1 * MB, now=0)
    assert not departed
    engine.run_until(1_000_000)
    assert departed and departed[0].trigger == TRIGGER_TIMEOUT
    assert departed[0].pages == 256


def test_write_completion_releases_bytes():
    engine, ost, client, departed = make_client(pages=256, window=8)
    client.admit_write(0, 0, 1 * MB, now=0)  # one full 256-page extent
    assert client.dirty_bytes == 1 * MB
    engine.run_to_exhaustion()
    assert client.dirty_bytes == 0
    assert client.counters.total_completed_write_bytes == 1 * MB


def test_read_completion_leaves_dirty_untouched():
    engine, ost, client, _ = make_client()
    client.admit_write(0, 0, 8192, now=0)
    dirty = client.dirty_bytes
    client.admit_read(0, 1 * MB, 8192, now=0)
    engine.run_until(10_000)
    assert client.dirty_bytes == dirty


def test_completing_unknown_rpc_is_an_error():
    engine, ost, client, _ = make_client()
    from carat.client import Rpc

    with pytest.raises(RuntimeError):
        client.on_rpc_complete(Rpc("read", 1, "read", 0), now=0)


def test_rpc_config_change_reshapes_future_extents():
    engine, ost, client, departed = make_client(pages=1024, window=8)
    client.apply_rpc_config(RpcConfig(256, 64), now=0)
    client.admit_write(0, 0, 2 * MB, now=0)
    assert [r.pages for r in departed] == [256, 256]


def test_rpc_config_change_seals_open_extents_at_old_geometry():
    engine, ost, client, departed = make_client(pages=1024, window=8)
    client.admit_write(0, 0, 1 * MB, now=0)  # 256 pages, open
    client.apply_rpc_config(RpcConfig(256, 64), now=0)
    assert not client.open_extents
    assert departed and departed[0].pages == 256


def test_window_shrink_never_evicts_inflight():
    engine, ost, client, _ = make_client(pages=16, window=64)
    for _ in range(20):
        client.add_read_rpc(1, now=0)
    client.maybe_dispatch(0)
    assert len(client.inflight) == 20
    client.apply_rpc_config(RpcConfig(16, 8), now=0)
    assert len(client.inflight) == 20  # no eviction
    client.add_read_rpc(1, now=0)
    assert client.maybe_dispatch(0) == 0  # no new dispatch until below 8


def test_reapplying_same_config_is_a_noop():
    engine, ost, client, departed = make_client(pages=1024, window=8)
    client.admit_write(0, 0, 1 * MB, now=0)
    open_before = dict(client.open_extents)
    client.apply_rpc_config(RpcConfig(1024, 8), now=0)
    assert client.open_extents == open_before
    assert not departed


def test_cache_raise_retries_blocked_writers():
    engine, ost, client, _ = make_client(pages=1024, window=64, cache_mb=32)
    client.admit_write(0, 0, 33 * MB, now=0)
    assert client.blocked_writers
    client.apply_cache_config(CacheConfig(2048), now=0)
    assert not client.blocked_writers
    assert client.counters.total_admitted_write_bytes == 33 * MB


def test_cache_shrink_flushes_oldest_until_under_limit():
    engine, ost, client, departed = make_client(pages=1024, window=64, cache_mb=2048)
    # 100 MB of dirty data held in 50 half-filled (open) extents.
    for i in range(50):
        client.admit_write(0, i * 4 * MB, 2 * MB, now=0)
    assert client.dirty_bytes == 100 * MB
    assert len(client.open_extents) == 50
    client.apply_cache_config(CacheConfig(32), now=0)
    pressure_bytes = sum(r.payload_bytes for r in departed if r.trigger == TRIGGER_PRESSURE)
    assert pressure_bytes >= 100 * MB - 32 * MB
    engine.run_to_exhaustion()
    assert client.dirty_bytes <= 32 * MB


def test_cache_noop_reapply_causes_no_flush():
    engine, ost, client, departed = make_client(pages=1024, window=8, cache_mb=256)
    client.admit_write(0, 0, 1 * MB, now=0)
    client.apply_cache_config(CacheConfig(256), now=0)
    assert not departed


def test_sequential_aligned_writes_trigger_only_full_dispatches():
    engine, ost, client, departed = make_client(pages=256, window=64, cache_mb=2048)
    for i in range(16):
        client.admit_write(0, i * MB, MB, now=0)
    assert departed
    assert all(r.trigger == TRIGGER_FULL for r in departed)


def test_in_place_rewrite_of_open_extent_costs_nothing():
    engine, ost, client, _ = make_client(pages=1024)
    client.admit_write(0, 0, 8192, now=0)
    dirty = client.dirty_bytes
    client.admit_write(0, 0, 8192, now=0, in_place_hit=True)
    assert client.dirty_bytes == dirty
    assert client.counters.inplace_bytes == 8192
