import pytest
from hypothesis import given, strategies as st

from carat.metrics import (
    ActivityPhase,
    ClientCounters,
    estimated_cache_update,
    take_snapshot,
    update_phase,
)

MB = 1024 * 1024


def snap_from(counters, start=0, end=500_000, pages=1024, window=8, cache=256, prev=None,
              dirty_delta=0):
    return take_snapshot(
        counters,
        interval_start=start,
        interval_end=end,
        dirty_delta_bytes=dirty_delta,
        pages_per_rpc=pages,
        rpcs_in_flight=window,
        max_dirty_mb=cache,
        previous=prev,
    )


def test_page_utilization_is_mean_pages_over_max():
    c = ClientCounters()
    for p in (1024, 512, 256, 256):
        c.write.rpcs_departed += 1
        c.write.pages_departed += p
    snap = snap_from(c)
    assert snap.write.page_util == 0.5


def test_channel_utilization_time_weighted():
    c = ClientCounters()
    c.write.inflight_integral = 4 * 500_000  # mean inflight 4.0 over the interval
    snap = snap_from(c, window=8)
    assert snap.write.channel_util == 0.5


def test_unit_latency_pages_weighted():
    c = ClientCounters()
    c.read.rpcs_completed = 2
    c.read.pages_completed = 2048
    c.read.latency_us_sum = 8000
    snap = snap_from(c)
    assert snap.read.unit_latency == 8000 / 2048  # 3.906 us/page
    assert snap.read.valid


def test_zero_rpc_interval_flagged_invalid():
    snap = snap_from(ClientCounters())
    assert not snap.read.valid and not snap.write.valid
    assert snap.read.unit_latency == 0.0


def test_estimated_cache_update_formula():
    assert estimated_cache_update(100 * MB, 60 * MB, 10 * MB) == 30 * MB
    assert estimated_cache_update(50, 50, 0) == 0
    assert estimated_cache_update(10, 20, -5) == 0  # clamped


def test_snapshot_requires_positive_interval():
    with pytest.raises(ValueError):
        snap_from(ClientCounters(), start=10, end=10)


def test_deltas_zero_on_first_snapshot_then_tracked():
    c1 = ClientCounters()
    c1.write.bytes_completed = 10 * MB
    c1.write.rpcs_completed = 10
    c1.write.pages_completed = 2560
    c1.write.latency_us_sum = 1000
    s1 = snap_from(c1)
    assert s1.d_write_volume == 0
    c2 = ClientCounters()
    c2.write.bytes_completed = 14 * MB
    c2.write.rpcs_completed = 10
    c2.write.pages_completed = 2560
    c2.write.latency_us_sum = 3000
    s2 = snap_from(c2, start=500_000, end=1_000_000, prev=s1)
    assert s2.d_write_volume == 4 * MB
    assert s2.d_write_unit_latency == (3000 - 1000) / 2560


@given(
    lat_a=st.integers(1, 10**6),
    pages_a=st.integers(1, 10**4),
    lat_b=st.integers(1, 10**6),
    pages_b=st.integers(1, 10**4),
)
def test_unit_latency_weighted_mean_consistency(lat_a, pages_a, lat_b, pages_b):
    # Splitting one interval's RPC population into two subsets and recombining
    # their sums gives the same pages-weighted mean latency.
    combined = (lat_a + lat_b) / (pages_a + pages_b)
    ca = ClientCounters()
    ca.read.latency_us_sum = lat_a + lat_b
    ca.read.pages_completed = pages_a + pages_b
    ca.read.rpcs_completed = 2
    assert snap_from(ca).read.unit_latency == combined


def test_phase_active_stays_active():
    phase = ActivityPhase(active=True, inactive_since=None)
    phase, boundary = update_phase(phase, requests_in_window=5, now=1_000_000)
    assert phase.active and not boundary


def test_phase_goes_inactive_on_empty_window():
    phase = ActivityPhase(active=True, inactive_since=None)
    for i in range(3):
        phase, boundary = update_phase(phase, 0, now=(i + 1) * 1_000_000)
        assert not boundary
    assert not phase.active
    assert phase.inactive_since == 1_000_000


def test_resume_after_long_idle_is_a_cache_boundary():
    phase = ActivityPhase(active=True, inactive_since=None)
    phase, _ = update_phase(phase, 0, now=1_000_000)
    phase, boundary = update_phase(phase, 1, now=3_000_000)  # inactive for 2 s
    assert phase.active and boundary


def test_short_idle_resume_is_not_a_boundary():
    phase = ActivityPhase(active=True, inactive_since=None)
    phase, _ = update_phase(phase, 0, now=1_000_000)
    phase, boundary = update_phase(phase, 1, now=1_500_000)  # only 0.5 s idle
    assert phase.active and not boundary
