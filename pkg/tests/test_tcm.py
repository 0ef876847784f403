import math
from decimal import Decimal

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_config
from rrara.tcm import LatencySource, TcmClock, charge_inference, latency_to_frames
from rrara.world import GoToCell, UsageError, begin_action, new_world


def decimal_frames(t: float, fps: float) -> int:
    """Exact decimal product, independent of binary float rounding."""
    return math.ceil(Decimal(repr(t)) * Decimal(repr(fps)))


@pytest.mark.parametrize("t, frames", [(2.35, 71), (0.0, 0), (4.11, 124), (3.26, 98), (15.60, 468), (1.0, 30)])
def test_table_latencies_at_30_fps(t, frames):
    assert latency_to_frames(t, 30) == frames == decimal_frames(t, 30)


@given(st.decimals(min_value=0, max_value=100, places=2), st.sampled_from([10, 24, 30, 60]))
def test_matches_decimal_oracle(t, fps):
    assert latency_to_frames(float(t), fps) == math.ceil(t * fps)


def test_negative_latency_rejected():
    with pytest.raises(UsageError):
        latency_to_frames(-0.1, 30)


@given(st.decimals(min_value=0, max_value=20, places=2), st.decimals(min_value=0, max_value=20, places=2))
def test_additivity_within_one_frame(a, b):
    split = latency_to_frames(float(a), 30) + latency_to_frames(float(b), 30)
    joint = latency_to_frames(float(a + b), 30)
    assert 0 <= split - joint <= 1
    if (a * 30) % 1 == 0 and (b * 30) % 1 == 0:
        assert split == joint


def test_charge_zero_is_noop():
    world = new_world(make_config(), 0)
    before = world.fingerprint()
    clock = TcmClock(30)
    assert charge_inference(world, clock, 0.0) == []
    assert world.fingerprint() == before


def test_charge_one_second_advances_thirty_frames():
    world = new_world(make_config(initial_fires=((1, 1),), ignition_frames=1000), 0)
    clock = TcmClock(30)
    events = charge_inference(world, clock, 1.0)
    assert len(events) == 30
    assert world.frame == 30
    assert world.burning_cells() == [(1, 1)]
    assert clock.charged_frames == 30
    assert clock.charged_seconds == 1.0


def test_disabled_clock_charges_nothing():
    world = new_world(make_config(), 0)
    clock = TcmClock(30, enabled=False)
    assert charge_inference(world, clock, 10.0) == []
    assert world.frame == 0
    assert clock.charged_frames == 0


def test_charge_stops_at_budget():
    world = new_world(make_config(frame_budget=20), 0)
    clock = TcmClock(30)
    events = charge_inference(world, clock, 5.0)
    assert len(events) == 20
    assert clock.charged_frames == 20


def test_in_flight_action_keeps_running_while_charging():
    world = new_world(make_config(agent_start=(2, 0)), 0)
    begin_action(world, GoToCell((2, 4)))
    events = charge_inference(world, TcmClock(30), 1.0)
    assert world.agent.position == (2, 4)
    assert sum(e.action_completed is not None for e in events) == 1


def test_latency_schedule_wraps(tmp_path):
    path = tmp_path / "sched.txt"
    path.write_text("# seconds\n0.5\n2.0\n\n1.25\n")
    src = LatencySource.from_schedule_file(path)
    assert [src.next_virtual() for _ in range(5)] == [0.5, 2.0, 1.25, 0.5, 2.0]


def test_bad_schedule_line(tmp_path):
    path = tmp_path / "sched.txt"
    path.write_text("0.5\nfast\n")
    with pytest.raises(ValueError, match=":2:"):
        LatencySource.from_schedule_file(path)


def test_wallclock_measures_elapsed_time():
    calls = []
    src = LatencySource(mode="wallclock")
    result, t = src.timed(lambda: calls.append(1) or "ok")
    assert result == "ok" and calls == [1]
    assert 0 <= t < 1.0


def test_virtual_latency_is_configured_value():
    assert LatencySource(seconds=3.26).timed(lambda: None)[1] == 3.26
