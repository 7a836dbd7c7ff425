import pytest
from hypothesis import given, settings, strategies as st

from hiddentime.chronometry import (
    ButtonSwitch,
    ClockNotStopped,
    flight_time_vs_distance,
    midpoint_switch,
    read_flight_time,
    run_clock,
    trigger_button,
)
from hiddentime.engine import Engine, PhotonClock
from hiddentime.lattice import build_chain, build_grid
from hiddentime.rng import RngStream


@pytest.mark.parametrize(
    "distance, period, reading",
    [(10, 1, 10), (20, 2, 10), (5, 10, 0), (1, 1, 1), (8, 2, 4), (16, 2, 8), (7, 3, 2)],
)
def test_reading_is_floor_of_distance_over_period(distance, period, reading):
    assert run_clock(distance, period).reading == reading


def test_linear_in_distance():
    assert flight_time_vs_distance([5, 10, 20, 40, 80], 1, seed=3) == [(5, 5), (10, 10), (20, 20), (40, 40), (80, 80)]


@settings(max_examples=25, deadline=None)
@given(distance=st.integers(1, 40), period=st.integers(1, 6), seed=st.integers(0, 1000))
def test_reading_property(distance, period, seed):
    assert run_clock(distance, period, seed).reading == distance // period


def test_relay_correction():
    run = run_clock(10, 1, relay_distance=6)
    assert run.raw_reading == 16
    assert run.reading == 10


def test_quanta_absorbed_before_photon():
    run = run_clock(6, 2, record=True)
    absorbed = run.engine.absorptions
    photon_index = next(i for i, a in enumerate(absorbed) if a[3] == "source")
    assert photon_index == 3
    assert all(a[3] == "laser" for a in absorbed[:photon_index])


def test_clock_not_stopped():
    with pytest.raises(ClockNotStopped):
        read_flight_time(PhotonClock())


def test_midpoint_must_be_equidistant():
    lat = build_chain(6)
    engine = Engine(lat, rng=RngStream(0))
    off_centre = lat.node_at((2, 0))
    with pytest.raises(ValueError, match="equidistant"):
        trigger_button(engine, ButtonSwitch(2, off_centre))
    with pytest.raises(ValueError):
        trigger_button(engine, ButtonSwitch(-1))


def test_midpoint_switch_even_and_odd():
    even = midpoint_switch(build_chain(8))
    assert even.arm_delay == 4 and even.midpoint_node is not None
    odd = midpoint_switch(build_chain(7))
    assert odd.arm_delay == 3 and odd.midpoint_node is None


def test_detector_without_laser():
    lat = build_grid(3, 1, [(0, 0)], [(2, 0)])
    with pytest.raises(Exception, match="laser"):
        trigger_button(Engine(lat, rng=RngStream(0)), ButtonSwitch(0))


def test_distance_validation():
    with pytest.raises(ValueError):
        run_clock(0)
    with pytest.raises(ValueError):
        run_clock(5, relay_distance=-1)
    with pytest.raises(ValueError):
        flight_time_vs_distance([])
