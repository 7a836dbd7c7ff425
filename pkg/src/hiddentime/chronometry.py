"""Counting-quanta clock: physical time read off a detector's queue.

A button switch halfway between the source and the detector fires both
ways at once.  On one side the source emits its photon; on the other a valve
opens and a laser starts feeding the detector one quantum per
``laser_period`` ticks, the first landing one period after the opening.
The detector develops queued searches strictly one at a time, so the number
of laser quanta absorbed before the source photon equals the number of
laser entries queued ahead of it: ``floor(distance / laser_period)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .engine import Engine, PhotonClock, ProtocolError
from .lattice import Lattice, LatticeError, NodeKind, build_chain
from .rng import RngStream


class ClockNotStopped(RuntimeError):
    pass


@dataclass(frozen=True)
class ButtonSwitch:
    arm_delay: int
    midpoint_node: int | None = None


@dataclass
class ClockRun:
    distance: int
    laser_period: int
    reading: int
    seed: int
    raw_reading: int
    final_tick: int
    engine: Engine | None = None


def trigger_button(
    engine: Engine,
    sw: ButtonSwitch,
    *,
    source: int | None = None,
    detector: int | None = None,
    laser: int | None = None,
    laser_period: int | None = None,
) -> int:
    """Arm the source emission and the valve opening for ``now + arm_delay``.

    Returns the id of the source photon's transaction, whose absorption
    stops the detector's clock.
    """
    lattice = engine.lattice
    if sw.arm_delay < 0:
        raise ValueError("arm delay must be >= 0")
    source = lattice.sources[0] if source is None else source
    detector = lattice.detectors[0] if detector is None else detector
    laser = lattice.laser_for(detector) if laser is None else laser
    if laser is None:
        raise LatticeError(f"detector {detector} has no laser")
    period = lattice.meta.get("laser_period", 1) if laser_period is None else laser_period
    if sw.midpoint_node is not None:
        dist = lattice.distances(sw.midpoint_node)
        to_source, to_valve = dist.get(source), dist.get(detector)
        if to_source != to_valve:
            raise ValueError(
                f"button switch is not equidistant: {to_source} ticks to source, {to_valve} to valve"
            )
        if to_source != sw.arm_delay:
            raise ValueError(f"arm delay {sw.arm_delay} does not match midpoint distance {to_source}")
    fire = engine.now + sw.arm_delay
    txn = engine.start_transaction(source, at=fire)
    engine.watched[txn] = detector
    if detector not in engine.clocks:
        engine.attach_clock(detector)
    engine.open_valve(laser, detector, fire, period)
    return txn


def read_flight_time(clock: PhotonClock) -> int:
    if not clock.stopped:
        raise ClockNotStopped("the source photon has not been absorbed yet")
    return clock.absorbed_quanta


def midpoint_switch(lattice: Lattice) -> ButtonSwitch:
    """Button switch for a chain: a real midpoint node when the length is even."""
    length = lattice.meta["chain_length"]
    if length % 2 == 0:
        return ButtonSwitch(length // 2, lattice.node_at((length // 2, 0)))
    return ButtonSwitch(length // 2)


def run_clock(distance: int, laser_period: int = 1, seed: int = 0, *,
              relay_distance: int = 0, record: bool = False) -> ClockRun:
    """One button-switch scenario on a uniform chain.

    With ``relay_distance`` the counter sits that many ticks past the first
    detector, which relays the photon on; the reading is corrected by the
    quanta counted during the relay leg.
    """
    if distance < 1:
        raise LatticeError("distance must be >= 1")
    if relay_distance < 0:
        raise ValueError("relay distance must be >= 0")
    lattice = build_chain(distance + relay_distance, laser_period)
    engine = Engine(lattice, rng=RngStream(seed, "arbitration"), record=record)
    sw = midpoint_switch(build_chain(distance, laser_period)) if relay_distance else midpoint_switch(lattice)
    if relay_distance:
        sw = ButtonSwitch(sw.arm_delay)
    trigger_button(engine, sw)
    final = engine.run_until_quiescent()
    raw = read_flight_time(engine.clocks[lattice.detectors[0]])
    reading = raw - relay_distance // laser_period if relay_distance else raw
    return ClockRun(distance, laser_period, reading, seed, raw, final, engine)


def flight_time_vs_distance(lengths: Sequence[int], laser_period: int = 1, seed: int = 0,
                            *, relay_distance: int = 0) -> list[tuple[int, int]]:
    if not lengths:
        raise ValueError("lengths must be non-empty")
    return [(d, run_clock(d, laser_period, seed, relay_distance=relay_distance).reading)
            for d in lengths]
