import json
import math

import pytest
from hypothesis import given, settings, strategies as st

import pathsum
from hiddentime.engine import Engine, LivelockDetected, ProtocolError, loop_erase
from hiddentime.lattice import build_chain, build_grid, underlying_ribs
from hiddentime.rng import RngStream

TRACE_FIELDS = {"tick", "kind", "transaction", "edge_from", "edge_to", "amp_re", "amp_im"}


def run_single(lattice, seed=0, **kw):
    engine = Engine(lattice, rng=RngStream(seed, "arbitration"), **kw)
    tid = engine.start_transaction(lattice.sources[0])
    engine.run_until_quiescent()
    return engine, engine.transactions[tid]


def corners_grid():
    return build_grid(5, 5, [(2, 2)], [(0, 0), (4, 0), (0, 4), (4, 4)])


def test_one_confirm_and_refuses_for_every_loser():
    engine, txn = run_single(corners_grid(), seed=3)
    assert txn.confirms == 1
    assert txn.refuses == 3
    assert txn.closed
    txn.resolution.check_path(engine.lattice)
    assert len(txn.resolution.confirmed_path) == 5


def test_corner_weights_are_symmetric():
    _, txn = run_single(corners_grid())
    assert set(txn.detector_weights.values()) == {36.0}


def test_single_detector_always_wins():
    lat = build_grid(3, 3, [(0, 0)], [(2, 2)])
    for seed in range(20):
        _, txn = run_single(lat, seed=seed)
        assert txn.resolution.winner == lat.detectors[0]
        assert txn.refuses == 0


def test_transcript_replays_identically():
    a, _ = run_single(corners_grid(), seed=11, wavenumber=0.3, extra_hops=2)
    b, _ = run_single(corners_grid(), seed=11, wavenumber=0.3, extra_hops=2)
    assert a.transcript_hash() == b.transcript_hash()
    assert a.transcript == b.transcript


def test_hidden_ticks_never_decrease():
    engine, _ = run_single(corners_grid(), seed=1, extra_hops=2)
    ticks = [row[0] for row in engine.transcript]
    assert ticks == sorted(ticks)


def test_trace_file_fields(tmp_path):
    engine, _ = run_single(corners_grid(), seed=2)
    path = tmp_path / "trace.jsonl"
    engine.write_trace(path)
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert rows and all(TRACE_FIELDS <= set(r) for r in rows)
    kinds = {r["kind"] for r in rows}
    assert {"emit", "search", "query", "lottery", "resolve", "confirm", "refuse"} <= kinds
    lottery = next(r for r in rows if r["kind"] == "lottery")
    assert "candidates" in lottery and "survivor" in lottery


def test_zero_budget_marks_follow_shortest_distances():
    lat = build_grid(4, 4, [(0, 0)], [(3, 3), (3, 0)])
    engine, txn = run_single(lat)
    dist = lat.distances(lat.sources[0])
    marked = [lat.edges[e] for e in lat.marks[txn.id]]
    assert marked
    for e in marked:
        assert dist[e.dst] == dist[e.src] + 1


def test_centre_of_3x3_has_two_underlying_ribs():
    lat = build_grid(3, 3, [(0, 0)], [(2, 2)])
    _, txn = run_single(lat)
    centre = lat.node_at((1, 1))
    ribs = underlying_ribs(lat, centre, txn.id)
    assert sorted(lat.nodes[e.src].pos for e in ribs) == [(0, 1), (1, 0)]


@settings(max_examples=60, deadline=None)
@given(
    w=st.integers(2, 4),
    h=st.integers(2, 4),
    k=st.floats(0, 2 * math.pi),
    extra=st.integers(0, 3),
    data=st.data(),
)
def test_detector_weights_match_walk_enumeration(w, h, k, extra, data):
    cells = [(x, y) for x in range(w) for y in range(h)]
    chosen = data.draw(st.lists(st.sampled_from(cells), min_size=2, max_size=4, unique=True))
    lat = build_grid(w, h, [chosen[0]], chosen[1:])
    _, txn = run_single(lat, wavenumber=k, extra_hops=extra)
    oracle = pathsum.detector_weights(lat, k, extra)
    weights = txn.detector_weights
    for d in lat.detectors:
        assert weights.get(d, 0.0) == pytest.approx(oracle.get(d, 0.0), abs=1e-9)


def test_livelock_bound():
    lat = build_chain(30)
    engine = Engine(lat, rng=RngStream(0), max_tick=10)
    engine.start_transaction(lat.sources[0])
    with pytest.raises(LivelockDetected):
        engine.run_until_quiescent()


def test_only_sources_and_lasers_emit():
    lat = build_chain(3)
    engine = Engine(lat, rng=RngStream(0))
    vacuum = lat.node_at((1, 0))
    with pytest.raises(ProtocolError):
        engine.start_transaction(vacuum)


def test_negative_window_rejected():
    with pytest.raises(ValueError):
        Engine(build_chain(2), extra_hops=-1)


def test_loop_erase_removes_revisits():
    lat = build_grid(3, 1, [(0, 0)], [(2, 0)])
    a, b, c = (lat.node_at((x, 0)) for x in range(3))
    walk = [lat.edge_between(a, b), lat.edge_between(b, c), lat.edge_between(c, b), lat.edge_between(b, c)]
    erased = loop_erase(walk)
    assert [(e.src, e.dst) for e in erased] == [(a, b), (b, c)]


def test_two_transactions_share_detector_queue():
    lat = build_grid(3, 3, [(1, 1)], [(0, 0), (2, 2)])
    engine = Engine(lat, rng=RngStream(4, "arbitration"), extra_hops=1)
    ids = [engine.start_transaction(lat.sources[0], at=t) for t in (0, 1, 2)]
    engine.run_until_quiescent()
    for tid in ids:
        txn = engine.transactions[tid]
        assert txn.confirms == 1 and txn.closed
    assert len([a for a in engine.absorptions if a[3] == "source"]) == 3
