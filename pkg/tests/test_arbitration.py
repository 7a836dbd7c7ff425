import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from hiddentime.arbitration import (
    ArbitrationError,
    LotteryWeights,
    NoDetectorReachable,
    PendingArbitration,
    WAIT,
    arbitrate,
    collect_query,
    lottery,
    resolve_at_source,
)
from hiddentime.engine import Engine
from hiddentime.lattice import Edge, build_grid
from hiddentime.rng import RngStream
from hiddentime.signals import NullQuery, Query

NODE = 9


def q(edge_id, weight, detector=None, txn=0):
    edge = Edge(edge_id, NODE if detector is None else detector, NODE, 1)
    return Query(txn, detector if detector is not None else 100 + edge_id, None, complex(math.sqrt(weight)),
                 weight, edge, 0, 0, 0)


def null(edge_id, txn=0):
    return NullQuery(txn, Edge(edge_id, 50 + edge_id, NODE, 1), 0, 0, 0)


def pending(n, txn=0):
    return PendingArbitration(NODE, txn, n, [Edge(99, 0, NODE, 1)])


def test_lottery_single_key():
    assert lottery([("only", 1.0)], RngStream(0)) == "only"


def test_lottery_consumes_one_draw():
    rng = RngStream(0)
    lottery([("a", 1.0), ("b", 2.0), ("c", 0.0)], rng)
    assert rng.draws == 1


def test_lottery_even_split_frequency():
    rng = RngStream(1, "lottery")
    counts = Counter(lottery([("a", 1.0), ("b", 1.0)], rng) for _ in range(200_000))
    assert counts["a"] / 200_000 == pytest.approx(0.5, abs=0.005)


def test_lottery_all_zero_is_uniform():
    rng = RngStream(2)
    counts = Counter(lottery([(i, 0.0) for i in range(3)], rng) for _ in range(30_000))
    assert set(counts) == {0, 1, 2}
    _, p = sps.chisquare(list(counts.values()))
    assert p > 0.001


@pytest.mark.parametrize("bad", [-1.0, math.nan, math.inf])
def test_lottery_rejects_bad_weights(bad):
    with pytest.raises(ValueError):
        LotteryWeights([("a", 1.0), ("b", bad)])
    with pytest.raises(ValueError):
        LotteryWeights([])


def test_three_way_survivor_frequencies():
    rng = RngStream(3, "survivors")
    weights = [0.25, 0.25, 0.5]
    n = 100_000
    counts = Counter()
    for _ in range(n):
        fwd = arbitrate(PendingArbitration(NODE, 0, 3, [], [q(i, w) for i, w in enumerate(weights)]), rng=rng)
        counts[fwd.survivor.edge.id] += 1
    freqs = [counts[i] / n for i in range(3)]
    assert freqs == pytest.approx(weights, abs=0.01)
    _, p = sps.chisquare([counts[i] for i in range(3)], [w * n for w in weights])
    assert p > 0.001


def test_collect_query_waits_then_forwards():
    pend = pending(2)
    rng = RngStream(0)
    assert collect_query(NODE, q(1, 1.0), pend, rng=rng) is WAIT
    fwd = collect_query(NODE, null(2), pend, rng=rng)
    assert fwd.survivor.edge.id == 1
    assert fwd.weight == 1.0
    assert [e.id for e in fwd.ribs] == [99]


def test_all_null_forwards_null():
    pend = pending(2)
    collect_query(NODE, null(1), pend)
    fwd = collect_query(NODE, null(2), pend)
    assert fwd.is_null


def test_overflow_and_misdelivery_are_faults():
    pend = pending(1)
    collect_query(NODE, null(1), pend)
    with pytest.raises(ArbitrationError):
        collect_query(NODE, null(2), pend)
    with pytest.raises(ArbitrationError):
        collect_query(NODE, q(1, 1.0, txn=5), pending(1))
    with pytest.raises(ArbitrationError):
        collect_query(NODE + 1, q(1, 1.0), pending(1))


def test_forward_merges_amplitude_and_weight():
    fwd = arbitrate(PendingArbitration(NODE, 0, 2, [], [q(1, 1.0), q(2, 4.0)]), rng=RngStream(0))
    assert fwd.amplitude == pytest.approx(3.0)
    assert fwd.weight == pytest.approx(5.0)


@settings(max_examples=50, deadline=None)
@given(
    weights=st.lists(st.floats(0.0, 10.0), min_size=1, max_size=6),
    seed=st.integers(0, 2 ** 32 - 1),
    data=st.data(),
)
def test_survivor_independent_of_arrival_order(weights, seed, data):
    replies = [q(i, w) for i, w in enumerate(weights)]
    order = data.draw(st.permutations(replies))
    a = arbitrate(PendingArbitration(NODE, 0, len(weights), [], replies), rng=RngStream(seed))
    b = arbitrate(PendingArbitration(NODE, 0, len(weights), [], list(order)), rng=RngStream(seed))
    assert a.survivor.edge.id == b.survivor.edge.id


def test_resolve_requires_a_query():
    with pytest.raises(NoDetectorReachable):
        resolve_at_source(0, 0, [null(1), null(2)], RngStream(0))


def test_resolve_two_equal_detectors():
    rng = RngStream(5, "source")
    n = 100_000
    wins = Counter(resolve_at_source(0, 0, [q(1, 2.0, 7), q(2, 2.0, 8)], rng).winner for _ in range(n))
    assert wins[7] / n == pytest.approx(0.5, abs=0.01)


def test_resolve_refuses_other_querying_detectors():
    res = resolve_at_source(0, 0, [q(1, 1.0, 7), q(2, 0.0, 8)], RngStream(0), querying=[7, 8, 9])
    assert res.winner == 7
    assert res.refused_detectors == [8, 9]


def test_corner_detectors_win_equally():
    lat = build_grid(5, 5, [(2, 2)], [(0, 0), (4, 0), (0, 4), (4, 4)])
    rng = RngStream(6, "arbitration")
    n = 100_000
    wins = Counter()
    for _ in range(n):
        lat.clear_marks()
        engine = Engine(lat, rng=rng, record=False)
        tid = engine.start_transaction(lat.sources[0])
        engine.run_until_quiescent()
        wins[engine.transactions[tid].resolution.winner] += 1
    freqs = np.array([wins[d] for d in lat.detectors]) / n
    assert freqs == pytest.approx([0.25] * 4, abs=0.01)
