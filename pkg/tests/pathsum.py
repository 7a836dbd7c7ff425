"""Walk-enumeration oracle for detector weights.

Independent of the engine: amplitudes are pushed tick by tick over explicit
walk states (node, previous node, which-path label).  A walk may not step
straight back to the node it came from, may not pass through the source or
a detector, and may only visit a node within ``extra_hops`` ticks of the
shortest distance to it.  Every step multiplies by ``exp(i k)``.
"""
from __future__ import annotations

import cmath
from collections import defaultdict, deque


def _neighbours(lattice):
    nb = defaultdict(list)
    for e in lattice.edges:
        assert e.length == 1, "oracle handles unit ribs only"
        nb[e.src].append(e.dst)
    return nb


def _relay_distances(lattice, source, nb):
    dist = {source: 0}
    todo = deque([source])
    while todo:
        n = todo.popleft()
        if n != source and lattice.nodes[n].kind.value != "vacuum":
            continue
        for m in nb[n]:
            if m not in dist:
                dist[m] = dist[n] + 1
                todo.append(m)
    return dist


def detector_weights(lattice, k: float, extra_hops: int, markers=None) -> dict:
    """Born weight per detector: sum over labels of |sum of walk amplitudes|^2."""
    markers = markers or {}
    nb = _neighbours(lattice)
    source = next(n.id for n in lattice.nodes if n.kind.value == "source")
    dist = _relay_distances(lattice, source, nb)
    horizon = max(dist.values()) + extra_hops
    step = cmath.exp(1j * k)
    at_detector = defaultdict(complex)  # (detector, label) -> amplitude
    states = {(source, None, None): 1 + 0j}
    for t in range(1, horizon + 1):
        nxt = defaultdict(complex)
        for (n, prev, label), amp in states.items():
            for m in nb[n]:
                if m == prev or t > dist[m] + extra_hops:
                    continue
                kind = lattice.nodes[m].kind.value
                a = amp * step
                if kind == "detector":
                    at_detector[(m, label)] += a
                elif kind == "vacuum":
                    nxt[(m, n, markers.get(m, label))] += a
        states = nxt
    weights = defaultdict(float)
    for (d, _), a in at_detector.items():
        weights[d] += abs(a) ** 2
    return dict(weights)
