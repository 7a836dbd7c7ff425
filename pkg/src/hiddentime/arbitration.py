"""Query lotteries: per-node survival and the final choice at the source.

Each node (more precisely each hidden-time instance of a node) waits until
every search branch it sent out has been answered, then lets exactly one
incoming query survive.  The survivor is copied into every underlying rib
and carries the summed weight of all queries that arrived, split evenly
over the copies.  Because weights flow like a conserved quantity, the
source's final lottery picks detector ``d`` with probability
``w_d / sum(w)`` however the lattice branches and rejoins.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterable, Sequence

from .lattice import Edge
from .signals import NullQuery, Query, Reply


class ArbitrationError(RuntimeError):
    """Internal protocol fault (an engine bug, not a user error)."""


class NoDetectorReachable(RuntimeError):
    pass


@dataclass
class LotteryWeights:
    entries: list[tuple[Hashable, float]]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("lottery needs at least one entry")
        for key, w in self.entries:
            if not math.isfinite(w) or w < 0:
                raise ValueError(f"invalid lottery weight {w!r} for {key!r}")


def lottery(weights: LotteryWeights | Sequence[tuple[Hashable, float]], rng) -> Hashable:
    """Pick a key with probability proportional to its weight.

    Exactly one ``rng.uniform()`` draw is consumed.  All-zero weights fall
    back to a uniform choice.
    """
    if not isinstance(weights, LotteryWeights):
        weights = LotteryWeights(list(weights))
    entries = weights.entries
    u = rng.uniform()
    total = 0.0
    for _, w in entries:
        total += w
    if total <= 0.0:
        return entries[min(int(u * len(entries)), len(entries) - 1)][0]
    target = u * total
    acc = 0.0
    for key, w in entries:
        acc += w
        if target < acc:
            return key
    return next(key for key, w in reversed(entries) if w > 0)


@dataclass
class PendingArbitration:
    node: int
    transaction: int
    expected_branches: int
    ribs: list[Edge] = field(default_factory=list)
    arrived: list[Reply] = field(default_factory=list)
    tick: int = 0


class Wait:
    def __repr__(self) -> str:
        return "Wait"


WAIT = Wait()


@dataclass
class Forward:
    """Outcome of a completed arbitration.

    ``survivor`` is ``None`` when every branch came back empty.
    """

    survivor: Query | None
    ribs: list[Edge]
    weight: float = 0.0
    amplitude: complex = 0j
    candidates: list[tuple[int, float]] = field(default_factory=list)

    @property
    def is_null(self) -> bool:
        return self.survivor is None


def _candidate_key(reply: Reply) -> int:
    return reply.edge.id


def collect_query(
    node: int,
    incoming: Reply,
    pending: PendingArbitration,
    *,
    rng=None,
    weighting: str = "amplitude",
) -> Wait | Forward:
    if incoming.transaction != pending.transaction:
        raise ArbitrationError("query delivered to the wrong transaction")
    if node != pending.node:
        raise ArbitrationError("query delivered to the wrong node")
    pending.arrived.append(incoming)
    if len(pending.arrived) > pending.expected_branches:
        raise ArbitrationError(
            f"node {node}: {len(pending.arrived)} replies for {pending.expected_branches} branches"
        )
    if len(pending.arrived) < pending.expected_branches:
        return WAIT
    return arbitrate(pending, rng=rng, weighting=weighting)


def arbitrate(pending: PendingArbitration, *, rng=None, weighting: str = "amplitude") -> Forward:
    """Run the lottery over a complete set of replies."""
    queries = sorted((r for r in pending.arrived if isinstance(r, Query)), key=_candidate_key)
    if not queries:
        return Forward(None, list(pending.ribs))
    if weighting == "amplitude":
        entries = [(q.edge.id, q.weight) for q in queries]
    elif weighting == "uniform":
        entries = [(q.edge.id, 1.0) for q in queries]
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    if rng is None:
        if len(queries) > 1:
            raise ArbitrationError("lottery with several candidates needs an rng")
        winner_key = queries[0].edge.id
    else:
        winner_key = lottery(LotteryWeights(entries), rng)
    survivor = next(q for q in queries if q.edge.id == winner_key)
    weight = 0.0
    amplitude = 0j
    for q in queries:
        weight += q.weight
        amplitude += q.amplitude
    return Forward(survivor, list(pending.ribs), weight, amplitude, entries)


@dataclass
class TransactionResolution:
    transaction: int
    winner: int
    confirmed_path: list[int]
    refused_detectors: list[int]
    winning_query: Query | None = None

    def check_path(self, lattice) -> None:
        path = self.confirmed_path
        if len(set(path)) != len(path):
            raise ArbitrationError(f"confirmed path revisits a node: {path}")
        if path[-1] != self.winner:
            raise ArbitrationError("confirmed path does not end at the winner")
        for a, b in zip(path, path[1:]):
            lattice.edge_between(a, b)


def resolve_at_source(
    source: int,
    transaction: int,
    arrived: Iterable[Reply],
    rng,
    *,
    path_of: Callable[[Query], list[int]] | None = None,
    querying: Iterable[int] | None = None,
    unconditional: bool = False,
) -> TransactionResolution:
    """Final lottery at the emitting node.

    ``path_of`` maps the winning branch's query to the node sequence from the
    source down to its detector (the chain of per-node survivors); without it
    the path is just ``[source, detector]``.  ``unconditional`` skips the draw
    for sources that always grant (the laser).
    """
    queries = sorted((r for r in arrived if isinstance(r, Query)), key=_candidate_key)
    if not queries:
        raise NoDetectorReachable(f"transaction {transaction}: no detector answered")
    if unconditional and len({q.detector for q in queries}) == 1:
        winner = queries[0]
    else:
        key = lottery(LotteryWeights([(q.edge.id, q.weight) for q in queries]), rng)
        winner = next(q for q in queries if q.edge.id == key)
    path = path_of(winner) if path_of is not None else [source, winner.detector]
    detectors = list(querying) if querying is not None else [q.detector for q in queries]
    refused = sorted({d for d in detectors if d != winner.detector})
    return TransactionResolution(transaction, winner.detector, path, refused, winner)
