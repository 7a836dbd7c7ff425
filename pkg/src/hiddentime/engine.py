"""Discrete-event core running in hidden time.

One global integer clock and one priority queue.  Events are ordered by
``(tick, rank, edge id, insertion sequence)`` so that a run is fully
determined by the lattice, the scenario and the random streams.

A node that first hears a search at tick ``t`` accepts further arrivals up
to ``t + extra_hops``; each distinct accepted arrival tick is a separate
hidden-time instance of the node, with its own flood-out and its own query
lottery.  Arrivals outside that window are answered at once with a null
query, which keeps branch counting exact and guarantees termination.
"""
from __future__ import annotations

import cmath
import hashlib
import heapq
import itertools
import json
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .arbitration import (
    ArbitrationError,
    Forward,
    NoDetectorReachable,
    PendingArbitration,
    TransactionResolution,
    Wait,
    arbitrate,
    collect_query,
    resolve_at_source,
)
from .lattice import Edge, Lattice, NodeKind
from .signals import (
    Confirm,
    NullQuery,
    Query,
    Rank,
    Refuse,
    Search,
    born_weight,
    total_amplitude,
)

DEFAULT_MAX_TICK = 10**7


class ProtocolError(RuntimeError):
    pass


class LivelockDetected(ProtocolError):
    pass


class DeadlockDetected(ProtocolError):
    pass


@dataclass
class Instance:
    """A node at one hidden tick of one transaction."""

    node: int
    tick: int
    ribs: list[tuple[Edge, dict]] = field(default_factory=list)
    branches: list[Edge] = field(default_factory=list)
    pending: Optional[PendingArbitration] = None
    survivor_edge: Optional[Edge] = None
    forwarded: int = 0


@dataclass
class QueueEntry:
    transaction: int
    detector: int
    arrival_tick: int
    origin: str  # "laser" or "source"
    amplitude: dict = field(default_factory=dict)
    ribs: list[tuple[Edge, int]] = field(default_factory=list)  # (edge, arrival tick)

    @property
    def weight(self) -> float:
        return born_weight(self.amplitude)


@dataclass
class DetectorQueue:
    detector: int
    entries: list = field(default_factory=list)  # heap of (key, QueueEntry)
    developing: Optional[QueueEntry] = None

    def __len__(self) -> int:
        return len(self.entries)

    def peek(self) -> list[QueueEntry]:
        return [e for _, e in sorted(self.entries, key=lambda item: item[0])]


@dataclass
class PhotonClock:
    absorbed_quanta: int = 0
    stopped: bool = False


@dataclass
class Transaction:
    id: int
    source: int
    kind: str  # "photon" or "laser"
    start_tick: int
    first_edges: Optional[list[int]] = None
    instances: dict = field(default_factory=dict)  # (node, tick) -> Instance
    first_tick: dict = field(default_factory=dict)  # node -> tick
    entries: dict = field(default_factory=dict)  # detector -> QueueEntry
    root: Optional[Instance] = None
    resolution: Optional[TransactionResolution] = None
    group: Any = None
    expected_deliveries: int = 0
    delivered: int = 0
    confirms: int = 0
    refuses: int = 0
    closed: bool = False
    outcome: Any = None
    route: list = field(default_factory=list)

    @property
    def detector_weights(self) -> dict[int, float]:
        return {d: e.weight for d, e in sorted(self.entries.items())}


@dataclass
class PairGroup:
    """Two back-to-back transactions whose outcomes are fixed jointly at the source."""

    arms: dict  # arm label -> transaction id
    rule: Any
    state: dict = field(default_factory=dict)
    resolved: dict = field(default_factory=dict)  # arm label -> TransactionResolution


def loop_erase(route: list[Edge]) -> list[Edge]:
    """Drop cycles from an edge walk, keeping the first visit of each node.

    A survivor chain is a path through (node, tick) instances; with a
    nonzero window it can pass the same node at two ticks.
    """
    nodes = [route[0].src]
    out: list[Edge] = []
    for edge in route:
        if edge.dst in nodes:
            k = nodes.index(edge.dst)
            del nodes[k + 1:]
            del out[k:]
        else:
            nodes.append(edge.dst)
            out.append(edge)
    return out


class Engine:
    def __init__(
        self,
        lattice: Lattice,
        *,
        wavenumber: float = 0.0,
        extra_hops: int = 0,
        weighting: str = "amplitude",
        rng=None,
        outcome_rng=None,
        analyzers: dict | None = None,
        markers: dict | None = None,
        max_tick: int = DEFAULT_MAX_TICK,
        record: bool = True,
    ):
        if extra_hops < 0:
            raise ValueError("extra_hops must be >= 0")
        if weighting not in ("amplitude", "uniform"):
            raise ValueError(f"unknown weighting {weighting!r}")
        self.lattice = lattice
        self.wavenumber = float(wavenumber)
        self.extra_hops = int(extra_hops)
        self.weighting = weighting
        self.rng = rng
        self.outcome_rng = outcome_rng
        self.analyzers = dict(analyzers or {})
        self.markers = dict(markers or {})
        self.max_tick = max_tick
        self.record = record

        self.now = 0
        self._queue: list = []
        self._seq = itertools.count()
        self._txn_ids = itertools.count()
        self.transactions: dict[int, Transaction] = {}
        self.queues: dict[int, DetectorQueue] = {}
        self.clocks: dict[int, PhotonClock] = {}
        self.watched: dict[int, int] = {}  # photon transaction -> detector whose clock it stops
        self.transcript: list[tuple] = []
        self.absorptions: list[tuple[int, int, int, str]] = []  # (tick, detector, txn, origin)
        self.lotteries = 0
        self.contested_lotteries = 0
        self.groups: list[PairGroup] = []
        self._phase = {}

    # -- scheduling ---------------------------------------------------------

    def _push(self, tick: int, rank: int, edge_id: int, item) -> None:
        heapq.heappush(self._queue, (tick, rank, edge_id, next(self._seq), item))

    def _send(self, signal) -> None:
        self._push(signal.due, signal.rank, signal.edge.id, signal)

    def _phase_factor(self, length: int) -> complex:
        f = self._phase.get(length)
        if f is None:
            f = self._phase[length] = cmath.exp(1j * self.wavenumber * length)
        return f

    def _log(self, kind: str, txn: int, edge_from: int, edge_to: int, amp: complex = 0j, **extra) -> None:
        if self.record:
            row = (self.now, kind, txn, edge_from, edge_to, amp.real, amp.imag)
            if extra:
                row = row + (tuple(sorted(extra.items())),)
            self.transcript.append(row)

    # -- transactions -------------------------------------------------------

    def new_transaction(self, source: int, *, kind: str = "photon", first_edges=None) -> Transaction:
        node_kind = self.lattice.kind(source)
        if node_kind not in (NodeKind.SOURCE, NodeKind.LASER):
            raise ProtocolError(f"node {source} ({node_kind.value}) cannot emit")
        txn = Transaction(next(self._txn_ids), source, kind, self.now,
                          list(first_edges) if first_edges is not None else None)
        self.transactions[txn.id] = txn
        return txn

    def start_transaction(self, source: int, *, at: int | None = None, kind: str = "photon",
                          first_edges=None) -> int:
        """Schedule an emission from ``source`` at tick ``at`` (default: now)."""
        txn = self.new_transaction(source, kind=kind, first_edges=first_edges)
        tick = self.now if at is None else at
        txn.start_tick = tick
        self._push(tick, Rank.START, -1, ("emit", txn.id))
        return txn.id

    def start_pair(self, source: int, arms: dict, rule, *, at: int | None = None) -> PairGroup:
        """Emit one transaction per arm; their outcomes are decided together by ``rule``."""
        group = PairGroup({}, rule)
        for label, first_edges in arms.items():
            group.arms[label] = self.start_transaction(source, at=at, first_edges=first_edges)
            self.transactions[group.arms[label]].group = group
        self.groups.append(group)
        tick = self.now if at is None else at
        self._push(tick, Rank.START, -1, ("pair", group))
        return group

    def emit_search(self, source: int, transaction: int) -> list[Search]:
        """Send a unit-amplitude search along every allowed outgoing rib of ``source``."""
        txn = self.transactions[transaction]
        out = self.lattice.out_edges[source]
        if txn.first_edges is not None:
            allowed = set(txn.first_edges)
            out = [e for e in out if e.id in allowed]
        if not out:
            raise ProtocolError(f"source {source} has no outgoing ribs")
        root = Instance(source, self.now)
        txn.root = root
        txn.instances[(source, self.now)] = root
        sent = []
        for edge in out:
            sig = Search(transaction, source, {None: 1 + 0j}, 0, edge, self.now + edge.length, self.now)
            self._send(sig)
            root.branches.append(edge)
            sent.append(sig)
        root.pending = PendingArbitration(source, transaction, len(root.branches), [], tick=self.now)
        self._log("emit", transaction, source, source, 1 + 0j)
        return sent

    # -- search phase -------------------------------------------------------

    def propagate_search(self, sig: Search, node: int) -> None:
        edge = sig.edge
        txn = self.transactions[sig.transaction]
        kind = self.lattice.kind(node)
        f = self._phase_factor(edge.length)
        amp = {label: a * f for label, a in sig.amplitude.items()}
        sig.path_length += edge.length
        self._log("search", txn.id, edge.src, edge.dst, total_amplitude(amp))
        if kind is NodeKind.VACUUM or kind is NodeKind.DETECTOR:
            first = txn.first_tick.setdefault(node, self.now)
            if self.now <= first + self.extra_hops:
                self.lattice.mark(edge, txn.id, self.now, total_amplitude(amp))
                label = self.markers.get(node)
                if label is not None:
                    merged = 0j
                    for a in amp.values():
                        merged += a
                    amp = {label: merged}
                if kind is NodeKind.VACUUM:
                    key = (node, self.now)
                    inst = txn.instances.get(key)
                    if inst is None:
                        inst = txn.instances[key] = Instance(node, self.now)
                        self._push(self.now, Rank.FLUSH, -1, ("flush", txn.id, inst))
                    inst.ribs.append((edge, amp))
                else:
                    entry = txn.entries.get(node)
                    if entry is None:
                        origin = "laser" if txn.kind == "laser" else "source"
                        entry = txn.entries[node] = QueueEntry(txn.id, node, first, origin)
                        self._push(first + self.extra_hops, Rank.FLUSH, -1, ("window", txn.id, node))
                    entry.ribs.append((edge, self.now))
                    for label, a in amp.items():
                        entry.amplitude[label] = entry.amplitude.get(label, 0j) + a
                return
        self._reply_null(txn.id, edge, self.now - edge.length)

    def _flush(self, txn: Transaction, inst: Instance) -> None:
        for out in self.lattice.out_edges[inst.node]:
            summed: dict = {}
            used = False
            for rib, amp in inst.ribs:
                if rib.src == out.dst:
                    continue
                used = True
                for label, a in amp.items():
                    summed[label] = summed.get(label, 0j) + a
            if used:
                self._send(Search(txn.id, txn.source, summed, 0, out, self.now + out.length, self.now))
                inst.branches.append(out)
        inst.pending = PendingArbitration(inst.node, txn.id, len(inst.branches),
                                          [rib for rib, _ in inst.ribs], tick=inst.tick)
        if not inst.branches:
            self._forward(txn, inst, arbitrate(inst.pending))

    # -- query phase --------------------------------------------------------

    def _reply_null(self, txn_id: int, edge: Edge, target_tick: int) -> None:
        self._send(NullQuery(txn_id, edge, target_tick, self.now + edge.length, self.now))

    def _deliver_reply(self, reply) -> None:
        txn = self.transactions[reply.transaction]
        node = reply.edge.src
        inst = txn.instances.get((node, reply.target_tick))
        if inst is None or inst.pending is None:
            raise ArbitrationError(f"reply for unknown instance {(node, reply.target_tick)}")
        if isinstance(reply, Query):
            self._log("query", txn.id, reply.edge.dst, reply.edge.src, reply.amplitude,
                      detector=reply.detector)
        else:
            self._log("null_query", txn.id, reply.edge.dst, reply.edge.src)
        if inst is txn.root:
            pending = inst.pending
            pending.arrived.append(reply)
            if len(pending.arrived) > pending.expected_branches:
                raise ArbitrationError("source received more replies than branches")
            if len(pending.arrived) == pending.expected_branches:
                self._resolve(txn)
            return
        action = collect_query(node, reply, inst.pending, rng=self.rng, weighting=self.weighting)
        if isinstance(action, Wait):
            return
        self._forward(txn, inst, action)

    def _forward(self, txn: Transaction, inst: Instance, action: Forward) -> None:
        ribs = action.ribs
        if action.candidates:
            self.lotteries += 1
            if sum(1 for _, w in action.candidates if w > 0) > 1:
                self.contested_lotteries += 1
            if self.record:
                self._log("lottery", txn.id, inst.node, inst.node,
                          candidates=tuple(k for k, _ in action.candidates),
                          survivor=action.survivor.edge.id)
        if action.survivor is None:
            for rib in ribs:
                self._reply_null(txn.id, rib, inst.tick - rib.length)
            inst.forwarded = 1
            return
        s = action.survivor
        inst.survivor_edge = s.edge
        inst.forwarded = 1
        share = action.weight / len(ribs)
        for rib in ribs:
            self._send(Query(txn.id, s.detector, s.setting, action.amplitude, share, rib,
                             inst.tick - rib.length, self.now + rib.length, self.now))

    # -- detectors and chronometry -----------------------------------------

    def _queue_for(self, detector: int) -> DetectorQueue:
        q = self.queues.get(detector)
        if q is None:
            q = self.queues[detector] = DetectorQueue(detector)
        return q

    def _enqueue(self, txn: Transaction, detector: int) -> None:
        entry = txn.entries[detector]
        q = self._queue_for(detector)
        key = (entry.arrival_tick, 0 if entry.origin == "laser" else 1,
               min(e.id for e, _ in entry.ribs), next(self._seq))
        heapq.heappush(q.entries, (key, entry))
        self._log("enqueue", txn.id, detector, detector, total_amplitude(entry.amplitude),
                  origin=entry.origin)
        if q.developing is None:
            self._push(self.now, Rank.DEVELOP, -1, ("develop", detector))

    def develop_next(self, detector: int) -> QueueEntry:
        """Pop the queue head and send its query back along every underlying rib."""
        q = self._queue_for(detector)
        if q.developing is not None:
            raise ProtocolError(f"detector {detector} is already developing an entry")
        if not q.entries:
            raise ProtocolError(f"detector {detector} has nothing to develop")
        _, entry = heapq.heappop(q.entries)
        q.developing = entry
        analyzer = self.analyzers.get(detector)
        setting = analyzer.setting_at(self.now) if analyzer is not None else None
        amp = total_amplitude(entry.amplitude)
        share = entry.weight / len(entry.ribs)
        self._log("develop", entry.transaction, detector, detector, amp, origin=entry.origin)
        for rib, tick in entry.ribs:
            self._send(Query(entry.transaction, detector, setting, amp, share, rib,
                             tick - rib.length, self.now + rib.length, self.now))
        return entry

    def _on_develop(self, detector: int) -> None:
        q = self._queue_for(detector)
        if q.developing is None and q.entries:
            self.develop_next(detector)

    def _finish_development(self, detector: int, txn: Transaction, confirmed: bool) -> None:
        q = self._queue_for(detector)
        if q.developing is None or q.developing.transaction != txn.id:
            raise ProtocolError(f"detector {detector} got a verdict for an entry it is not developing")
        entry = q.developing
        q.developing = None
        if confirmed:
            self.absorptions.append((self.now, detector, txn.id, entry.origin))
            clock = self.clocks.get(detector)
            if clock is not None and not clock.stopped:
                if entry.origin == "laser":
                    clock.absorbed_quanta += 1
                elif self.watched.get(txn.id) == detector:
                    clock.stopped = True
        txn.delivered += 1
        if txn.delivered == txn.expected_deliveries:
            txn.closed = True
        self._push(self.now, Rank.DEVELOP, -1, ("develop", detector))

    def attach_clock(self, detector: int) -> PhotonClock:
        clock = self.clocks[detector] = PhotonClock()
        return clock

    def open_valve(self, laser: int, detector: int, at: int, period: int) -> None:
        """Start the laser so its quanta land on ``detector`` at ``at + period``, ``at + 2*period``..."""
        edge = self.lattice.edge_between(laser, detector)
        first = at + period - edge.length
        if first < self.now:
            raise ProtocolError("laser is too far from its detector for this period")
        self._push(first, Rank.START, -1, ("laser", laser, detector, period))

    def _on_laser(self, laser: int, detector: int, period: int) -> None:
        clock = self.clocks.get(detector)
        if clock is not None and clock.stopped:
            return
        txn = self.new_transaction(laser, kind="laser")
        txn.start_tick = self.now
        self.emit_search(laser, txn.id)
        self._push(self.now + period, Rank.START, -1, ("laser", laser, detector, period))

    # -- resolution ---------------------------------------------------------

    def _instance_after(self, txn: Transaction, inst: Instance, edge: Edge):
        tick = inst.tick + edge.length
        if self.lattice.kind(edge.dst) is NodeKind.DETECTOR:
            return None
        return txn.instances[(edge.dst, tick)]

    def _winning_route(self, txn: Transaction, first: Edge) -> list[Edge]:
        route = [first]
        inst = self._instance_after(txn, txn.root, first)
        while inst is not None:
            if inst.survivor_edge is None:
                raise ArbitrationError("broken survivor chain")
            route.append(inst.survivor_edge)
            inst = self._instance_after(txn, inst, inst.survivor_edge)
        return loop_erase(route)

    def _refuse_route(self, txn: Transaction, detector: int) -> list[Edge]:
        entry = txn.entries[detector]
        edge, tick = min(entry.ribs, key=lambda r: r[0].id)
        back = [edge]
        inst_key = (edge.src, tick - edge.length)
        while inst_key != (txn.root.node, txn.root.tick):
            inst = txn.instances[inst_key]
            rib, _ = min(inst.ribs, key=lambda r: r[0].id)
            back.append(rib)
            inst_key = (rib.src, inst.tick - rib.length)
        back.reverse()
        return back

    def _resolve(self, txn: Transaction) -> None:
        root = txn.root
        routes = {}

        def path_of(q: Query) -> list[int]:
            route = self._winning_route(txn, q.edge)
            routes["win"] = route
            return [route[0].src] + [e.dst for e in route]

        resolution = resolve_at_source(
            txn.source, txn.id, root.pending.arrived, self.rng, path_of=path_of,
            querying=list(txn.entries), unconditional=txn.kind == "laser",
        )
        self.lotteries += 1
        self._log("resolve", txn.id, txn.source, resolution.winner)
        txn.resolution = resolution
        txn.expected_deliveries = 1 + len(resolution.refused_detectors)
        txn.route = routes["win"]
        for d in resolution.refused_detectors:
            route = tuple(self._refuse_route(txn, d))
            self._send(Refuse(txn.id, route, 0, self.now + route[0].length, self.now))
        group = txn.group
        if group is None:
            self._confirm(txn, None)
            return
        label = next(k for k, v in group.arms.items() if v == txn.id)
        group.resolved[label] = resolution
        if len(group.resolved) == len(group.arms):
            settings = {k: r.winning_query.setting for k, r in group.resolved.items()}
            outcomes = group.rule.decide(group, settings, self.outcome_rng)
            group.state["settings"] = settings
            group.state["outcomes"] = outcomes
            self._log("coordinate", txn.id, txn.source, txn.source,
                      outcomes=tuple(sorted((k, str(v)) for k, v in outcomes.items())))
            for k, tid in group.arms.items():
                self._confirm(self.transactions[tid], outcomes[k])

    def _confirm(self, txn: Transaction, outcome) -> None:
        txn.outcome = outcome
        route = tuple(txn.route)
        self._send(Confirm(txn.id, outcome, route, 0, self.now + route[0].length, self.now))

    def _deliver_verdict(self, sig) -> None:
        txn = self.transactions[sig.transaction]
        edge = sig.route[sig.hop]
        kind = "confirm" if isinstance(sig, Confirm) else "refuse"
        self._log(kind, txn.id, edge.src, edge.dst)
        if sig.hop + 1 < len(sig.route):
            nxt = sig.route[sig.hop + 1]
            sig.hop += 1
            sig.due = self.now + nxt.length
            sig.emitted = self.now
            self._send(sig)
            return
        if isinstance(sig, Confirm):
            txn.confirms += 1
        else:
            txn.refuses += 1
        self._finish_development(edge.dst, txn, isinstance(sig, Confirm))

    # -- main loop ----------------------------------------------------------

    def step(self) -> bool:
        if not self._queue:
            return False
        tick, _, _, _, item = heapq.heappop(self._queue)
        if tick < self.now:
            raise ProtocolError("hidden time ran backwards")
        if tick > self.max_tick:
            raise LivelockDetected(f"hidden tick {tick} exceeds bound {self.max_tick}")
        self.now = tick
        if isinstance(item, Search):
            self.propagate_search(item, item.edge.dst)
        elif isinstance(item, (Query, NullQuery)):
            self._deliver_reply(item)
        elif isinstance(item, (Confirm, Refuse)):
            self._deliver_verdict(item)
        else:
            tag = item[0]
            if tag == "flush":
                self._flush(self.transactions[item[1]], item[2])
            elif tag == "window":
                self._enqueue(self.transactions[item[1]], item[2])
            elif tag == "develop":
                self._on_develop(item[1])
            elif tag == "emit":
                txn = self.transactions[item[1]]
                self.emit_search(txn.source, txn.id)
            elif tag == "pair":
                group = item[1]
                group.rule.on_emit(group, self.outcome_rng)
                for analyzer in self.analyzers.values():
                    analyzer.reset(self.now)
            elif tag == "laser":
                self._on_laser(*item[1:])
            elif tag == "button":
                item[1](self)
            else:
                raise ProtocolError(f"unknown event {tag!r}")
        return True

    def run_until_quiescent(self) -> int:
        while self.step():
            pass
        open_txns = [t.id for t in self.transactions.values() if not t.closed]
        if open_txns:
            raise DeadlockDetected(f"queue drained with open transactions {open_txns[:10]}")
        return self.now

    def schedule(self, tick: int, callback: Callable[["Engine"], None]) -> None:
        self._push(tick, Rank.START, -1, ("button", callback))

    # -- transcript ---------------------------------------------------------

    def transcript_lines(self):
        for row in self.transcript:
            tick, kind, txn, a, b, re, im = row[:7]
            obj = {"tick": tick, "kind": kind, "transaction": txn, "edge_from": a, "edge_to": b,
                   "amp_re": re, "amp_im": im}
            if len(row) > 7:
                for k, v in row[7]:
                    obj[k] = list(v) if isinstance(v, tuple) else v
            yield json.dumps(obj, sort_keys=True)

    def transcript_hash(self) -> str:
        h = hashlib.sha256()
        for line in self.transcript_lines():
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()

    def write_trace(self, path) -> None:
        with open(path, "w") as fh:
            for line in self.transcript_lines():
                fh.write(line + "\n")
