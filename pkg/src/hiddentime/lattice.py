"""Hidden-space lattice: typed nodes joined by directed ribs.

Signals never leave the lattice.  Every rib is directed; the builders always
create ribs in opposite pairs so that search signals can travel one way and
queries the other.  Search marks are the only mutable state and are keyed by
transaction, so one lattice can host many transactions (or be copied into
parallel workers) without interference.
"""
from __future__ import annotations

import enum
import heapq
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

Position = tuple[int, int]


class LatticeError(ValueError):
    """Raised for malformed lattices or invalid builder parameters."""


class NodeKind(enum.Enum):
    SOURCE = "source"
    DETECTOR = "detector"
    VACUUM = "vacuum"
    LASER = "laser"


@dataclass(frozen=True)
class Node:
    id: int
    kind: NodeKind
    pos: Position


@dataclass(frozen=True)
class Edge:
    id: int
    src: int
    dst: int
    length: int = 1


@dataclass
class SearchMark:
    transaction: int
    arrival_tick: int
    amplitude: complex


class Lattice:
    """Directed graph of typed nodes.

    ``meta`` carries scenario annotations set by the builders (laser period,
    EPR arms, slit nodes) and survives the text round trip only for the keys
    the file format knows about.
    """

    def __init__(self, nodes: Sequence[Node], edges: Sequence[Edge], meta: dict | None = None):
        self.nodes: list[Node] = list(nodes)
        self.edges: list[Edge] = list(edges)
        self.meta: dict = dict(meta or {})
        for i, node in enumerate(self.nodes):
            if node.id != i:
                raise LatticeError(f"node ids must be dense and ordered; got {node.id} at index {i}")
        seen_pos: set[Position] = set()
        for node in self.nodes:
            if node.pos in seen_pos:
                raise LatticeError(f"duplicate position {node.pos}")
            seen_pos.add(node.pos)
        self.out_edges: list[list[Edge]] = [[] for _ in self.nodes]
        self.in_edges: list[list[Edge]] = [[] for _ in self.nodes]
        for i, edge in enumerate(self.edges):
            if edge.id != i:
                raise LatticeError(f"edge ids must be dense and ordered; got {edge.id} at index {i}")
            if edge.length < 1:
                raise LatticeError(f"edge {edge.id} has length {edge.length} < 1")
            if not (0 <= edge.src < len(self.nodes) and 0 <= edge.dst < len(self.nodes)):
                raise LatticeError(f"edge {edge.id} references an unknown node")
            self.out_edges[edge.src].append(edge)
            self.in_edges[edge.dst].append(edge)
        self._by_pos = {node.pos: node.id for node in self.nodes}
        # transaction -> edge id -> mark
        self.marks: dict[int, dict[int, SearchMark]] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def __repr__(self) -> str:
        return f"Lattice(nodes={len(self.nodes)}, edges={len(self.edges)})"

    def kind(self, node: int) -> NodeKind:
        return self.nodes[node].kind

    def node_at(self, pos: Position) -> int:
        try:
            return self._by_pos[tuple(pos)]
        except KeyError:
            raise LatticeError(f"no node at {pos}") from None

    def of_kind(self, kind: NodeKind) -> list[int]:
        return [n.id for n in self.nodes if n.kind is kind]

    @property
    def sources(self) -> list[int]:
        return self.of_kind(NodeKind.SOURCE)

    @property
    def detectors(self) -> list[int]:
        return self.of_kind(NodeKind.DETECTOR)

    def edge_between(self, src: int, dst: int) -> Edge:
        for edge in self.out_edges[src]:
            if edge.dst == dst:
                return edge
        raise LatticeError(f"no edge {src} -> {dst}")

    # -- search marks -------------------------------------------------------

    def mark(self, edge: Edge, transaction: int, tick: int, amplitude: complex) -> SearchMark:
        per_txn = self.marks.setdefault(transaction, {})
        existing = per_txn.get(edge.id)
        if existing is None:
            existing = per_txn[edge.id] = SearchMark(transaction, tick, amplitude)
        else:
            existing.amplitude += amplitude
        return existing

    def search_mark(self, edge: Edge | int, transaction: int) -> SearchMark | None:
        edge_id = edge if isinstance(edge, int) else edge.id
        return self.marks.get(transaction, {}).get(edge_id)

    def clear_marks(self) -> None:
        self.marks.clear()

    # -- graph queries ------------------------------------------------------

    def distances(self, start: int, *, relay: Iterable[NodeKind] | None = None) -> dict[int, int]:
        """Shortest hidden-tick distances from ``start``.

        When ``relay`` is given, only nodes of those kinds pass paths onward
        (the start node always does).
        """
        relay_kinds = set(relay) if relay is not None else None
        dist = {start: 0}
        heap = [(0, start)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist[u]:
                continue
            if u != start and relay_kinds is not None and self.nodes[u].kind not in relay_kinds:
                continue
            for edge in self.out_edges[u]:
                nd = d + edge.length
                if nd < dist.get(edge.dst, nd + 1):
                    dist[edge.dst] = nd
                    heapq.heappush(heap, (nd, edge.dst))
        return dist

    def reachable(self, start: int) -> set[int]:
        seen = {start}
        todo = deque([start])
        while todo:
            u = todo.popleft()
            for edge in self.out_edges[u]:
                if edge.dst not in seen:
                    seen.add(edge.dst)
                    todo.append(edge.dst)
        return seen

    def validate(self) -> None:
        for src in self.sources:
            missing = set(self.detectors) - self.reachable(src)
            if missing:
                raise LatticeError(f"detectors {sorted(missing)} unreachable from source {src}")
        for laser in self.of_kind(NodeKind.LASER):
            fed = {e.dst for e in self.out_edges[laser]}
            if len(fed) != 1 or self.kind(next(iter(fed))) is not NodeKind.DETECTOR:
                raise LatticeError(f"laser {laser} must feed exactly one detector")

    def laser_for(self, detector: int) -> int | None:
        for edge in self.in_edges[detector]:
            if self.kind(edge.src) is NodeKind.LASER:
                return edge.src
        return None

    # -- text format --------------------------------------------------------

    def to_text(self) -> str:
        lines = ["lattice v1"]
        if "laser_period" in self.meta:
            lines.append(f"meta laser_period {self.meta['laser_period']}")
        for node in self.nodes:
            lines.append(f"node {node.id} {node.kind.value} {node.pos[0]} {node.pos[1]}")
        for edge in self.edges:
            lines.append(f"edge {edge.src} {edge.dst} {edge.length}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "Lattice":
        nodes: list[Node] = []
        edges: list[Edge] = []
        meta: dict = {}
        header_seen = False
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if not header_seen:
                if parts != ["lattice", "v1"]:
                    raise LatticeError(f"line {lineno}: expected header 'lattice v1'")
                header_seen = True
                continue
            try:
                if parts[0] == "node" and len(parts) == 5:
                    nodes.append(Node(int(parts[1]), NodeKind(parts[2]), (int(parts[3]), int(parts[4]))))
                elif parts[0] == "edge" and len(parts) == 4:
                    edges.append(Edge(len(edges), int(parts[1]), int(parts[2]), int(parts[3])))
                elif parts[0] == "meta" and len(parts) == 3:
                    meta[parts[1]] = int(parts[2])
                else:
                    raise LatticeError(f"unrecognised record {parts[0]!r}")
            except (ValueError, IndexError) as exc:
                raise LatticeError(f"line {lineno}: {exc}") from None
        if not header_seen:
            raise LatticeError("empty lattice file")
        nodes.sort(key=lambda n: n.id)
        lattice = cls(nodes, edges, meta)
        lattice.validate()
        return lattice

    @classmethod
    def load(cls, path: str | Path) -> "Lattice":
        return cls.from_text(Path(path).read_text())


def underlying_ribs(lattice: Lattice, node: int, transaction: int) -> list[Edge]:
    """Incoming ribs of ``node`` that carried a search signal for ``transaction``."""
    if not 0 <= node < len(lattice.nodes):
        raise LatticeError(f"unknown node {node}")
    marks = lattice.marks.get(transaction)
    if marks is None:
        return []
    return [e for e in lattice.in_edges[node] if e.id in marks]


class _Builder:
    def __init__(self):
        self.nodes: list[Node] = []
        self.edges: list[Edge] = []

    def node(self, kind: NodeKind, pos: Position) -> int:
        self.nodes.append(Node(len(self.nodes), kind, pos))
        return len(self.nodes) - 1

    def pair(self, a: int, b: int, length: int = 1) -> None:
        self.edges.append(Edge(len(self.edges), a, b, length))
        self.edges.append(Edge(len(self.edges), b, a, length))

    def build(self, meta: dict | None = None) -> Lattice:
        lattice = Lattice(self.nodes, self.edges, meta)
        lattice.validate()
        return lattice


def build_grid(
    width: int,
    height: int,
    sources: Sequence[Position],
    detectors: Sequence[Position],
    *,
    diagonals: bool = False,
    blocked: Sequence[Position] = (),
) -> Lattice:
    """Rectangular grid with unit ribs between 4-neighbours (8 with ``diagonals``).

    ``blocked`` positions are left out of the lattice entirely.
    """
    if width < 1 or height < 1:
        raise LatticeError("grid dimensions must be positive")
    typed: dict[Position, NodeKind] = {}
    for group, kind in ((sources, NodeKind.SOURCE), (detectors, NodeKind.DETECTOR)):
        for pos in group:
            pos = (int(pos[0]), int(pos[1]))
            if not (0 <= pos[0] < width and 0 <= pos[1] < height):
                raise LatticeError(f"position {pos} outside {width}x{height} grid")
            if pos in typed:
                raise LatticeError(f"overlapping position {pos}")
            typed[pos] = kind
    holes = {(int(p[0]), int(p[1])) for p in blocked}
    if holes & typed.keys():
        raise LatticeError("blocked positions overlap sources or detectors")

    b = _Builder()
    ids: dict[Position, int] = {}
    for y in range(height):
        for x in range(width):
            if (x, y) not in holes:
                ids[(x, y)] = b.node(typed.get((x, y), NodeKind.VACUUM), (x, y))
    steps = [(1, 0), (0, 1)]
    if diagonals:
        steps += [(1, 1), (-1, 1)]
    for (x, y), u in ids.items():
        for dx, dy in steps:
            v = ids.get((x + dx, y + dy))
            if v is not None:
                b.pair(u, v)
    b.edges.sort(key=lambda e: (e.src, e.dst))
    b.edges = [Edge(i, e.src, e.dst, e.length) for i, e in enumerate(b.edges)]
    return b.build({"width": width, "height": height})


def build_chain(length: int, laser_period: int = 1, *, laser_distance: int = 1) -> Lattice:
    """Source, ``length - 1`` vacuum nodes, detector, plus a laser feeding the detector."""
    if length < 1:
        raise LatticeError("chain length must be >= 1")
    if laser_period < 1 or laser_distance < 1:
        raise LatticeError("laser period and distance must be >= 1")
    b = _Builder()
    prev = b.node(NodeKind.SOURCE, (0, 0))
    for x in range(1, length):
        cur = b.node(NodeKind.VACUUM, (x, 0))
        b.pair(prev, cur)
        prev = cur
    detector = b.node(NodeKind.DETECTOR, (length, 0))
    b.pair(prev, detector)
    laser = b.node(NodeKind.LASER, (length + laser_distance, 0))
    b.pair(laser, detector, laser_distance)
    return b.build({"laser_period": laser_period, "chain_length": length})


def build_epr_chain(arm_length: int) -> Lattice:
    """Detector A - vacuum - source - vacuum - detector B, arms of equal length."""
    if arm_length < 1:
        raise LatticeError("arm length must be >= 1")
    b = _Builder()
    ids = []
    for x in range(2 * arm_length + 1):
        if x == arm_length:
            kind = NodeKind.SOURCE
        elif x in (0, 2 * arm_length):
            kind = NodeKind.DETECTOR
        else:
            kind = NodeKind.VACUUM
        ids.append(b.node(kind, (x, 0)))
    for u, v in zip(ids, ids[1:]):
        b.pair(u, v)
    lattice = b.build()
    source = ids[arm_length]
    lattice.meta["epr"] = {
        "source": source,
        "arms": {
            "a": [lattice.edge_between(source, ids[arm_length - 1]).id],
            "b": [lattice.edge_between(source, ids[arm_length + 1]).id],
        },
        "detectors": {"a": [ids[0]], "b": [ids[-1]]},
    }
    return lattice


def build_double_slit(
    width: int = 25,
    slit_offset: int = 5,
    *,
    open_slits: tuple[bool, bool] = (True, True),
) -> Lattice:
    """Four-row slit lattice.

    Row 0 holds the source at the centre column, row 1 is the barrier with
    two slits at ``centre -/+ slit_offset``, row 2 is an open spreading row
    and row 3 is a screen made entirely of detectors.
    """
    if width % 2 == 0:
        raise LatticeError("double-slit width must be odd so the source is centred")
    centre = width // 2
    if not 1 <= slit_offset <= centre:
        raise LatticeError("slits must lie inside the grid")
    slits = [(centre - slit_offset, 1), (centre + slit_offset, 1)]
    if not any(open_slits):
        raise LatticeError("no open slits")
    open_pos = [p for p, is_open in zip(slits, open_slits) if is_open]
    blocked = [(x, 1) for x in range(width) if (x, 1) not in open_pos]
    screen = [(x, 3) for x in range(width)]
    lattice = build_grid(width, 4, [(centre, 0)], screen, blocked=blocked)
    lattice.meta["slits"] = [lattice.node_at(p) for p in open_pos]
    lattice.meta["screen"] = {lattice.node_at(p): p[0] for p in screen}
    lattice.meta["centre"] = centre
    return lattice
