"""Signal records exchanged in hidden time.

Search amplitudes are kept per label.  Unlabelled flood uses the single
label ``None``; passing a which-path marker relabels everything that flows
through it, and differently labelled parts never interfere.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, Optional

from .lattice import Edge

LabelledAmplitude = dict  # label -> complex


class Rank(enum.IntEnum):
    """Same-tick processing order (lower first)."""

    START = -1
    SEARCH = 0
    QUERY = 1
    NULL_QUERY = 2
    CONFIRM = 3
    REFUSE = 4
    FLUSH = 5
    DEVELOP = 6


def total_amplitude(amp: LabelledAmplitude) -> complex:
    total = 0j
    for value in amp.values():
        total += value
    return total


def born_weight(amp: LabelledAmplitude) -> float:
    """Squared magnitude summed over mutually incoherent labels."""
    w = 0.0
    for value in amp.values():
        w += value.real * value.real + value.imag * value.imag
    return w


@dataclass(slots=True)
class Search:
    transaction: int
    source: int
    amplitude: LabelledAmplitude
    path_length: int
    edge: Edge
    due: int
    emitted: int

    rank = Rank.SEARCH


@dataclass(slots=True)
class Query:
    """Backward request for the photon.

    ``edge`` is the search rib being answered (travelled dst -> src) and
    ``target_tick`` names the hidden-time instance of ``edge.src`` that sent
    the search.  ``weight`` is the share of Born weight this copy carries.
    """

    transaction: int
    detector: int
    setting: Optional[float]
    amplitude: complex
    weight: float
    edge: Edge
    target_tick: int
    due: int
    emitted: int

    rank = Rank.QUERY


@dataclass(slots=True)
class NullQuery:
    transaction: int
    edge: Edge
    target_tick: int
    due: int
    emitted: int

    rank = Rank.NULL_QUERY


@dataclass(slots=True)
class Confirm:
    transaction: int
    outcome: Any
    route: tuple
    hop: int
    due: int
    emitted: int

    rank = Rank.CONFIRM

    @property
    def edge(self) -> Edge:
        return self.route[self.hop]


@dataclass(slots=True)
class Refuse:
    transaction: int
    route: tuple
    hop: int
    due: int
    emitted: int

    rank = Rank.REFUSE

    @property
    def edge(self) -> Edge:
        return self.route[self.hop]


Reply = Query | NullQuery
Signal = Search | Query | NullQuery | Confirm | Refuse
