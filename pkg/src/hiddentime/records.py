"""Per-pair trial records, stored column-wise."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np


class Outcome(enum.Enum):
    PASS = 1
    ABSORB = -1

    def __str__(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class PairOutcome:
    a: Outcome
    b: Outcome

    @property
    def product(self) -> int:
        return self.a.value * self.b.value


PASS_PASS = PairOutcome(Outcome.PASS, Outcome.PASS)
PASS_ABSORB = PairOutcome(Outcome.PASS, Outcome.ABSORB)
ABSORB_PASS = PairOutcome(Outcome.ABSORB, Outcome.PASS)
ABSORB_ABSORB = PairOutcome(Outcome.ABSORB, Outcome.ABSORB)
# Lottery order used everywhere outcomes are drawn.
PAIR_OUTCOMES = (PASS_PASS, PASS_ABSORB, ABSORB_PASS, ABSORB_ABSORB)


@dataclass(frozen=True)
class TrialRecord:
    trial_index: int
    setting_a: float
    setting_b: float
    outcome: PairOutcome
    furry_angle: Optional[float] = None
    winner_path_length_a: int = 0
    winner_path_length_b: int = 0
    hidden_var: Optional[float] = None


def _opt(x: float) -> Optional[float]:
    return None if math.isnan(x) else float(x)


@dataclass
class TrialBatch:
    """Column store for many :class:`TrialRecord` rows.

    Indexing and iteration yield ``TrialRecord`` objects; estimators read the
    columns directly.
    """

    trial: np.ndarray
    setting_a: np.ndarray
    setting_b: np.ndarray
    pass_a: np.ndarray
    pass_b: np.ndarray
    furry_angle: np.ndarray
    path_a: np.ndarray
    path_b: np.ndarray
    hidden_var: np.ndarray

    def __post_init__(self):
        n = len(self.trial)
        for name in ("setting_a", "setting_b", "pass_a", "pass_b", "furry_angle", "path_a", "path_b",
                     "hidden_var"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has the wrong length")

    @classmethod
    def empty(cls) -> "TrialBatch":
        return cls.build(0)

    @classmethod
    def build(cls, n: int, *, trial=None, setting_a=0.0, setting_b=0.0, pass_a=None, pass_b=None,
              furry_angle=np.nan, path_a=0, path_b=0, hidden_var=np.nan) -> "TrialBatch":
        def col(value, dtype):
            arr = np.empty(n, dtype=dtype)
            arr[...] = value
            return arr

        return cls(
            col(np.arange(n) if trial is None else trial, np.int64),
            col(setting_a, np.float64),
            col(setting_b, np.float64),
            col(False if pass_a is None else pass_a, bool),
            col(False if pass_b is None else pass_b, bool),
            col(furry_angle, np.float64),
            col(path_a, np.int32),
            col(path_b, np.int32),
            col(hidden_var, np.float64),
        )

    @classmethod
    def from_records(cls, records: Iterable[TrialRecord]) -> "TrialBatch":
        rows = list(records)
        nan = float("nan")
        return cls(
            np.array([r.trial_index for r in rows], dtype=np.int64),
            np.array([r.setting_a for r in rows], dtype=np.float64),
            np.array([r.setting_b for r in rows], dtype=np.float64),
            np.array([r.outcome.a is Outcome.PASS for r in rows], dtype=bool),
            np.array([r.outcome.b is Outcome.PASS for r in rows], dtype=bool),
            np.array([nan if r.furry_angle is None else r.furry_angle for r in rows], dtype=np.float64),
            np.array([r.winner_path_length_a for r in rows], dtype=np.int32),
            np.array([r.winner_path_length_b for r in rows], dtype=np.int32),
            np.array([nan if r.hidden_var is None else r.hidden_var for r in rows], dtype=np.float64),
        )

    @classmethod
    def concat(cls, batches: Sequence["TrialBatch"]) -> "TrialBatch":
        batches = list(batches)
        if not batches:
            return cls.empty()
        return cls(*(np.concatenate([getattr(b, f) for b in batches]) for f in cls.__dataclass_fields__))

    def __len__(self) -> int:
        return len(self.trial)

    def __getitem__(self, i):
        if isinstance(i, (slice, np.ndarray)):
            return TrialBatch(*(getattr(self, f)[i] for f in self.__dataclass_fields__))
        return TrialRecord(
            int(self.trial[i]),
            float(self.setting_a[i]),
            float(self.setting_b[i]),
            PairOutcome(Outcome.PASS if self.pass_a[i] else Outcome.ABSORB,
                        Outcome.PASS if self.pass_b[i] else Outcome.ABSORB),
            _opt(self.furry_angle[i]),
            int(self.path_a[i]),
            int(self.path_b[i]),
            _opt(self.hidden_var[i]),
        )

    def __iter__(self) -> Iterator[TrialRecord]:
        for i in range(len(self)):
            yield self[i]

    def equals(self, other: "TrialBatch") -> bool:
        return all(
            np.array_equal(getattr(self, f), getattr(other, f), equal_nan=getattr(self, f).dtype.kind == "f")
            for f in self.__dataclass_fields__
        )

    def where(self, qa: float, qb: float) -> "TrialBatch":
        return self[(self.setting_a == qa) & (self.setting_b == qb)]

    def to_csv(self, path: str | Path) -> None:
        """EPR schema: ``trial,qa_rad,qb_rad,outcome_a,outcome_b,furry_angle``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trial", "qa_rad", "qb_rad", "outcome_a", "outcome_b", "furry_angle"])
            for i in range(len(self)):
                phi = self.furry_angle[i]
                w.writerow([
                    int(self.trial[i]),
                    repr(float(self.setting_a[i])),
                    repr(float(self.setting_b[i])),
                    "pass" if self.pass_a[i] else "absorb",
                    "pass" if self.pass_b[i] else "absorb",
                    "" if math.isnan(phi) else repr(float(phi)),
                ])

    @classmethod
    def read_csv(cls, path: str | Path) -> "TrialBatch":
        rows = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                rows.append(TrialRecord(
                    int(row["trial"]), float(row["qa_rad"]), float(row["qb_rad"]),
                    PairOutcome(Outcome[row["outcome_a"].upper()], Outcome[row["outcome_b"].upper()]),
                    float(row["furry_angle"]) if row["furry_angle"] else None,
                ))
        return cls.from_records(rows)
