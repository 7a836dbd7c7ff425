"""Estimators over trial records: yields, correlations, CHSH, rho(lambda) checks.

Everything here is a pure function of its inputs.  Estimators reduce
records to :class:`PairCounts` first, so merging batches and then estimating
gives the same answer as estimating from summed counts.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Hashable, Iterable, Sequence

import numpy as np
from scipy import stats as _sps

from .records import TrialBatch

# Coincidence probability at zero relative angle; normalized yield = raw / this.
YIELD_NORMALIZATION = 0.5


@dataclass(frozen=True)
class PairCounts:
    pp: int = 0
    pa: int = 0
    ap: int = 0
    aa: int = 0

    @property
    def n(self) -> int:
        return self.pp + self.pa + self.ap + self.aa

    def __add__(self, other: "PairCounts") -> "PairCounts":
        return PairCounts(self.pp + other.pp, self.pa + other.pa, self.ap + other.ap, self.aa + other.aa)

    @classmethod
    def of(cls, records) -> "PairCounts":
        if isinstance(records, PairCounts):
            return records
        batch = records if isinstance(records, TrialBatch) else TrialBatch.from_records(records)
        a, b = batch.pass_a, batch.pass_b
        return cls(int(np.count_nonzero(a & b)), int(np.count_nonzero(a & ~b)),
                   int(np.count_nonzero(~a & b)), int(np.count_nonzero(~a & ~b)))


@dataclass(frozen=True)
class CorrelationEstimate:
    value: float
    stderr: float
    n: int


@dataclass(frozen=True)
class YieldEstimate:
    raw: float
    normalized: float
    stderr: float
    n: int
    low: float
    high: float

    @property
    def normalized_stderr(self) -> float:
        return self.stderr / YIELD_NORMALIZATION

    @property
    def out_of_model(self) -> bool:
        """A normalized yield above 1 cannot come from the cos^2 law."""
        return self.normalized > 1.0


def wilson_interval(successes: int, n: int, z: float = 1.0) -> tuple[float, float]:
    p = successes / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return centre - half, centre + half


def estimate_yield(records, predicate: str | Callable = "pp") -> YieldEstimate:
    """Coincidence yield; ``predicate`` picks the counted outcome pair.

    The reported stderr is the half-width of the z=1 Wilson interval.
    """
    if callable(predicate):
        batch = records if isinstance(records, TrialBatch) else TrialBatch.from_records(records)
        n = len(batch)
        hits = int(np.count_nonzero(predicate(batch)))
    else:
        counts = PairCounts.of(records)
        n = counts.n
        hits = getattr(counts, predicate)
    if n == 0:
        raise ValueError("no records")
    raw = hits / n
    low, high = wilson_interval(hits, n)
    return YieldEstimate(raw, raw / YIELD_NORMALIZATION, (high - low) / 2, n, low, high)


def estimate_correlation(records) -> CorrelationEstimate:
    counts = PairCounts.of(records)
    n = counts.n
    if n == 0:
        raise ValueError("no records")
    value = (counts.pp + counts.aa - counts.pa - counts.ap) / n
    return CorrelationEstimate(value, math.sqrt(max(0.0, 1 - value * value) / n), n)


def chsh_statistic(e_ab: CorrelationEstimate, e_ab2: CorrelationEstimate,
                   e_a2b: CorrelationEstimate, e_a2b2: CorrelationEstimate) -> tuple[float, float]:
    s = abs(e_ab.value - e_ab2.value + e_a2b.value + e_a2b2.value)
    stderr = math.sqrt(e_ab.stderr ** 2 + e_ab2.stderr ** 2 + e_a2b.stderr ** 2 + e_a2b2.stderr ** 2)
    return s, stderr


def marginal_pass_rate(records, side: str) -> tuple[float, float, int]:
    """Pass rate on one side with its binomial stderr."""
    counts = PairCounts.of(records)
    n = counts.n
    if n == 0:
        raise ValueError("no records")
    hits = counts.pp + (counts.pa if side == "a" else counts.ap)
    p = hits / n
    return p, math.sqrt(p * (1 - p) / n), n


@dataclass
class HiddenVarHistogram:
    edges: np.ndarray
    counts: dict = field(default_factory=dict)  # settings key -> counts per bin

    def total(self, key: Hashable) -> int:
        return int(self.counts[key].sum())


def hidden_var_histogram(values: np.ndarray, keys: Sequence[Hashable], bins: int = 16,
                         upper: float = math.pi) -> HiddenVarHistogram:
    """Histogram of hidden values in ``[0, upper)`` per settings key."""
    values = np.asarray(values, dtype=float)
    edges = np.linspace(0.0, upper, bins + 1)
    hist = HiddenVarHistogram(edges)
    keys = list(keys)
    for key in dict.fromkeys(keys):
        mask = np.array([k == key for k in keys])
        hist.counts[key] = np.histogram(values[mask], bins=edges)[0]
    return hist


def _counts_and_edges(hist):
    if isinstance(hist, HiddenVarHistogram):
        return np.sum(list(hist.counts.values()), axis=0).astype(float), hist.edges
    return np.asarray(hist, dtype=float), None


def rho_dependence_test(hist_a, hist_b) -> tuple[float, float]:
    """Two-sample chi-square test that two binned samples share one distribution.

    Accepts :class:`HiddenVarHistogram` objects (all keys pooled) or plain
    count arrays.
    """
    hist_a, edges_a = _counts_and_edges(hist_a)
    hist_b, edges_b = _counts_and_edges(hist_b)
    if hist_a.shape != hist_b.shape or (
        edges_a is not None and edges_b is not None and not np.array_equal(edges_a, edges_b)
    ):
        raise ValueError("histograms use different binning")
    table = np.vstack([hist_a, hist_b])
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        return 0.0, 1.0
    chi2, p, _, _ = _sps.chi2_contingency(table, correction=False)
    return float(chi2), float(p)


@dataclass
class SummaryRow:
    statistic: str
    value: float
    stderr: float
    n: int
    target: float
    tolerance: float
    passed: bool


SUMMARY_FIELDS = ("statistic", "value", "stderr", "n", "target", "tolerance", "pass")


def write_summary_csv(rows: Iterable[SummaryRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_FIELDS)
        for r in rows:
            w.writerow([r.statistic, f"{r.value:.6f}", f"{r.stderr:.6f}", r.n, f"{r.target:.6f}",
                        f"{r.tolerance:.6f}", "true" if r.passed else "false"])


def format_summary(rows: Iterable[SummaryRow]) -> str:
    lines = [f"{'statistic':<28}{'value':>12}{'stderr':>10}{'n':>10}{'target':>10}{'tol':>8}  pass"]
    for r in rows:
        lines.append(f"{r.statistic:<28}{r.value:>12.5f}{r.stderr:>10.5f}{r.n:>10}{r.target:>10.5f}"
                     f"{r.tolerance:>8.4f}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
