"""Scenario layer: EPR and Furry runs, CHSH, the LHV baseline, double slit.

Pair scenarios run the full search/query/confirm protocol on an EPR lattice.
When every lottery in the arms has a single candidate (the usual chain
case), the per-pair transcripts differ only in the joint outcome draw and
the analyzer switching draws, so large runs use a compiled path: the
protocol is run once to get the template, and the remaining draws are taken
in bulk from the same block streams the per-pair engine would consume.  The
two routes produce identical records; ``full_protocol=True`` forces the
per-pair engine.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .arbitration import LotteryWeights, NoDetectorReachable, lottery
from .engine import Engine
from .lattice import Lattice, LatticeError, NodeKind, build_epr_chain
from .records import PAIR_OUTCOMES, Outcome, PairOutcome, TrialBatch
from .rng import BLOCK_SIZE, RngStream, block_stream, blocks
from .stats import (
    CorrelationEstimate,
    PairCounts,
    chsh_statistic,
    estimate_correlation,
)

HALF_PI = math.pi / 2

# Optimal CHSH angles for linear polarizers.
CHSH_ANGLES_A = (0.0, math.pi / 4)
CHSH_ANGLES_B = (math.pi / 8, 3 * math.pi / 8)


def normalize_angle(theta: float) -> float:
    """Polarizer axes are defined modulo pi."""
    t = math.fmod(float(theta), math.pi)
    if t < 0:
        t += math.pi
    if t >= math.pi:
        t = 0.0
    return t


@dataclass(frozen=True)
class PolarizerSetting:
    angle: float

    def __post_init__(self):
        object.__setattr__(self, "angle", normalize_angle(self.angle))

    def __float__(self) -> float:
        return self.angle


@dataclass(frozen=True)
class JointProbabilities:
    pp: float
    pa: float
    ap: float
    aa: float

    def __iter__(self):
        return iter((self.pp, self.pa, self.ap, self.aa))

    @property
    def normalized_yield(self) -> float:
        return self.pp / 0.5


def _angle(x) -> float:
    return float(x.angle) if isinstance(x, PolarizerSetting) else float(x)


def joint_probabilities(qa, qb) -> JointProbabilities:
    """Quantum joint law for a pair in the same linear polarization state."""
    c = math.cos(_angle(qa) - _angle(qb)) ** 2
    # On a 2**-53 grid both halves are exact, so the four add to 1 in floating point.
    same = round(c * 2.0 ** 52) / 2.0 ** 53
    diff = 0.5 - same
    return JointProbabilities(same, diff, diff, same)


def furry_coincidence(delta: float) -> float:
    """Raw coincidence rate when both photons leave with one random shared polarization."""
    return (1 + 2 * math.cos(delta) ** 2) / 8


# -- outcome rules applied at the radiation node ------------------------------


class QuantumPairRule:
    kind = "epr"
    draws_per_pair = 1

    def on_emit(self, group, rng) -> None:
        pass

    def decide(self, group, settings: dict, rng) -> dict:
        p = joint_probabilities(settings["a"], settings["b"])
        idx = lottery(LotteryWeights(list(enumerate(p))), rng)
        outcome = PAIR_OUTCOMES[idx]
        return {"a": outcome.a, "b": outcome.b}


class FurryRule:
    """Polarization fixed at emission; each side then passes independently."""

    kind = "furry"
    draws_per_pair = 3

    def on_emit(self, group, rng) -> None:
        group.state["phi"] = math.pi * rng.uniform()

    def decide(self, group, settings: dict, rng) -> dict:
        phi = group.state["phi"]
        out = {}
        for side in ("a", "b"):
            p = math.cos(settings[side] - phi) ** 2
            out[side] = Outcome.PASS if rng.uniform() < p else Outcome.ABSORB
        return out


RULES = {"epr": QuantumPairRule, "furry": FurryRule}


class Analyzer:
    """Polarizer on one arm.

    With a switching period the axis is redrawn (fair coin between the two
    angles) at emission and at every period boundary after it; the query
    snapshots whatever axis is in place when it is formed.
    """

    def __init__(self, angles: Sequence[float], period: int | None = None, rng: RngStream | None = None):
        self.angles = tuple(normalize_angle(a) for a in angles)
        self.period = period
        self.rng = rng
        if period is not None and (period < 1 or rng is None or len(self.angles) != 2):
            raise ValueError("a switching analyzer needs two angles, a period >= 1 and an rng")
        self.start = 0
        self._draws: list[float] = []
        self.snapshot_tick: int | None = None

    @property
    def switching(self) -> bool:
        return self.period is not None

    def reset(self, tick: int) -> None:
        self.start = tick
        self._draws = []

    def setting_at(self, tick: int) -> float:
        self.snapshot_tick = tick
        if not self.switching:
            return self.angles[0]
        epoch = (tick - self.start) // self.period
        while len(self._draws) <= epoch:
            self._draws.append(self.rng.uniform())
        return self.angles[0] if self._draws[epoch] < 0.5 else self.angles[1]


# -- pair runs ---------------------------------------------------------------


@dataclass(frozen=True)
class PairScenario:
    rule: str  # "epr" | "furry"
    angles_a: tuple
    angles_b: tuple
    switch_period: int | None = None
    weighting: str = "amplitude"
    stream_key: tuple = ()


@dataclass
class PairTemplate:
    deterministic: bool
    path_a: int
    path_b: int
    epoch_a: int
    epoch_b: int


def _epr_geometry(lattice: Lattice) -> dict:
    epr = lattice.meta.get("epr")
    if epr is None:
        raise LatticeError("lattice has no EPR source/arm annotation; build it with build_epr_chain")
    if set(epr["detectors"]["a"]) & set(epr["detectors"]["b"]):
        raise NoDetectorReachable("both arms claim the same detector")
    for side in ("a", "b"):
        reach = set()
        for edge_id in epr["arms"][side]:
            dst = lattice.edges[edge_id].dst
            reach |= set(lattice.distances(dst, relay=(NodeKind.VACUUM,)))
        if not reach & set(epr["detectors"][side]):
            raise NoDetectorReachable(f"arm {side} reaches none of its detectors")
    return epr


def _make_engine(lattice: Lattice, scen: PairScenario, streams: dict, record: bool = False):
    epr = _epr_geometry(lattice)
    analyzers = {}
    for side, angles in (("a", scen.angles_a), ("b", scen.angles_b)):
        an = Analyzer(angles, scen.switch_period, streams.get(f"switch-{side}"))
        for det in epr["detectors"][side]:
            analyzers[det] = an
    engine = Engine(lattice, rng=streams["arbitration"], outcome_rng=streams["outcome"],
                    analyzers=analyzers, weighting=scen.weighting, record=record)
    return engine, analyzers


def _run_one_pair(lattice: Lattice, scen: PairScenario, streams: dict, record: bool = False):
    lattice.clear_marks()
    engine, analyzers = _make_engine(lattice, scen, streams, record)
    epr = _epr_geometry(lattice)
    group = engine.start_pair(epr["source"], epr["arms"], RULES[scen.rule]())
    engine.run_until_quiescent()
    for side in ("a", "b"):
        winner = engine.transactions[group.arms[side]].resolution.winner
        if winner not in epr["detectors"][side]:
            raise NoDetectorReachable(f"arm {side} was won by detector {winner} of the other arm")
    return engine, group, analyzers


def compile_pair_template(lattice: Lattice, scen: PairScenario, seed: int = 0) -> PairTemplate:
    streams = {name: RngStream(seed, "template", i) for i, name in
               enumerate(("arbitration", "outcome", "switch-a", "switch-b"))}
    engine, group, analyzers = _run_one_pair(lattice, scen, streams)
    epr = _epr_geometry(lattice)
    ta = engine.transactions[group.arms["a"]]
    tb = engine.transactions[group.arms["b"]]
    one_detector = all(len(epr["detectors"][s]) == 1 for s in ("a", "b"))
    deterministic = engine.contested_lotteries == 0 and one_detector
    an_a = analyzers[epr["detectors"]["a"][0]]
    an_b = analyzers[epr["detectors"]["b"][0]]

    def epoch(an: Analyzer) -> int:
        if not an.switching:
            return 0
        return (an.snapshot_tick - an.start) // an.period

    return PairTemplate(deterministic, len(ta.resolution.confirmed_path) - 1,
                        len(tb.resolution.confirmed_path) - 1, epoch(an_a), epoch(an_b))


def trace_first_pair(lattice: Lattice, scen: PairScenario, seed: int) -> Engine:
    """Full recorded protocol run of trial 0, drawing from block 0's streams."""
    engine, _, _ = _run_one_pair(lattice, scen, _block_streams(seed, scen, 0), record=True)
    return engine


def _block_streams(seed: int, scen: PairScenario, block: int) -> dict:
    return {name: block_stream(seed, name, block, *scen.stream_key)
            for name in ("arbitration", "outcome", "switch-a", "switch-b")}


def _pair_block_full(lattice: Lattice, scen: PairScenario, seed: int, block: int, start: int,
                     count: int) -> TrialBatch:
    streams = _block_streams(seed, scen, block)
    out = TrialBatch.build(count, trial=np.arange(start, start + count))
    for i in range(count):
        engine, group, _ = _run_one_pair(lattice, scen, streams)
        settings = group.state["settings"]
        outcomes = group.state["outcomes"]
        out.setting_a[i] = settings["a"]
        out.setting_b[i] = settings["b"]
        out.pass_a[i] = outcomes["a"] is Outcome.PASS
        out.pass_b[i] = outcomes["b"] is Outcome.PASS
        if "phi" in group.state:
            out.furry_angle[i] = group.state["phi"]
        out.path_a[i] = len(engine.transactions[group.arms["a"]].resolution.confirmed_path) - 1
        out.path_b[i] = len(engine.transactions[group.arms["b"]].resolution.confirmed_path) - 1
    return out


def _switched_angles(stream: RngStream, angles: tuple, period, epoch: int, count: int) -> np.ndarray:
    if period is None:
        return np.full(count, angles[0])
    last = stream.uniforms((count, epoch + 1))[:, -1]
    return np.where(last < 0.5, angles[0], angles[1])


def _pair_block_compiled(template: PairTemplate, scen: PairScenario, seed: int, block: int,
                         start: int, count: int) -> TrialBatch:
    streams = _block_streams(seed, scen, block)
    angles_a = tuple(normalize_angle(a) for a in scen.angles_a)
    angles_b = tuple(normalize_angle(a) for a in scen.angles_b)
    qa = _switched_angles(streams["switch-a"], angles_a, scen.switch_period, template.epoch_a, count)
    qb = _switched_angles(streams["switch-b"], angles_b, scen.switch_period, template.epoch_b, count)
    out = TrialBatch.build(count, trial=np.arange(start, start + count), setting_a=qa, setting_b=qb,
                           path_a=template.path_a, path_b=template.path_b)
    if scen.rule == "epr":
        u = streams["outcome"].uniforms(count)
        idx = np.zeros(count, dtype=np.int64)
        # Same float operations as lottery(): sequential partial sums, target = u * total.
        for a in set(angles_a):
            for b in set(angles_b):
                mask = (qa == a) & (qb == b)
                if not mask.any():
                    continue
                acc, cums = 0.0, []
                for w in joint_probabilities(a, b):
                    acc += w
                    cums.append(acc)
                target = u[mask] * acc
                idx[mask] = sum((target >= c).astype(np.int64) for c in cums[:-1])
        out.pass_a[:] = idx <= 1
        out.pass_b[:] = (idx == 0) | (idx == 2)
    else:
        u = streams["outcome"].uniforms((count, 3))
        phi = math.pi * u[:, 0]
        out.furry_angle[:] = phi
        # math.cos keeps the thresholds bit-identical to the per-pair rule.
        out.pass_a[:] = [x < math.cos(q - p) ** 2 for x, q, p in zip(u[:, 1].tolist(), qa.tolist(), phi.tolist())]
        out.pass_b[:] = [x < math.cos(q - p) ** 2 for x, q, p in zip(u[:, 2].tolist(), qb.tolist(), phi.tolist())]
    return out


def _block_task(args) -> TrialBatch:
    kind, payload, scen, seed, block, start, count = args
    if kind == "full":
        return _pair_block_full(payload, scen, seed, block, start, count)
    return _pair_block_compiled(payload, scen, seed, block, start, count)


def default_workers() -> int:
    env = os.environ.get("SIM_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _map_blocks(tasks: list, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [_block_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_block_task, tasks))


def run_pairs(lattice: Lattice, scen: PairScenario, pairs: int, seed: int, *,
              full_protocol: bool = False, workers: int = 1, block_size: int = BLOCK_SIZE) -> TrialBatch:
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    if seed is None:
        raise ValueError("seed is required")
    template = compile_pair_template(lattice, scen, seed)
    use_full = full_protocol or not template.deterministic
    payload = lattice if use_full else template
    tasks = [("full" if use_full else "compiled", payload, scen, seed, b, start, count)
             for b, start, count in blocks(pairs, block_size)]
    return TrialBatch.concat(_map_blocks(tasks, workers))


def default_epr_lattice() -> Lattice:
    """Detectors 40 ticks apart, source in the middle."""
    return build_epr_chain(20)


def run_epr(lattice: Lattice, qa, qb, pairs: int, seed: int, **kw) -> TrialBatch:
    scen = PairScenario("epr", (_angle(qa),), (_angle(qb),), weighting=kw.pop("weighting", "amplitude"),
                        stream_key=tuple(kw.pop("stream_key", ())))
    return run_pairs(lattice, scen, pairs, seed, **kw)


def run_furry(lattice: Lattice, qa, qb, pairs: int, seed: int, **kw) -> TrialBatch:
    scen = PairScenario("furry", (_angle(qa),), (_angle(qb),), weighting=kw.pop("weighting", "amplitude"),
                        stream_key=tuple(kw.pop("stream_key", ())))
    return run_pairs(lattice, scen, pairs, seed, **kw)


# -- CHSH --------------------------------------------------------------------


@dataclass(frozen=True)
class Static:
    pass


@dataclass(frozen=True)
class PerTrialRandom:
    switch_period_ticks: int = 10


@dataclass
class ChshSummary:
    angles_a: tuple
    angles_b: tuple
    correlations: dict  # (i, j) -> CorrelationEstimate
    s: float
    stderr: float
    n: int
    records: TrialBatch | None = None

    def e(self, i: int, j: int) -> CorrelationEstimate:
        return self.correlations[(i, j)]


def chsh_from_correlations(angles_a, angles_b, correlations: dict, records=None) -> ChshSummary:
    s, stderr = chsh_statistic(correlations[(0, 0)], correlations[(0, 1)],
                               correlations[(1, 0)], correlations[(1, 1)])
    n = sum(c.n for c in correlations.values())
    return ChshSummary(tuple(angles_a), tuple(angles_b), correlations, s, stderr, n, records)


def _check_chsh_settings(settings_a, settings_b):
    if len(settings_a) != 2 or len(settings_b) != 2:
        raise ValueError("CHSH needs exactly two settings per side")


def run_chsh(lattice: Lattice, settings_a=CHSH_ANGLES_A, settings_b=CHSH_ANGLES_B,
             pairs_per_pair: int = 250_000, seed: int = 0, switching=Static(), *,
             rule: str = "epr", keep_records: bool = False, **kw) -> ChshSummary:
    """CHSH estimate of the hidden-time model.

    ``Static`` runs each of the four setting pairs separately.  With
    ``PerTrialRandom`` both analyzers switch during flight and
    ``4 * pairs_per_pair`` trials are sorted by the axes in place when the
    queries were formed.
    """
    _check_chsh_settings(settings_a, settings_b)
    sa = tuple(normalize_angle(_angle(a)) for a in settings_a)
    sb = tuple(normalize_angle(_angle(b)) for b in settings_b)
    weighting = kw.pop("weighting", "amplitude")
    correlations = {}
    kept = []
    if isinstance(switching, Static):
        for i in range(2):
            for j in range(2):
                scen = PairScenario(rule, (sa[i],), (sb[j],), weighting=weighting, stream_key=(i, j))
                batch = run_pairs(lattice, scen, pairs_per_pair, seed, **kw)
                correlations[(i, j)] = estimate_correlation(batch)
                if keep_records:
                    kept.append(batch)
    elif isinstance(switching, PerTrialRandom):
        scen = PairScenario(rule, sa, sb, switch_period=switching.switch_period_ticks,
                            weighting=weighting, stream_key=(9,))
        batch = run_pairs(lattice, scen, 4 * pairs_per_pair, seed, **kw)
        for i in range(2):
            for j in range(2):
                correlations[(i, j)] = estimate_correlation(batch.where(sa[i], sb[j]))
        if keep_records:
            kept.append(batch)
    else:
        raise TypeError(f"unknown switching mode {switching!r}")
    return chsh_from_correlations(sa, sb, correlations, TrialBatch.concat(kept) if kept else None)


# -- local hidden variables --------------------------------------------------


def _sign(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, 1, -1)


@dataclass
class LhvModel:
    """Deterministic local responses driven by a settings-blind hidden variable.

    ``sampler(stream, n)`` draws ``n`` values of lambda in ``[0, pi)``;
    ``response_a(setting, lam)`` and ``response_b(setting, lam)`` return +/-1
    arrays and see only their own side's setting.
    """

    sampler: Callable[[RngStream, int], np.ndarray]
    response_a: Callable[[float, np.ndarray], np.ndarray]
    response_b: Callable[[float, np.ndarray], np.ndarray]


def uniform_lambda(stream: RngStream, n: int) -> np.ndarray:
    return math.pi * stream.uniforms(n)


def default_lhv_model() -> LhvModel:
    def response(setting: float, lam: np.ndarray) -> np.ndarray:
        return _sign(np.cos(2 * (setting - lam)))

    return LhvModel(uniform_lambda, response, response)


def random_lhv_model(seed: int, bins: int = 32) -> LhvModel:
    """Random lookup-table responses, for checking the bound holds generally."""
    rs = np.random.default_rng(seed)
    tables: dict = {}

    def make(side: str):
        def response(setting: float, lam: np.ndarray) -> np.ndarray:
            key = (side, round(float(setting), 12))
            if key not in tables:
                tables[key] = rs.choice([-1, 1], size=bins)
            idx = np.minimum((lam / math.pi * bins).astype(int), bins - 1)
            return tables[key][idx]
        return response

    weights = rs.dirichlet(np.ones(bins))

    def sampler(stream: RngStream, n: int) -> np.ndarray:
        u = stream.uniforms((n, 2))
        cum = np.cumsum(weights)
        b = np.minimum(np.searchsorted(cum, u[:, 0] * cum[-1], side="right"), bins - 1)
        return (b + u[:, 1]) * math.pi / bins

    return LhvModel(sampler, make("a"), make("b"))


def constant_lhv_model(a: int = 1, b: int = 1) -> LhvModel:
    return LhvModel(uniform_lambda, lambda s, lam: np.full(len(lam), a), lambda s, lam: np.full(len(lam), b))


def run_lhv_pairs(model: LhvModel, qa: float, qb: float, pairs: int, seed: int,
                  stream_key: tuple = (), block_size: int = BLOCK_SIZE) -> TrialBatch:
    parts = []
    for blk, start, count in blocks(pairs, block_size):
        lam = np.asarray(model.sampler(block_stream(seed, "lhv", blk, *stream_key), count), dtype=float)
        ra = np.asarray(model.response_a(qa, lam))
        rb = np.asarray(model.response_b(qb, lam))
        parts.append(TrialBatch.build(count, trial=np.arange(start, start + count), setting_a=qa,
                                      setting_b=qb, pass_a=ra > 0, pass_b=rb > 0, hidden_var=lam))
    return TrialBatch.concat(parts)


def run_lhv_baseline(model: LhvModel | None = None, settings_a=CHSH_ANGLES_A, settings_b=CHSH_ANGLES_B,
                     pairs_per_pair: int = 250_000, seed: int = 0, *, keep_records: bool = False) -> ChshSummary:
    _check_chsh_settings(settings_a, settings_b)
    model = model or default_lhv_model()
    sa = tuple(_angle(a) for a in settings_a)
    sb = tuple(_angle(b) for b in settings_b)
    correlations = {}
    kept = []
    for i in range(2):
        for j in range(2):
            batch = run_lhv_pairs(model, sa[i], sb[j], pairs_per_pair, seed, (i, j))
            correlations[(i, j)] = estimate_correlation(batch)
            if keep_records:
                kept.append(batch)
    return chsh_from_correlations(sa, sb, correlations, TrialBatch.concat(kept) if kept else None)


# -- double slit -------------------------------------------------------------


DOUBLE_SLIT_WAVENUMBER = math.pi / 4
DOUBLE_SLIT_EXTRA_HOPS = 8


@dataclass
class SlitScreenProfile:
    positions: np.ndarray
    counts: np.ndarray
    weights: np.ndarray | None = None

    @property
    def bins(self) -> list[tuple[int, int]]:
        return [(int(p), int(c)) for p, c in zip(self.positions, self.counts)]

    @property
    def trials(self) -> int:
        return int(self.counts.sum())

    def visibility(self, centre: int, half_width: int, *, expected: bool = False) -> float:
        values = self.weights if expected else self.counts
        if values is None:
            raise ValueError("no expected weights recorded")
        mask = np.abs(self.positions - centre) <= half_width
        sel = np.asarray(values, dtype=float)[mask]
        hi, lo = sel.max(), sel.min()
        return 0.0 if hi + lo == 0 else float((hi - lo) / (hi + lo))


def _slit_engine(lattice: Lattice, marking: bool, wavenumber: float, extra_hops: int, rng,
                 weighting: str = "amplitude", record: bool = False) -> Engine:
    slits = lattice.meta.get("slits", [])
    if not slits:
        raise ValueError("no open slits")
    markers = {s: f"slit{i}" for i, s in enumerate(slits)} if marking else {}
    return Engine(lattice, wavenumber=wavenumber, extra_hops=extra_hops, rng=rng, markers=markers,
                  weighting=weighting, record=record)


def _screen_order(lattice: Lattice) -> tuple[list[int], np.ndarray]:
    screen = lattice.meta["screen"]
    dets = sorted(screen, key=lambda d: screen[d])
    return dets, np.array([screen[d] for d in dets])


def trace_first_landing(lattice: Lattice, which_path_marking: bool, seed: int,
                        wavenumber: float = DOUBLE_SLIT_WAVENUMBER,
                        extra_hops: int = DOUBLE_SLIT_EXTRA_HOPS) -> Engine:
    lattice.clear_marks()
    engine = _slit_engine(lattice, which_path_marking, wavenumber, extra_hops,
                          block_stream(seed, "arbitration", 0), record=True)
    engine.start_transaction(lattice.sources[0])
    engine.run_until_quiescent()
    return engine


def screen_weights(lattice: Lattice, marking: bool, wavenumber: float = DOUBLE_SLIT_WAVENUMBER,
                   extra_hops: int = DOUBLE_SLIT_EXTRA_HOPS, seed: int = 0) -> np.ndarray:
    """Born weight developed at each screen detector by one full transaction."""
    lattice.clear_marks()
    engine = _slit_engine(lattice, marking, wavenumber, extra_hops, RngStream(seed, "template"))
    tid = engine.start_transaction(lattice.sources[0])
    engine.run_until_quiescent()
    weights = engine.transactions[tid].detector_weights
    dets, _ = _screen_order(lattice)
    return np.array([weights.get(d, 0.0) for d in dets])


def run_double_slit(lattice: Lattice, which_path_marking: bool, trials: int, seed: int,
                    wavenumber: float = DOUBLE_SLIT_WAVENUMBER, *,
                    extra_hops: int = DOUBLE_SLIT_EXTRA_HOPS, full_protocol: bool = False,
                    block_size: int = BLOCK_SIZE) -> SlitScreenProfile:
    """Landing histogram on the screen row.

    The compiled route samples landings from the weights delivered to the
    source by one full protocol run; the weight-conserving arbitration makes
    that the exact landing law of the per-trial engine.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    dets, positions = _screen_order(lattice)
    weights = screen_weights(lattice, which_path_marking, wavenumber, extra_hops, seed)
    index = {d: i for i, d in enumerate(dets)}
    counts = np.zeros(len(dets), dtype=np.int64)
    if full_protocol:
        for blk, start, count in blocks(trials, block_size):
            rng = block_stream(seed, "arbitration", blk)
            for _ in range(count):
                lattice.clear_marks()
                engine = _slit_engine(lattice, which_path_marking, wavenumber, extra_hops, rng)
                tid = engine.start_transaction(lattice.sources[0])
                engine.run_until_quiescent()
                counts[index[engine.transactions[tid].resolution.winner]] += 1
    else:
        cums = np.cumsum(weights)
        total = cums[-1]
        for blk, start, count in blocks(trials, block_size):
            u = block_stream(seed, "landing", blk).uniforms(count)
            if total <= 0:
                hit = np.minimum((u * len(dets)).astype(int), len(dets) - 1)
            else:
                hit = np.minimum(np.searchsorted(cums, u * total, side="right"), len(dets) - 1)
            counts += np.bincount(hit, minlength=len(dets))
    return SlitScreenProfile(positions, counts, weights)


# -- two-particle amplitudes -------------------------------------------------


def symmetrized_amplitude(psi1, psi2, x1, x2, sign: int = 1) -> complex:
    """psi1(x1) psi2(x2) + sign * psi1(x2) psi2(x1); psi may be mappings or callables."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")

    def at(psi, x):
        return complex(psi(x) if callable(psi) else psi[x])

    return at(psi1, x1) * at(psi2, x2) + sign * at(psi1, x2) * at(psi2, x1)
