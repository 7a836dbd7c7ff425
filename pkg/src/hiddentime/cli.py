"""``sim`` command line.

Subcommands: epr, furry, chsh, lhv, clock, doubleslit, verify.  Flags
override values from ``--config``.  Exit codes: 0 success, 2 validation
failure, 3 runtime error (including failed acceptance criteria).
"""
from __future__ import annotations

import argparse
import csv
import datetime
import math
import sys
from typing import Sequence

from . import experiments as ex
from .acceptance import Harness, format_table
from .chronometry import run_clock
from .config import ConfigError, ScenarioConfig, build_config, load_config, parse_angle, parse_list
from .lattice import Lattice, LatticeError, build_double_slit
from .stats import (
    SummaryRow,
    estimate_correlation,
    estimate_yield,
    format_summary,
    marginal_pass_rate,
    write_summary_csv,
)

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="scenario file; flags override its values")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--summary", help="summary CSV path")
    p.add_argument("--trace", help="JSON-lines trace of the first trial")
    p.add_argument("--lattice", dest="lattice_file", help="lattice file instead of builder parameters")
    p.add_argument("--weighting", choices=("amplitude", "uniform"))
    p.add_argument("--workers", type=int, help="worker processes (default: SIM_THREADS or CPU count)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sim", description="Hidden-time transaction simulator")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name in ("epr", "furry"):
        p = sub.add_parser(name, help=f"{name} pair run at one settings pair")
        _common(p)
        p.add_argument("--qa", type=parse_angle)
        p.add_argument("--qb", type=parse_angle)
        p.add_argument("--pairs", type=int)
        p.add_argument("--arm-length", type=int)
        p.add_argument("--full-protocol", action="store_true", default=None)

    for name in ("chsh", "lhv"):
        p = sub.add_parser(name, help=f"CHSH estimate ({'hidden-time model' if name == 'chsh' else 'LHV baseline'})")
        _common(p)
        p.add_argument("--a", dest="qa", type=lambda s: parse_list(s, parse_angle), help="two angles, e.g. 0,pi/4")
        p.add_argument("--b", dest="qb", type=lambda s: parse_list(s, parse_angle))
        p.add_argument("--pairs", type=int, help="pairs per settings pair")
        if name == "chsh":
            p.add_argument("--switching", choices=("static", "random"))
            p.add_argument("--switch-period", type=int)
            p.add_argument("--arm-length", type=int)
            p.add_argument("--full-protocol", action="store_true", default=None)

    p = sub.add_parser("clock", help="flight time read off the quanta counter")
    _common(p)
    p.add_argument("--lengths", type=lambda s: parse_list(s, int))
    p.add_argument("--laser-period", type=int)
    p.add_argument("--relay-detector", dest="relay_distance", type=int, metavar="DISTANCE")

    p = sub.add_parser("doubleslit", help="landing histogram behind two slits")
    _common(p)
    p.add_argument("--trials", dest="pairs", type=int)
    p.add_argument("--marking", action="store_true", default=None)
    p.add_argument("--wavenumber", type=parse_angle)
    p.add_argument("--width", type=int)
    p.add_argument("--slit-offset", type=int)
    p.add_argument("--extra-hops", type=int)
    p.add_argument("--full-protocol", action="store_true", default=None)

    p = sub.add_parser("verify", help="run every acceptance criterion")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--summary", help="summary CSV path")
    p.add_argument("--only", type=lambda s: parse_list(s, int), help="comma-separated criterion numbers")
    p.add_argument("--workers", type=int)
    return parser


_NOT_CONFIG = {"command", "config", "workers", "only"}


def resolve_config(args: argparse.Namespace) -> ScenarioConfig:
    overrides = {k: v for k, v in vars(args).items() if v is not None and k not in _NOT_CONFIG}
    if isinstance(overrides.get("qa"), float):
        overrides["qa"] = [overrides["qa"]]
    if isinstance(overrides.get("qb"), float):
        overrides["qb"] = [overrides["qb"]]
    if args.config:
        cfg = load_config(args.config, {**overrides, "kind": args.command})
    else:
        cfg = build_config({**overrides, "kind": args.command})
    return cfg


def _workers(args) -> int:
    return args.workers if getattr(args, "workers", None) else ex.default_workers()


def _epr_lattice(cfg: ScenarioConfig) -> Lattice:
    if cfg.lattice_file:
        lattice = Lattice.load(cfg.lattice_file)
        if "epr" not in lattice.meta:
            raise LatticeError("lattice file has no EPR annotation; use builder parameters")
        return lattice
    return ex.build_epr_chain(cfg.arm_length)


def _pair_rows(cfg: ScenarioConfig, batch) -> list[SummaryRow]:
    delta = cfg.qa[0] - cfg.qb[0]
    y = estimate_yield(batch)
    if cfg.kind == "epr":
        target = math.cos(delta) ** 2
        rows = [SummaryRow("yield_normalized", y.normalized, y.normalized_stderr, y.n, target, 0.01,
                           abs(y.normalized - target) <= 0.01)]
    else:
        target = ex.furry_coincidence(delta)
        rows = [SummaryRow("yield_raw", y.raw, y.stderr, y.n, target, 0.005, abs(y.raw - target) <= 0.005),
                SummaryRow("yield_normalized", y.normalized, y.normalized_stderr, y.n, 2 * target, 0.01,
                           abs(y.normalized - 2 * target) <= 0.01)]
    e = estimate_correlation(batch)
    rows.append(SummaryRow("correlation", e.value, e.stderr, e.n, math.cos(2 * delta) if cfg.kind == "epr"
                           else 0.5 * math.cos(2 * delta), 3 * e.stderr, True))
    rows[-1].passed = abs(e.value - rows[-1].target) <= rows[-1].tolerance
    for side in ("a", "b"):
        p, se, n = marginal_pass_rate(batch, side)
        rows.append(SummaryRow(f"marginal_{side}", p, se, n, 0.5, 3 * se, abs(p - 0.5) <= 3 * se))
    return rows


def _chsh_rows(summary) -> list[SummaryRow]:
    rows = []
    for (i, j), e in sorted(summary.correlations.items()):
        target = math.cos(2 * (summary.angles_a[i] - summary.angles_b[j]))
        rows.append(SummaryRow(f"E[a{i},b{j}]", e.value, e.stderr, e.n, target, 3 * e.stderr,
                               abs(e.value - target) <= 3 * e.stderr))
    return rows


def _finish(cfg: ScenarioConfig, rows: list[SummaryRow]) -> None:
    print(format_summary(rows))
    if cfg.summary:
        write_summary_csv(rows, cfg.summary)


def cmd_pairs(cfg: ScenarioConfig, workers: int) -> None:
    lattice = _epr_lattice(cfg)
    runner = ex.run_epr if cfg.kind == "epr" else ex.run_furry
    batch = runner(lattice, cfg.qa[0], cfg.qb[0], cfg.pairs, cfg.seed, weighting=cfg.weighting,
                   full_protocol=cfg.full_protocol, workers=workers)
    if cfg.out:
        batch.to_csv(cfg.out)
    if cfg.trace:
        scen = ex.PairScenario(cfg.kind, (cfg.qa[0],), (cfg.qb[0],), weighting=cfg.weighting)
        ex.trace_first_pair(lattice, scen, cfg.seed).write_trace(cfg.trace)
    _finish(cfg, _pair_rows(cfg, batch))


def _write_chsh_csv(summary, path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["qa_rad", "qb_rad", "correlation", "stderr", "n"])
        for (i, j), e in sorted(summary.correlations.items()):
            w.writerow([repr(summary.angles_a[i]), repr(summary.angles_b[j]), f"{e.value:.6f}",
                        f"{e.stderr:.6f}", e.n])


def cmd_chsh(cfg: ScenarioConfig, workers: int) -> None:
    if cfg.kind == "chsh":
        lattice = _epr_lattice(cfg)
        switching = ex.Static() if cfg.switching == "static" else ex.PerTrialRandom(cfg.switch_period)
        summary = ex.run_chsh(lattice, cfg.qa, cfg.qb, cfg.pairs, cfg.seed, switching,
                              weighting=cfg.weighting, full_protocol=cfg.full_protocol, workers=workers)
        target, tol = 2 * math.sqrt(2), 0.02
        if cfg.trace:
            scen = ex.PairScenario("epr", tuple(cfg.qa), tuple(cfg.qb),
                                   None if cfg.switching == "static" else cfg.switch_period, cfg.weighting)
            ex.trace_first_pair(lattice, scen, cfg.seed).write_trace(cfg.trace)
    else:
        summary = ex.run_lhv_baseline(None, cfg.qa, cfg.qb, cfg.pairs, cfg.seed)
        target, tol = 2.0, 0.02
    if cfg.out:
        _write_chsh_csv(summary, cfg.out)
    rows = _chsh_rows(summary)
    if cfg.kind == "chsh":
        rows.append(SummaryRow("S", summary.s, summary.stderr, summary.n, target, tol,
                               abs(summary.s - target) <= tol))
    else:
        rows.append(SummaryRow("S", summary.s, summary.stderr, summary.n, target, tol, summary.s <= target + tol))
    _finish(cfg, rows)


def cmd_clock(cfg: ScenarioConfig) -> None:
    runs = [run_clock(d, cfg.laser_period, cfg.seed, relay_distance=cfg.relay_distance, record=bool(cfg.trace))
            for d in cfg.lengths]
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["distance_ticks", "laser_period", "reading", "seed"])
            for r in runs:
                w.writerow([r.distance, r.laser_period, r.reading, r.seed])
    if cfg.trace:
        runs[0].engine.write_trace(cfg.trace)
    rows = [SummaryRow(f"reading[{r.distance}]", r.reading, 0.0, 1, r.distance // cfg.laser_period, 0.0,
                       r.reading == r.distance // cfg.laser_period) for r in runs]
    _finish(cfg, rows)


def cmd_doubleslit(cfg: ScenarioConfig) -> None:
    if cfg.lattice_file:
        raise ConfigError("lattice_file", "double-slit runs need builder parameters (width, slit_offset)")
    lattice = build_double_slit(cfg.width, cfg.slit_offset)
    prof = ex.run_double_slit(lattice, cfg.marking, cfg.pairs, cfg.seed, cfg.wavenumber,
                              extra_hops=cfg.extra_hops, full_protocol=cfg.full_protocol)
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["screen_x", "hits", "expected_weight"])
            for (x, c), wt in zip(prof.bins, prof.weights):
                w.writerow([x, c, repr(float(wt))])
    if cfg.trace:
        ex.trace_first_landing(lattice, cfg.marking, cfg.seed, cfg.wavenumber, cfg.extra_hops).write_trace(cfg.trace)
    v = prof.visibility(lattice.meta["centre"], 4)
    ok = v <= 0.1 if cfg.marking else v >= 0.8
    _finish(cfg, [SummaryRow("visibility", v, 0.0, prof.trials, 0.1 if cfg.marking else 0.8, 0.0, ok)])


def cmd_verify(args) -> int:
    harness = Harness(seed=args.seed, workers=_workers(args))
    print(f"# acceptance run {datetime.datetime.now().isoformat(timespec='seconds')} seed={args.seed}")
    results = harness.run(set(args.only) if args.only else None, on_result=lambda r: print(r.line(), flush=True))
    print(format_table(results).splitlines()[-1])
    if args.summary:
        write_summary_csv([row for r in results for row in r.rows], args.summary)
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args)
        cfg = resolve_config(args)
    except (ConfigError, LatticeError, ValueError) as exc:
        print(f"sim: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print("# resolved configuration")
    print(cfg.to_ini())
    try:
        if cfg.kind in ("epr", "furry"):
            cmd_pairs(cfg, _workers(args))
        elif cfg.kind in ("chsh", "lhv"):
            cmd_chsh(cfg, _workers(args))
        elif cfg.kind == "clock":
            cmd_clock(cfg)
        else:
            cmd_doubleslit(cfg)
    except (ConfigError, LatticeError) as exc:
        print(f"sim: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - any failure mid-run maps to the runtime exit code
        print(f"sim: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
