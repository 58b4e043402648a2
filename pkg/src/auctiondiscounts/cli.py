"""Command-line driver.

Subcommands: ``estimate``, ``solve``, ``outcomes``, ``verify``, ``plotdata``.
Exit codes: 0 success, 1 a verification check failed, 2 input or config
error, 3 numerical infeasibility.  Progress goes to stderr; data goes to
files or stdout.

Config files are JSON::

    {
      "solver": {"dist1": {"kind": "uniform", "lo": 0, "hi": 1},
                 "dist2": {"kind": "uniform", "lo": 0, "hi": 1},
                 "n": 4, "r": 0.0, "steps": 10000},
      "estimation": {"rate": 0.05, "trim": [0.01, 0.99]},
      "outcomes": {"sweep": [0, 0.05, 0.1, 0.15, 0.2, 0.25]},
      "seed": 0
    }

Unknown keys are rejected at every level.  Flags override config keys.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .distributions import DistributionError, from_dict
from .equivalence import equal_rate_sweep, run_additive_check, run_multiplicative_check
from .estimation import EstimationConfig, EstimationError, HeaderError, ingest, run_estimation
from .outcomes import sweep, write_outcomes_csv
from .solver import (
    BracketError,
    Role,
    SolverConfig,
    SolverError,
    TabulatedBidFunction,
    solve,
    write_tables_csv,
)

log = logging.getLogger("auctiondiscounts")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2, 3

_SOLVER_KEYS = {"dist1", "dist2", "n", "r", "steps", "bstar_tolerance", "bstar_bracket", "max_iter"}
_ESTIMATION_KEYS = {"rate", "bandwidth", "n_total", "trim", "grid_size"}
_OUTCOME_KEYS = {"sweep", "round3", "conditional"}
_TOP_KEYS = {"solver", "estimation", "outcomes", "seed", "bids", "out"}

DEFAULT_SWEEP = (0.0, 0.05, 0.10, 0.15, 0.20, 0.25)


class ConfigError(ValueError):
    pass


def _reject_unknown(section: dict, allowed: set, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a JSON object")
    extra = sorted(set(section) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    validate_config(doc)
    return doc


def validate_config(doc: dict) -> None:
    _reject_unknown(doc, _TOP_KEYS, "config")
    _reject_unknown(doc.get("solver", {}), _SOLVER_KEYS, "solver")
    _reject_unknown(doc.get("estimation", {}), _ESTIMATION_KEYS, "estimation")
    _reject_unknown(doc.get("outcomes", {}), _OUTCOME_KEYS, "outcomes")
    if "solver" in doc:
        solver_config(doc)


def solver_config(doc: dict, **overrides) -> SolverConfig:
    sec = dict(doc.get("solver", {}))
    sec.update({k: v for k, v in overrides.items() if v is not None})
    for key in ("dist1", "dist2"):
        if key not in sec:
            raise ConfigError(f"solver.{key} is required")
    try:
        sec["dist1"] = from_dict(sec["dist1"])
        sec["dist2"] = from_dict(sec["dist2"])
        if sec.get("bstar_bracket") is not None:
            sec["bstar_bracket"] = tuple(float(x) for x in sec["bstar_bracket"])
        return SolverConfig(**sec)
    except (DistributionError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid solver config: {exc}") from exc


def solver_config_to_dict(cfg: SolverConfig) -> dict:
    return {
        "dist1": cfg.dist1.to_dict(),
        "dist2": cfg.dist2.to_dict(),
        "n": cfg.n,
        "r": cfg.r,
        "steps": cfg.steps,
        "bstar_tolerance": cfg.bstar_tolerance,
        "bstar_bracket": None if cfg.bstar_bracket is None else list(cfg.bstar_bracket),
        "max_iter": cfg.max_iter,
    }


def parse_rates(text: str) -> list[float]:
    try:
        rates = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad rate list {text!r}") from exc
    if not rates:
        raise ConfigError("rate list is empty")
    for r in rates:
        if not 0.0 <= r < 1.0:
            raise ConfigError(f"rate {r} outside [0, 1)")
    return rates


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _report_path(out: str) -> Path:
    p = Path(out)
    return p.with_name(p.stem + ".report.json")


# -- subcommands ------------------------------------------------------------


def cmd_estimate(args) -> int:
    doc = load_config(args.config) if args.config else {}
    sec = dict(doc.get("estimation", {}))
    if args.rate is not None:
        sec["rate"] = args.rate
    if args.bandwidth is not None:
        sec["bandwidth"] = args.bandwidth
    if "trim" in sec:
        sec["trim"] = tuple(sec["trim"])
    try:
        cfg = EstimationConfig(**sec)
    except (EstimationError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    bids_path = args.bids or doc.get("bids")
    out = args.out or doc.get("out")
    if not bids_path:
        raise ConfigError("--bids is required")
    try:
        with open(bids_path, newline="", encoding="utf-8") as fh:
            records, errors = ingest(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read bids {bids_path}: {exc}") from exc
    for err in errors[:20]:
        log.warning("line %d: %s", err.line, err.message)
    if len(errors) > 20:
        log.warning("... %d more row errors", len(errors) - 20)
    log.info("ingested %d records (%d row errors)", len(records), len(errors))
    result = run_estimation(records, cfg)
    summary = result.summary()
    summary["row_errors"] = len(errors)
    _write_json(summary, out)
    if out not in (None, "-"):
        _write_json(summary, None)
    if args.pseudo_values:
        with open(args.pseudo_values, "w", newline="", encoding="utf-8") as fh:
            result.write_pseudo_values(fh)
    return EXIT_OK


def cmd_solve(args) -> int:
    doc = load_config(args.config)
    cfg = solver_config(doc, steps=args.steps, r=args.rate)
    out = args.out or doc.get("out")
    if not out:
        raise ConfigError("--out is required")
    t0 = time.perf_counter()
    report = solve(cfg, audit=not args.no_audit)
    log.info("b* = %r in %.2fs", report.b_star, time.perf_counter() - t0)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        write_tables_csv(report.bid_functions, fh)
    audit = None
    if report.audit is not None:
        a = report.audit
        audit = {
            "mean_gap_discounted": a.mean_gap1,
            "mean_gap_undiscounted": a.mean_gap2,
            "max_gap_discounted": a.max_gap1,
            "max_gap_undiscounted": a.max_gap2,
            "probes": a.probes,
        }
    payload = {
        "config": solver_config_to_dict(cfg),
        "b_star": report.b_star,
        "feasible": report.feasible,
        "audit": audit,
        "notes": report.notes,
        "tables": {
            tab.role.value: {"valuation": tab.valuations.tolist(), "bid": tab.bids.tolist()}
            for tab in report.bid_functions
        },
    }
    _write_json(payload, _report_path(out))
    print(f"b_star {report.b_star!r}")
    if audit is not None:
        print(f"best_response_gap discounted {audit['mean_gap_discounted']!r} "
              f"undiscounted {audit['mean_gap_undiscounted']!r}")
    return EXIT_OK


def cmd_outcomes(args) -> int:
    doc = load_config(args.config)
    sec = doc.get("outcomes", {})
    rates = parse_rates(args.sweep) if args.sweep else [float(x) for x in sec.get("sweep", DEFAULT_SWEEP)]
    cfg = solver_config(doc, steps=args.steps)
    out = args.out or doc.get("out")
    round3 = args.round3 or bool(sec.get("round3", False))
    conditional = args.conditional or bool(sec.get("conditional", False))
    rows = []
    for r in rates:
        log.info("solving r=%g", r)
        rows.extend(sweep([r], cfg))
    failed = [row for row in rows if row.failed]
    for row in failed:
        print(f"warning: r={row.r!r} flagged as failed: {row.error}", file=sys.stderr)
    if out in (None, "-"):
        write_outcomes_csv(rows, sys.stdout, round3=round3, conditional=conditional)
    else:
        with open(out, "w", newline="", encoding="utf-8") as fh:
            write_outcomes_csv(rows, fh, round3=round3, conditional=conditional)
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.trials < 1:
        raise ConfigError("--trials must be >= 1")
    if args.theorem == "additive":
        text = run_additive_check(args.trials, args.seed).to_text()
        passed = text.rstrip().endswith("PASS")
    elif args.theorem == "multiplicative":
        text = run_multiplicative_check(args.trials, args.seed).to_text()
        passed = text.rstrip().endswith("PASS")
    else:
        if args.config:
            cfg = solver_config(load_config(args.config), steps=args.steps)
        else:
            from .distributions import Uniform
            cfg = SolverConfig(Uniform(0.0, 1.0), Uniform(0.0, 1.0), steps=args.steps or 10_000)
        rates = parse_rates(args.rates) if args.rates else list(DEFAULT_SWEEP)
        report = equal_rate_sweep(cfg, rates)
        text, passed = report.to_text(), report.passed
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def _load_report(path):
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read report {path}: {exc}") from exc
    if not raw.strip():
        raise ConfigError(f"report {path} is empty")
    try:
        doc = json.loads(raw)
        r = float(doc["config"]["r"])
        tables = doc["tables"]
        curves = [
            TabulatedBidFunction(
                np.asarray(tables[role.value]["valuation"], dtype=float),
                np.asarray(tables[role.value]["bid"], dtype=float),
                role,
            )
            for role in Role
        ]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"report {path} has no usable bid tables: {exc}") from exc
    return r, curves


def cmd_plotdata(args) -> int:
    rows = []
    for path in args.solve:
        r, curves = _load_report(path)
        for tab in curves:
            for v, b in zip(tab.valuations.tolist(), tab.bids.tolist()):
                rows.append((tab.role.value, r, v, b))
    fh = sys.stdout if args.out in (None, "-") else open(args.out, "w", newline="", encoding="utf-8")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["role", "r", "valuation", "bid"])
        for role, r, v, b in rows:
            w.writerow([role, repr(r), repr(v), repr(b)])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def _rate(text):
    r = float(text)
    if not 0.0 <= r < 1.0:
        raise argparse.ArgumentTypeError(f"rate {r} outside [0, 1)")
    return r


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="auctiondiscounts", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="progress logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", help="recover valuation distributions from a bid log")
    e.add_argument("--bids", help="CSV with header auction_id,bidder_class,bid")
    e.add_argument("--rate", type=_rate, help="discount rate applied to the discounted class")
    e.add_argument("--out", help="summary JSON path (stdout if omitted)")
    e.add_argument("--config")
    e.add_argument("--bandwidth", type=float)
    e.add_argument("--pseudo-values", help="optional CSV dump of pseudo-values")
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("solve", help="solve the two-class equilibrium")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="bid table CSV; the report goes next to it as <stem>.report.json")
    s.add_argument("--steps", type=int)
    s.add_argument("--rate", type=_rate, help="override solver.r")
    s.add_argument("--no-audit", action="store_true")
    s.set_defaults(func=cmd_solve)

    o = sub.add_parser("outcomes", help="outcome statistics over a sweep of rates")
    o.add_argument("--config", required=True)
    o.add_argument("--sweep", help='comma-separated rates, e.g. "0,0.05,0.1"')
    o.add_argument("--out")
    o.add_argument("--steps", type=int)
    o.add_argument("--round3", action="store_true")
    o.add_argument("--conditional", action="store_true")
    o.set_defaults(func=cmd_outcomes)

    v = sub.add_parser("verify", help="check the discount equivalences")
    v.add_argument("--theorem", choices=["additive", "multiplicative", "equal-rate"], required=True)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--trials", type=int, default=100_000)
    v.add_argument("--config", help="solver config for equal-rate")
    v.add_argument("--rates", help="rates for equal-rate")
    v.add_argument("--steps", type=int)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    d = sub.add_parser("plotdata", help="bid curves from solve reports as CSV")
    d.add_argument("--solve", action="append", required=True, help="solve report JSON (repeatable)")
    d.add_argument("--out")
    d.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except HeaderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConfigError, EstimationError, DistributionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BracketError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        print("hint: set solver.bstar_bracket to [lo, hi] with lo feasible and hi infeasible, "
              "e.g. widen hi toward the undiscounted support maximum", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolverError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
