"""``gridplan`` command line: expand, assess, compare, validate.

Every flag may also be set through an environment variable named
``GRIDPLAN_<FLAG>`` (upper case, dashes as underscores), e.g.
``GRIDPLAN_TRIALS=200``. Explicit flags win over the environment.

Exit codes: 0 success, 2 usage error, 3 data error, 4 solver failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import time
from pathlib import Path

from . import __version__
from .expansion import ExpansionCase, ExpansionPlan, PlanningError, apply_plan, solve_expansion
from .ingest import SchemaError, bundled_fixture_dir, load_network, read_profiles, synthesize_profiles
from .metrics import CaseReport, compare_cases, compute_metrics, dumps, write_comparison, write_metrics_report
from .network import validate_network
from .reliability import DispatchError, dispatch_schedule, run_monte_carlo

ENV_PREFIX = "GRIDPLAN_"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4
PROFILE_FILE = "profiles.csv"

log = logging.getLogger("gridplan")


class DataError(Exception):
    pass


def _env(name, default):
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"), default)


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {v}")
    return v


def _crf(text):
    v = float(text)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"must be in (0, 1], got {v}")
    return v


def _add_network_args(p):
    p.add_argument("--net", default=_env("net", None), help="network directory (default: bundled 7-zone fixture)")
    p.add_argument("--profiles", default=_env("profiles", None),
                   help=f"hourly profile CSV (default: NET/{PROFILE_FILE} if present, else synthesized)")
    p.add_argument("--profile-seed", type=_nonneg_int, default=_env("profile_seed", "0"),
                   help="seed for synthesized profiles")
    p.add_argument("--voll", type=_positive_float, default=_env("voll", None), help="value of lost load, USD/MWh")
    p.add_argument("--crf", type=_crf, default=_env("crf", None), help="capital recovery factor")
    p.add_argument("--interest-rate", type=float, default=_env("interest_rate", None), help="discount rate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridplan", description="Transmission and storage expansion with "
                                     "Monte Carlo reliability assessment.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a network directory")
    p.add_argument("--net", default=_env("net", None))

    p = sub.add_parser("expand", help="solve the expansion plan")
    _add_network_args(p)
    p.add_argument("--case", type=str.lower, choices=("tep", "bep", "btep"), default=_env("case", "btep"))
    p.add_argument("--out", default=_env("out", "out/expand"))

    p = sub.add_parser("assess", help="Monte Carlo reliability assessment")
    _add_network_args(p)
    p.add_argument("--plan", default=_env("plan", None), help="plan JSON to apply (omit for the reference case)")
    p.add_argument("--name", default=_env("name", None), help="case label in reports")
    p.add_argument("--trials", type=_positive_int, default=_env("trials", "1000"))
    p.add_argument("--seed", type=_nonneg_int, default=_env("seed", "0"))
    p.add_argument("--workers", type=_positive_int, default=_env("workers", "1"))
    p.add_argument("--epsilon", type=float, default=_env("epsilon", "1e-6"))
    p.add_argument("--hours", type=_positive_int, default=_env("hours", None), help="truncate the horizon")
    p.add_argument("--schedule-state", action="store_true", help="take previous-hour values from the schedule")
    p.add_argument("--no-resume", action="store_true", help="discard trial results from an earlier run")
    p.add_argument("--out", default=_env("out", "out/assess"))

    p = sub.add_parser("compare", help="compare assessed cases against a reference")
    p.add_argument("--ref", required=True, help="reference metrics.json (or its directory)")
    p.add_argument("cases", nargs="+", help="case metrics.json files (or directories)")
    p.add_argument("--cost", action="append", default=[], metavar="CASE=USD",
                   help="annual cost for a case, overriding the value recorded by assess")
    p.add_argument("--out", default=_env("out", "out/compare"))
    return parser


# -- helpers ------------------------------------------------------------------

def _load_net(args):
    path = Path(args.net) if args.net else bundled_fixture_dir()
    if not path.is_dir():
        raise DataError(f"network directory not found: {path}")
    net = load_network(path)
    econ = net.econ
    changes = {}
    if getattr(args, "voll", None) is not None:
        changes["voll_usd_per_mwh"] = float(args.voll)
    if getattr(args, "crf", None) is not None:
        changes["capital_recovery_factor"] = float(args.crf)
    if getattr(args, "interest_rate", None) is not None:
        changes["interest_rate"] = float(args.interest_rate)
    if changes:
        net = net.replace(econ=dataclasses.replace(econ, **changes))
        report = validate_network(net)
        if not report.ok:
            raise DataError(str(report))
    return net, path


def _load_profiles(args, net, net_dir):
    if args.profiles:
        path = Path(args.profiles)
        if not path.is_file():
            raise DataError(f"profile file not found: {path}")
        return read_profiles(path), str(path)
    candidate = net_dir / PROFILE_FILE
    if candidate.is_file():
        return read_profiles(candidate), str(candidate)
    return synthesize_profiles(net, seed=int(args.profile_seed)), f"synthetic(seed={int(args.profile_seed)})"


def _config_echo(args, drop=()) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("verbose",) + tuple(drop)}
    cfg["command"] = args.command
    return cfg


def _metrics_path(p) -> Path:
    p = Path(p)
    return p / "metrics.json" if p.is_dir() else p


# -- commands -----------------------------------------------------------------

def cmd_validate(args) -> int:
    path = Path(args.net) if args.net else bundled_fixture_dir()
    if not path.is_dir():
        raise DataError(f"network directory not found: {path}")
    net = load_network(path)  # raises SchemaError on failure
    print(f"{path}: ok ({net.n_zones} zones, {len(net.branches)} branches, {len(net.generators)} generators, "
          f"{len(net.storages)} storage, {net.total_capacity_mw():,.0f} MW)")
    return EXIT_OK


def cmd_expand(args) -> int:
    net, net_dir = _load_net(args)
    profiles, source = _load_profiles(args, net, net_dir)
    case = ExpansionCase.daily_peaks(args.case.upper(), profiles)
    t0 = time.perf_counter()
    plan = solve_expansion(net, case)
    log.info("expansion %s solved in %.1f s", args.case, time.perf_counter() - t0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = _config_echo(args)
    cfg["net"], cfg["profiles"] = str(net_dir), source
    plan_d = plan.to_dict()
    plan_d["config"] = cfg
    (out / "plan.json").write_text(dumps(plan_d))
    (out / "plan_summary.txt").write_text(plan.summary() + "\n")
    (out / "run.json").write_text(dumps(cfg))
    print(plan.summary())
    print(f"wrote {out / 'plan.json'}")
    return EXIT_OK


def cmd_assess(args) -> int:
    net, net_dir = _load_net(args)
    profiles, source = _load_profiles(args, net, net_dir)
    name = args.name
    annual_cost = None
    if args.plan:
        plan_path = Path(args.plan)
        if not plan_path.is_file():
            raise DataError(f"plan file not found: {plan_path}")
        try:
            plan = ExpansionPlan.load(plan_path)
            net = apply_plan(net, plan)
        except (KeyError, ValueError) as exc:
            raise DataError(f"{plan_path}: {exc}") from exc
        annual_cost = (plan.line_invest_cost_usd + plan.storage_invest_cost_usd) * net.econ.capital_recovery_factor
        name = name or plan.case
    name = name or "reference"
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results_file = out / "trials.jsonl"
    if args.no_resume and results_file.exists():
        results_file.unlink()
    t0 = time.perf_counter()
    sched = dispatch_schedule(net, profiles, args.hours)
    log.info("stage-1 schedule: %d hours in %.1f s", sched.hours, time.perf_counter() - t0)
    trials = run_monte_carlo(net, profiles, args.trials, args.seed, args.workers, args.hours, args.epsilon,
                             args.schedule_state, schedule=sched, results_file=results_file)
    log.info("%d trials in %.1f s", len(trials), time.perf_counter() - t0)
    metrics = compute_metrics(trials, args.epsilon, zone_ids=net.zone_ids)
    # the metrics echo leaves out settings that cannot change any number
    cfg = _config_echo(args, drop=("workers", "out", "no_resume"))
    cfg["net"], cfg["profiles"] = str(net_dir), source
    report = CaseReport(name, metrics, args.seed, cfg, annual_cost)
    paths = write_metrics_report(report, out)
    full = _config_echo(args)
    full["net"], full["profiles"] = str(net_dir), source
    (out / "run.json").write_text(dumps(full))
    print(f"{name}: EUE {metrics.system_eue_mwh:,.1f} MWh/yr, LOLH {metrics.system_lolh_h:.2f} h/yr "
          f"over {metrics.trials} trials")
    print(f"wrote {paths['json']}")
    return EXIT_OK


def _read_report(path) -> CaseReport:
    import json

    p = _metrics_path(path)
    if not p.is_file():
        raise DataError(f"metrics file not found: {p}")
    try:
        return CaseReport.from_dict(json.loads(p.read_text()))
    except (KeyError, ValueError) as exc:
        raise DataError(f"{p}: not a metrics report ({exc})") from exc


def cmd_compare(args) -> int:
    ref = _read_report(args.ref)
    cases = [_read_report(c) for c in args.cases]
    for spec in args.cost:
        label, _, usd = spec.partition("=")
        matches = [c for c in cases if c.case == label]
        if not usd or not matches:
            raise DataError(f"--cost {spec!r}: expected CASE=USD naming one of {[c.case for c in cases]}")
        for c in matches:
            c.annual_cost_usd = float(usd)
    try:
        comparison = compare_cases(ref, cases)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    comparison["config"] = _config_echo(args, drop=("out",))
    paths = write_comparison(comparison, args.out)
    print(paths["table"].read_text(), end="")
    print(f"wrote {paths['json']}")
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "expand": cmd_expand, "assess": cmd_assess, "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (DataError, SchemaError, FileNotFoundError) as exc:
        print(f"gridplan: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (PlanningError, DispatchError) as exc:
        print(f"gridplan: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"gridplan: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
