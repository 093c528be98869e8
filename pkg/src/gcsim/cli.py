"""Command-line front end: run, check, sweep.

Exit codes: 0 clean run, 2 parse error, 3 validation failure, 4 runtime
invariant violations (the run completed but recorded violations, or was
aborted by a hard integrity failure).
"""
from __future__ import annotations

import argparse
import concurrent.futures
import itertools
import json
import logging
import os
import sys

from . import engine, scenario as scen
from .errors import RunAborted, ScenarioParseError, ScenarioValidationError
from .trace import write_summary_json, write_trace_csv, write_violations_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4

_SWEEP_PARAMS = ("theta", "mu", "eps_d", "eps_m", "jitter", "n")


def _setup_logging() -> None:
    level = os.environ.get("GCS_SIM_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")


def cmd_run(args) -> int:
    try:
        sc = scen.load_scenario(args.scenario, seed_override=args.seed)
    except ScenarioParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ScenarioValidationError as exc:
        for p in exc.problems:
            print(f"validation: {p}", file=sys.stderr)
        return EXIT_VALIDATION
    os.makedirs(args.out, exist_ok=True)
    try:
        result = engine.run(sc)
    except RunAborted as exc:
        report = [v.to_dict() for v in exc.violations]
        report.append({"time": None, "kind": "aborted", "detail": str(exc)})
        with open(os.path.join(args.out, "violations.json"), "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"run aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    write_trace_csv(result.trace, os.path.join(args.out, "trace.csv"))
    write_summary_json(result.summary, os.path.join(args.out, "summary.json"))
    write_violations_json(result.violations, os.path.join(args.out, "violations.json"))
    logger.info("run finished in %.3fs with %d violations",
                result.summary.wall_time_s, len(result.violations))
    if result.violations:
        print(f"{len(result.violations)} violations recorded", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_check(args) -> int:
    try:
        sc = scen.load_scenario(args.scenario)
        report = scen.static_report(sc)
    except ScenarioParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ScenarioValidationError as exc:
        for p in exc.problems:
            print(f"validation: {p}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"sigma              {report['sigma']!r}")
    print(f"s_max              {report['s_max']}")
    print(f"timeout_window     {report['timeout_window']!r}")
    print(f"kappa_diameter     {report['kappa_diameter']!r}")
    print(f"local_bound        {report['local_bound']!r}")
    print(f"global_bound       {report['global_bound']!r}")
    print("kappa per edge:")
    for rec in report["kappa_per_edge"]:
        print(f"  ({rec['u']},{rec['v']})  {rec['kappa']!r}")
    return EXIT_OK


def _apply_overrides(doc: dict, overrides: dict) -> dict:
    doc = json.loads(json.dumps(doc))
    for key, val in overrides.items():
        if key == "theta":
            doc["clocks"]["theta"] = val
        elif key == "mu":
            doc["clocks"]["mu"] = val
        elif key in ("eps_d", "eps_m", "jitter"):
            graph = doc["graph"]
            if "template" in graph:
                graph["template"].setdefault("edge", {})[key] = val
            else:
                for rec in graph["edges"]:
                    rec[key] = val
        elif key == "n":
            graph = doc["graph"]
            if "template" not in graph:
                raise ScenarioValidationError(
                    ["sweep over n requires a template-based graph section"]
                )
            graph["template"]["n"] = int(val)
        else:
            raise ScenarioValidationError([f"unsupported sweep parameter {key!r}"])
    return doc


def _sweep_row(doc: dict, overrides: dict, seed: int) -> dict:
    row = {**overrides, "seed": seed}
    try:
        sc = scen.build_scenario(_apply_overrides(doc, overrides), seed_override=seed)
        result = engine.run(sc)
    except (ScenarioValidationError, ScenarioParseError, RunAborted) as exc:
        row["status"] = f"error: {exc}"
        return row
    report = result.summary.bound_report
    max_ratio = max(
        sc.kappa[(u, v)] / p.max_delay_bound for u, v, p in sc.graph.edges
    )
    row.update(
        status="ok",
        cycles=result.summary.cycles_completed,
        max_local=report["max_observed_local"],
        max_global=report["max_observed_global"],
        local_bound=report["local_bound"],
        global_bound=report["global_bound"],
        slack_local=report["local_bound"] - report["max_observed_local"],
        slack_global=report["global_bound"] - report["max_observed_global"],
        delta_over_d=max_ratio,
        violations=result.summary.violation_count,
    )
    return row


def cmd_sweep(args) -> int:
    try:
        doc = scen.load_document(args.scenario)
        grid_doc = scen.load_document(args.grid)
    except ScenarioParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    bad = [k for k in grid_doc if k not in _SWEEP_PARAMS]
    if bad:
        print(f"validation: unsupported sweep parameters {bad}", file=sys.stderr)
        return EXIT_VALIDATION
    keys = sorted(grid_doc)
    points = [dict(zip(keys, combo)) for combo in itertools.product(*(grid_doc[k] for k in keys))]
    seeds = list(range(args.seeds))
    jobs = [(pt, seed) for pt in points for seed in seeds]

    rows = []
    if args.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = [pool.submit(_sweep_row, doc, pt, seed) for pt, seed in jobs]
            rows = [f.result() for f in futures]
    else:
        rows = [_sweep_row(doc, pt, seed) for pt, seed in jobs]

    os.makedirs(args.out, exist_ok=True)
    cols = keys + [
        "seed", "status", "cycles", "max_local", "max_global", "local_bound",
        "global_bound", "slack_local", "slack_global", "delta_over_d", "violations",
    ]
    out_path = os.path.join(args.out, "sweep.csv")
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(_csv_cell(row.get(c, "")) for c in cols) + "\n")
    print(f"wrote {len(rows)} rows to {out_path}")
    return EXIT_OK


def _csv_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    s = str(v)
    return '"' + s.replace('"', '""') + '"' if ("," in s or '"' in s) else s


def main(argv=None) -> int:
    _setup_logging()
    parser = argparse.ArgumentParser(prog="gcsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one scenario and write reports")
    p_run.add_argument("--scenario", required=True, help="scenario file or bundled name")
    p_run.add_argument("--seed", type=int, default=None, help="override the master seed")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.set_defaults(func=cmd_run)

    p_check = sub.add_parser("check", help="print static bounds without simulating")
    p_check.add_argument("--scenario", required=True)
    p_check.set_defaults(func=cmd_check)

    p_sweep = sub.add_parser("sweep", help="run a parameter grid and aggregate results")
    p_sweep.add_argument("--scenario", required=True)
    p_sweep.add_argument("--grid", required=True, help="JSON file mapping parameter -> values")
    p_sweep.add_argument("--seeds", type=int, default=1)
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.set_defaults(func=cmd_sweep)

    args = parser.parse_args(argv)
    return args.func(args)


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
