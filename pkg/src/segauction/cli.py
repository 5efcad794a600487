"""Command line interface.

Subcommands:
  run     run a scenario (or the packaged benchmark table) and print metrics
  probe   evaluate closed forms or an incentive curve for a scenario
  verify  run the Monte Carlo verification suites
  report  re-render a saved report.json as CSV

Exit codes: 0 success, 1 failed verification, 2 invalid scenario,
3 provider failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import analytic, sim
from .core import (
    Mechanism,
    ProviderError,
    ScenarioValidationError,
    load_scenario,
    parse_mechanism,
    scenario_to_dict,
)
from .metrics import CSV_HEADER

TABLE_MECHANISMS = "table"


def _float(x: float) -> str:
    return "%.6g" % x


def _load(path_or_name: str):
    p = Path(path_or_name)
    if p.suffix == ".json" or p.exists():
        return load_scenario(p)
    return sim.builtin_scenario(path_or_name)


def _csv_rows(report) -> list[str]:
    lines = [",".join(CSV_HEADER)]
    for row in report.rows():
        lines.append(",".join(
            _float(x) if isinstance(x, float) else str(x) for x in row
        ))
    return lines


def _report_payload(results) -> dict:
    payload = {"reports": []}
    for res in results:
        rep = res.report
        payload["reports"].append({
            "mechanism": rep.mechanism,
            "trials": rep.trials,
            "seed": rep.seed,
            "metrics": {
                name: {
                    "mean": mv.mean,
                    "stderr": mv.stderr,
                    "normalizer": mv.normalizer,
                }
                for name, mv in rep.metrics.items()
            },
            "analytic": rep.analytic,
            "counters": {
                "relevance_calls": rep.counters.relevance_calls,
                "generator_calls": rep.counters.generator_calls,
            },
        })
    return payload


def cmd_run(args: argparse.Namespace) -> int:
    scenario = _load(args.scenario)
    if args.mechanism == TABLE_MECHANISMS:
        mechanisms = list(sim.BENCHMARK_MECHANISMS)
    elif args.mechanism:
        mechanisms = [parse_mechanism(m) for m in args.mechanism.split(",")]
    else:
        mechanisms = [scenario.mechanism]

    results = []
    for mech in mechanisms:
        results.append(sim.run_experiment(
            scenario,
            mechanism=mech,
            trials=args.trials,
            seed=args.seed,
            workers=args.workers,
            collect_transcript=args.out is not None,
        ))

    lines = [",".join(CSV_HEADER)]
    for res in results:
        lines.extend(_csv_rows(res.report)[1:])
    print("\n".join(lines))

    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        payload = _report_payload(results)
        payload["scenario"] = scenario_to_dict(scenario)
        (out / "report.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        (out / "report.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        transcript = "\n\n".join(
            f"== {res.report.mechanism} ==\n{res.transcript}"
            for res in results if res.transcript
        )
        (out / "transcript.txt").write_text(transcript + "\n", encoding="utf-8")
    return 0


def cmd_probe(args: argparse.Namespace) -> int:
    scenario = _load(args.scenario)
    q = np.asarray(scenario.relevance.q, dtype=np.float64)
    b = scenario.bids()
    v = scenario.values()
    what = args.what
    if what == "softmax":
        x = analytic.softmax_allocation(q, b)
        for ad, xi in zip(scenario.ads, x):
            print(f"{ad.id},{xi:.6f}")
    elif what == "myerson":
        for i, ad in enumerate(scenario.ads):
            p = analytic.myerson_expected_payment(q, b, i)
            print(f"{ad.id},{p:.6f}")
    elif what == "setwin":
        members = tuple(int(x) for x in args.members.split(","))
        p = analytic.set_win_probability(q, b, members, args.k)
        print(f"{p:.6f}")
    elif what == "lsw":
        x = analytic.lsw_maximizer(q, v)
        val = analytic.lsw(x, q, v)
        for ad, xi in zip(scenario.ads, x):
            print(f"{ad.id},{xi:.6f}")
        print(f"objective,{val:.6f}")
    elif what == "dsic":
        i = args.ad_index
        rep = sim.dsic_probe(
            q, b, float(v[i]), i, scenario.mechanism,
            k=scenario.slots, draws=args.draws, seed=scenario.seed,
        )
        print(rep.line())
        return 0 if rep.passed else 1
    else:  # pragma: no cover - argparse restricts choices
        raise AssertionError(what)
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    names = args.suite.split(",") if args.suite else None
    reports = sim.run_suites(
        names,
        seed=args.seed,
        draws=args.draws,
        instances=args.instances,
    )
    payload = {
        "seed": args.seed,
        "passed": all(r.passed for r in reports),
        "reports": [
            {
                "name": r.name,
                "analytic": r.analytic,
                "empirical": r.empirical,
                "stderr": r.stderr,
                "passed": r.passed,
                "detail": r.detail,
            }
            for r in reports
        ],
    }
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for r in reports:
            print(r.line())
        n_pass = sum(r.passed for r in reports)
        print(f"{n_pass}/{len(reports)} checks passed")
    return 0 if payload["passed"] else 1


def cmd_report(args: argparse.Namespace) -> int:
    payload = json.loads(Path(args.infile).read_text(encoding="utf-8"))
    lines = [",".join(CSV_HEADER)]
    for rep in payload["reports"]:
        for metric in ("revenue", "social_welfare", "relevance",
                       "min_social_welfare"):
            mv = rep["metrics"][metric]
            lines.append(",".join([
                rep["mechanism"], metric,
                _float(mv["mean"]), _float(mv["stderr"]),
                _float(mv["normalizer"]),
                str(rep["trials"]), str(rep["seed"]),
            ]))
    print("\n".join(lines))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segauction",
        description="Segment auction experiments and verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario and print metric rows")
    p_run.add_argument("--scenario", required=True,
                       help="path to a scenario JSON, or a packaged name "
                            "(scenario1, scenario2, scenario3)")
    p_run.add_argument("--mechanism", default=None,
                       help="mechanism name, comma list, or 'table' for the "
                            "benchmark four")
    p_run.add_argument("--trials", type=int, default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument("--out", default=None,
                       help="directory for report.json / report.csv / "
                            "transcript.txt")
    p_run.set_defaults(fn=cmd_run)

    p_probe = sub.add_parser("probe", help="evaluate closed forms")
    p_probe.add_argument("what", choices=("softmax", "myerson", "setwin",
                                          "lsw", "dsic"))
    p_probe.add_argument("--scenario", required=True)
    p_probe.add_argument("--members", default="0",
                         help="comma-separated ad indices (setwin)")
    p_probe.add_argument("--k", type=int, default=None,
                         help="top-k size for setwin")
    p_probe.add_argument("--ad-index", type=int, default=0,
                         help="probed ad (dsic)")
    p_probe.add_argument("--draws", type=int, default=20_000)
    p_probe.set_defaults(fn=cmd_probe)

    p_verify = sub.add_parser("verify", help="run Monte Carlo verification")
    p_verify.add_argument("--suite", default=None,
                          help="comma list of suites (default: all); "
                               "available: " + ", ".join(sim.SUITES))
    p_verify.add_argument("--seed", type=int, default=sim.DEFAULT_VERIFY_SEED)
    p_verify.add_argument("--draws", type=int, default=None)
    p_verify.add_argument("--instances", type=int, default=None)
    p_verify.add_argument("--json", action="store_true",
                          help="machine-readable output")
    p_verify.set_defaults(fn=cmd_verify)

    p_report = sub.add_parser("report", help="render a saved report.json")
    p_report.add_argument("--in", dest="infile", required=True)
    p_report.set_defaults(fn=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ScenarioValidationError as exc:
        for violation in exc.violations:
            print(f"invalid scenario: {violation.code}: {violation.message}",
                  file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ProviderError as exc:
        print(f"provider failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
