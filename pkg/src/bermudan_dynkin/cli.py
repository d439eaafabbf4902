"""Command line: solve, verify, axioms, gen, inspect.

Exit codes: 0 when everything passed, 2 when a check failed, 1 on errors
(bad input, unreadable files, usage).
"""

from __future__ import annotations

import argparse
import json
import sys
from collections.abc import Sequence
from typing import Any

from .errors import DynkinError
from .evaluation import axiom_check, make_entropic, make_linear, make_multiprior
from .game import solve
from .instance import dumps, gen_instance, instance_to_dict, load_instance, parse_instance
from .reports import result_from_report, solve_report, verify_report
from .strategy import count_theta
from .verify import nash_check, trace_invariants

EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2


class UsageError(Exception):
    pass


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _read_json(path: str) -> Any:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def cmd_solve(args: argparse.Namespace) -> int:
    g = load_instance(args.instance)
    result = solve(g, args.max_iter)
    _write(dumps(solve_report(g, result)), args.out)
    print(
        f"tau1* = {result.tau1_star.sorted_nodes()}  tau2* = {result.tau2_star.sorted_nodes()}  "
        f"J1 = {result.J1:.12g}  J2 = {result.J2:.12g}  rounds = {result.iterations}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    report = None
    if args.equilibrium is not None:
        report = _read_json(args.equilibrium)
    if args.instance is not None:
        g = load_instance(args.instance)
    elif report is not None and "instance" in report:
        g = parse_instance(report["instance"])
    else:
        raise UsageError("verify needs --instance or a report with an embedded instance")
    result = solve(g) if report is None else result_from_report(g, report)
    nash = nash_check(g, result.tau1_star, result.tau2_star)
    trace = trace_invariants(g, result, seed=args.seed) if result.trace else None
    out = verify_report(g, result, nash, trace)
    if args.out is not None:
        _write(dumps(out), args.out)
    print(f"nash: {'pass' if nash.passed else 'FAIL'}", file=sys.stderr)
    if trace is not None:
        for name, check in trace.checks.items():
            status = "pass" if check.passed else "FAIL"
            print(f"  {name}: {status} ({check.evaluated} evaluated)", file=sys.stderr)
    return EXIT_OK if out["passed"] else EXIT_FAILED


def cmd_axioms(args: argparse.Namespace) -> int:
    g = load_instance(args.instance)
    if args.operator is None:
        ops = [g.rho1, g.rho2]
    elif args.operator == "linear":
        ops = [make_linear(g.tree)]
    elif args.operator == "entropic":
        if args.gamma is None:
            raise UsageError("--operator entropic needs --gamma")
        ops = [make_entropic(g.tree, args.gamma)]
    else:
        ops = [make_multiprior(g.tree, None, args.direction)]
    reports = [axiom_check(op, g.schedule, args.trials, args.seed) for op in ops]
    _write(dumps({"kind": "axioms", "reports": [r.to_dict() for r in reports]}), args.out)
    for r in reports:
        for name, res in r.results.items():
            status = "pass" if res.passed else "FAIL"
            print(f"{r.operator} {name}: {status} ({res.failures}/{res.trials})", file=sys.stderr)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAILED


def cmd_gen(args: argparse.Namespace) -> int:
    kinds = [k for k in args.operators.split(",") if k]
    g = gen_instance(args.seed, args.depth, args.branching, kinds)
    _write(dumps(instance_to_dict(g)), args.out)
    return EXIT_OK


def cmd_inspect(args: argparse.Namespace) -> int:
    g = load_instance(args.instance)
    tree = g.tree
    lines = [
        f"nodes: {tree.n_nodes}  leaves: {tree.n_leaves}  horizon: {tree.horizon}",
        f"dates: {list(tree.dates)}",
        f"exercise dates: K = {g.schedule.K}"
        + (" (every stage)" if g.schedule.is_all_stages() else ""),
        f"agent 1: {g.rho1.label()}",
        f"agent 2: {g.rho2.label()}",
        f"strategies per agent: {count_theta(g.schedule)}",
    ]
    for s in range(tree.horizon + 1):
        for nid in tree.nodes_at(s):
            kids = ", ".join(f"{c}:{p:g}" for c, p in tree.children_of(nid))
            pay = "  ".join(f"{k}={getattr(g, k)[nid]:g}" for k in ("X1", "Y1", "X2", "Y2"))
            lines.append(f"  [{s}] {nid:>4}  {pay}" + (f"  -> {kids}" if kids else ""))
    print("\n".join(lines))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bermudan-dynkin",
        description="Nash equilibria of Bermudan Dynkin games with non-linear evaluations.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run the best-response construction")
    s.add_argument("--instance", required=True)
    s.add_argument("--out", help="report file (default: stdout)")
    s.add_argument("--max-iter", type=int, default=None, help="bound on rounds")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="certify an equilibrium and its trace")
    v.add_argument("--instance", help="instance file (default: the one embedded in the report)")
    v.add_argument("--equilibrium", help="solve report to check (default: solve afresh)")
    v.add_argument("--out", help="verify report file")
    v.add_argument("--seed", type=int, default=0, help="seed for sampled deviation checks")
    v.set_defaults(func=cmd_verify)

    a = sub.add_parser("axioms", help="randomised operator property checks")
    a.add_argument("--instance", required=True)
    a.add_argument("--operator", choices=("linear", "entropic", "multiprior"))
    a.add_argument("--gamma", type=float)
    a.add_argument("--direction", choices=("inf", "sup"), default="inf")
    a.add_argument("--trials", type=int, default=500)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", help="report file (default: stdout)")
    a.set_defaults(func=cmd_axioms)

    gp = sub.add_parser("gen", help="generate a random instance")
    gp.add_argument("--seed", type=int, required=True)
    gp.add_argument("--depth", type=int, required=True)
    gp.add_argument("--branching", type=int, required=True)
    gp.add_argument(
        "--operators",
        default="linear",
        help="one operator for both agents or two comma-separated, e.g. entropic:1,multiprior",
    )
    gp.add_argument("--out", help="instance file (default: stdout)")
    gp.set_defaults(func=cmd_gen)

    i = sub.add_parser("inspect", help="summarise an instance")
    i.add_argument("--instance", required=True)
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    try:
        return args.func(args)
    except (DynkinError, UsageError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
