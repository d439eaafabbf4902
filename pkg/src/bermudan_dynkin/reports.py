"""Machine-readable solve and verify reports.

Reports embed the instance they were computed from, so a report alone is
enough to re-run verification. No timestamps or environment data are
recorded; equal inputs give byte-identical files.
"""

from __future__ import annotations

from typing import Any

from .errors import InstanceParseError
from .game import EquilibriumResult, GameInstance, IterationRecord
from .instance import instance_to_dict
from .strategy import BermudanStoppingTime
from .verify import NashReport, TraceReport


def _nodes(tau: BermudanStoppingTime | None) -> list[int] | None:
    return None if tau is None else tau.sorted_nodes()


def solve_report(g: GameInstance, result: EquilibriumResult) -> dict[str, Any]:
    return {
        "kind": "solve",
        "instance": instance_to_dict(g),
        "equilibrium": {
            "tau1_star": result.tau1_star.sorted_nodes(),
            "tau2_star": result.tau2_star.sorted_nodes(),
            "J1": result.J1,
            "J2": result.J2,
            "converged": result.converged,
            "iterations": result.iterations,
            "best_response_steps": result.best_response_steps,
        },
        "trace": [
            {
                "n": r.n,
                "agent": r.agent,
                "tau": r.tau.sorted_nodes(),
                "tau_tilde": _nodes(r.tau_tilde),
                "value0": r.value0,
            }
            for r in result.trace
        ],
    }


def result_from_report(g: GameInstance, report: dict[str, Any]) -> EquilibriumResult:
    """Rebuild an :class:`EquilibriumResult` from a solve report on instance ``g``."""
    try:
        eq = report["equilibrium"]
        trace = [
            IterationRecord(
                int(r["n"]),
                BermudanStoppingTime(g.schedule, r["tau"]),
                None if r.get("tau_tilde") is None else BermudanStoppingTime(g.schedule, r["tau_tilde"]),
                None if r.get("value0") is None else float(r["value0"]),
            )
            for r in report.get("trace", [])
        ]
        return EquilibriumResult(
            BermudanStoppingTime(g.schedule, eq["tau1_star"]),
            BermudanStoppingTime(g.schedule, eq["tau2_star"]),
            float(eq["J1"]),
            float(eq["J2"]),
            trace,
            int(eq.get("iterations", 0)),
            bool(eq.get("converged", True)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceParseError(f"malformed solve report: {exc!r}") from None


def verify_report(
    g: GameInstance,
    result: EquilibriumResult,
    nash: NashReport,
    trace: TraceReport | None,
) -> dict[str, Any]:
    passed = nash.passed and (trace is None or trace.passed)
    return {
        "kind": "verify",
        "instance": instance_to_dict(g),
        "equilibrium": {
            "tau1_star": result.tau1_star.sorted_nodes(),
            "tau2_star": result.tau2_star.sorted_nodes(),
            "J1": result.J1,
            "J2": result.J2,
        },
        "nash": nash.to_dict(),
        "trace_invariants": None if trace is None else trace.to_dict(),
        "passed": passed,
    }
