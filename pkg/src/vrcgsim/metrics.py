"""Metric aggregation, the mobility experiment loop and result emission.

run_experiment re-solves the pipeline once per mobility step and records
one row of metrics per requested method. Rows only carry the quantities
a method actually produces: association solvers report QoE and grant
usage, placement solvers report money, schedulers report latency and PRB
usage. Solve times are measured around the solver call alone and are
zeroed during emission by default so equal runs emit equal bytes.
"""
from __future__ import annotations

import dataclasses
import json
import math
import statistics
import time
from dataclasses import dataclass

from . import oracle as oracle_mod
from .scenario import Scenario, step_positions
from .stage1 import (
    Stage1Solution,
    Violation,
    baseline_dual_connectivity,
    baseline_single_association,
    grant_pool,
    qoe_stage1,
    verify_stage1,
    vexa,
)
from .stage2 import (
    Stage2Solution,
    baseline_single_path,
    baseline_unconstrained,
    gepar,
    total_cost,
    verify_stage2,
)
from .stage3 import (
    Stage3Solution,
    amps,
    baseline_proportional_fair,
    baseline_round_robin,
    mtp_latency,
    mtpsched,
    qoe_stage3,
    verify_stage3,
)

STAGE1_METHODS = ("vexa", "sa", "dc", "oracle_stage1")
STAGE2_METHODS = ("gepar", "single_path", "unconstrained", "oracle_stage2")
STAGE3_METHODS = ("amps", "mtpsched", "rr", "pf", "oracle_stage3")
METHODS = STAGE1_METHODS + STAGE2_METHODS + STAGE3_METHODS


@dataclass(frozen=True)
class MethodMetrics:
    total_qoe: float | None = None
    avg_qoe: float | None = None
    jain_index: float | None = None
    fixed_cost: float | None = None
    variable_cost: float | None = None
    migration_cost: float | None = None
    total_cost: float | None = None
    avg_mtp_s: float | None = None
    prb_usage_fraction: float | None = None
    solve_time_s: float = 0.0
    unadmitted_count: int | None = None


@dataclass(frozen=True)
class MetricsReport:
    timestep: int
    methods: dict[str, MethodMetrics]


class ExperimentAbort(RuntimeError):
    """A solver produced output its own verifier rejects."""

    def __init__(self, timestep: int, method: str, violations: list[Violation],
                 reports: list[MetricsReport]):
        self.timestep = timestep
        self.method = method
        self.violations = violations
        self.reports = reports
        first = violations[0]
        super().__init__(
            f"{method} failed verification at timestep {timestep} "
            f"({len(violations)} violations; first: {first.kind} "
            f"{first.subject}: {first.detail})"
        )


def jain_index(values) -> float:
    """Raj Jain's fairness index, 1 for perfect equality.

    An all-zero population is treated as perfectly fair: nobody has more
    than anyone else.
    """
    vals = list(values)
    if not vals:
        return 1.0
    if any(v < 0 for v in vals):
        raise ValueError("fairness is defined over non-negative values")
    square_sum = sum(v * v for v in vals)
    if square_sum == 0:
        return 1.0
    total = sum(vals)
    return total * total / (len(vals) * square_sum)


# ---------------------------------------------------------------------------
# Per-stage metric extraction


def _pool_size(sc: Scenario) -> int:
    return sum(grant_pool(b, sc.radio) for b in sc.base_stations)


def _stage1_metrics(sc: Scenario, sol: Stage1Solution, dt: float) -> MethodMetrics:
    per_user = [qoe_stage1(sc, sol, uid) for uid in sorted(sol.admitted)]
    total = sum(per_user)
    return MethodMetrics(
        total_qoe=total,
        avg_qoe=total / len(sc.users) if sc.users else 0.0,
        jain_index=jain_index(per_user),
        prb_usage_fraction=sum(sol.prbs.values()) / _pool_size(sc),
        solve_time_s=dt,
        unadmitted_count=len(sc.users) - len(sol.admitted),
    )


def _stage2_metrics(
    sc: Scenario,
    stage1: Stage1Solution,
    sol: Stage2Solution,
    prev: dict[str, str] | None,
    dt: float,
) -> MethodMetrics:
    cost = total_cost(sol, sc, stage1, prev_placement=prev)
    return MethodMetrics(
        fixed_cost=cost.fixed,
        variable_cost=cost.variable,
        migration_cost=cost.migration,
        total_cost=cost.total,
        solve_time_s=dt,
        unadmitted_count=len(sol.unplaced),
    )


def _scene_qoe_metrics(
    sc: Scenario, stage1: Stage1Solution, resolutions, dt: float
) -> dict:
    per_user = [
        qoe_stage3(sc, stage1, resolutions, uid) for uid in sorted(stage1.admitted)
    ]
    total = sum(per_user)
    return {
        "total_qoe": total,
        "avg_qoe": total / len(sc.users) if sc.users else 0.0,
        "jain_index": jain_index(per_user),
        "solve_time_s": dt,
    }


def _schedule_usage(sc: Scenario, sol: Stage3Solution) -> float:
    assigned = sum(n for entries in sol.schedule.values() for _, n in entries)
    return assigned / _pool_size(sc)


def _mean_mtp(sc: Scenario, stage1: Stage1Solution, sol: Stage3Solution) -> float | None:
    report = mtp_latency(sol, sc, stage1)
    if not report.average_s:
        return None
    return statistics.mean(report.average_s.values())


# ---------------------------------------------------------------------------
# The experiment loop


def _solve_row(
    sc: Scenario,
    method: str,
    stage1: Stage1Solution,
    prev: dict[str, str] | None,
) -> tuple[MethodMetrics, object, list[Violation]]:
    """One method on one snapshot: metrics, raw solution, violations."""
    t0 = time.perf_counter()
    if method in STAGE1_METHODS:
        if method == "vexa":
            sol = stage1  # already solved for the pipeline
        elif method == "sa":
            sol = baseline_single_association(sc)
        elif method == "dc":
            sol = baseline_dual_connectivity(sc)
        else:
            sol, _ = oracle_mod.exact_stage1(sc)
        dt = time.perf_counter() - t0
        return _stage1_metrics(sc, sol, dt), sol, verify_stage1(sol, sc)

    if method in STAGE2_METHODS:
        if method == "gepar":
            sol = gepar(sc, stage1, prev_placement=prev)
        elif method == "single_path":
            sol = baseline_single_path(sc, stage1, prev_placement=prev)
        elif method == "unconstrained":
            sol = baseline_unconstrained(sc, stage1, prev_placement=prev)
        else:
            sol, _ = oracle_mod.exact_stage2(sc, stage1)
        dt = time.perf_counter() - t0
        violations = verify_stage2(sol, sc, stage1)
        if method == "unconstrained":
            # this baseline prices violations instead of forbidding them;
            # only structural problems count against it
            violations = [v for v in violations if v.kind in ("placement", "routing")]
        return _stage2_metrics(sc, stage1, sol, prev, dt), sol, violations

    if method == "amps":
        sol = amps(sc, stage1)
        dt = time.perf_counter() - t0
        base = _scene_qoe_metrics(sc, stage1, sol.object_resolution, dt)
        row = MethodMetrics(
            **base,
            avg_mtp_s=_mean_mtp(sc, stage1, sol),
            prb_usage_fraction=_schedule_usage(sc, sol),
        )
        return row, sol, verify_stage3(sol, sc, stage1)
    if method == "mtpsched":
        sol = mtpsched(sc, stage1)
        dt = time.perf_counter() - t0
        row = MethodMetrics(
            avg_mtp_s=_mean_mtp(sc, stage1, sol),
            prb_usage_fraction=_schedule_usage(sc, sol),
            solve_time_s=dt,
        )
        return row, sol, verify_stage3(sol, sc, stage1)
    if method in ("rr", "pf"):
        solver = baseline_round_robin if method == "rr" else baseline_proportional_fair
        sol = solver(sc, stage1)
        dt = time.perf_counter() - t0
        row = MethodMetrics(
            avg_mtp_s=_mean_mtp(sc, stage1, sol),
            prb_usage_fraction=_schedule_usage(sc, sol),
            solve_time_s=dt,
        )
        # cyclic schedulers ignore grant totals and groups by definition,
        # so the stage-3 verifier does not apply to them
        return row, sol, []
    if method == "oracle_stage3":
        resolutions, _ = oracle_mod.exact_stage3(sc, stage1)
        dt = time.perf_counter() - t0
        return (
            MethodMetrics(**_scene_qoe_metrics(sc, stage1, resolutions, dt)),
            resolutions,
            [],
        )
    raise ValueError(f"unknown method {method!r}")


def run_experiment(
    sc: Scenario,
    methods,
    timesteps: int = 1,
    collect_solutions: bool = False,
) -> list[MetricsReport] | tuple[list[MetricsReport], dict]:
    """Solve the requested methods over a seeded mobility trace.

    Users move one waypoint step between timesteps; placement methods
    carry their own previous placement forward, so their migration costs
    chain across the run. Any verifier complaint aborts with
    ExperimentAbort carrying the reports gathered so far. With
    collect_solutions the last timestep's solutions come back too,
    keyed by method, with the shared association under "stage1".
    """
    methods = list(methods)
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(
            f"unknown methods {unknown}; choose from {', '.join(METHODS)}"
        )
    if timesteps < 1:
        raise ValueError("timesteps must be at least 1")

    reports: list[MetricsReport] = []
    prev: dict[str, dict[str, str] | None] = {m: None for m in STAGE2_METHODS}
    world = sc
    solutions: dict[str, object] = {}
    needs_stage1 = any(m != "oracle_stage1" for m in methods)
    for t in range(timesteps):
        if t > 0:
            world = step_positions(world, t)
        t0 = time.perf_counter()
        stage1 = vexa(world) if needs_stage1 else None
        vexa_dt = time.perf_counter() - t0
        rows: dict[str, MethodMetrics] = {}
        solutions = {"stage1": stage1} if needs_stage1 else {}
        for m in methods:
            row, sol, violations = _solve_row(world, m, stage1, prev.get(m))
            if m == "vexa":
                row = dataclasses.replace(row, solve_time_s=vexa_dt)
            if violations:
                raise ExperimentAbort(t, m, violations, reports)
            if m in STAGE2_METHODS:
                prev[m] = dict(sol.placement)
            rows[m] = row
            solutions[m] = sol
        reports.append(MetricsReport(timestep=t, methods=rows))
    if collect_solutions:
        return reports, solutions
    return reports


# ---------------------------------------------------------------------------
# Emission

CSV_COLUMNS = (
    "timestep",
    "method",
    "total_qoe",
    "avg_qoe",
    "jain_index",
    "fixed_cost",
    "variable_cost",
    "migration_cost",
    "total_cost",
    "avg_mtp_s",
    "prb_usage_fraction",
    "solve_time_s",
    "unadmitted_count",
)


def _fmt(value, timing: bool, column: str) -> str:
    if column == "solve_time_s":
        value = value if timing else 0.0
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            raise ValueError(f"non-finite metric in column {column}")
        return f"{value:.9g}"
    return str(value)


def emit(reports, fmt: str = "csv", include_timing: bool = False) -> str:
    """Render reports to a csv or json document (newline-terminated).

    Solve times are written as zero unless include_timing is set, keeping
    repeated runs byte-identical.
    """
    if fmt == "csv":
        lines = [",".join(CSV_COLUMNS)]
        for report in reports:
            for method, row in report.methods.items():
                cells = [str(report.timestep), method]
                for col in CSV_COLUMNS[2:]:
                    cells.append(_fmt(getattr(row, col), include_timing, col))
                lines.append(",".join(cells))
        return "\n".join(lines) + "\n"
    if fmt == "json":
        doc = {
            "reports": [
                {
                    "timestep": report.timestep,
                    "methods": {
                        method: {
                            col: (
                                (row.solve_time_s if include_timing else 0.0)
                                if col == "solve_time_s"
                                else getattr(row, col)
                            )
                            for col in CSV_COLUMNS[2:]
                        }
                        for method, row in report.methods.items()
                    },
                }
                for report in reports
            ]
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    raise ValueError(f"unknown format {fmt!r}; use csv or json")


# ---------------------------------------------------------------------------
# Solution documents (for the verify subcommand)


def solutions_to_doc(sc: Scenario, solutions: dict) -> dict:
    """Serialize a run's final solutions into one JSON-friendly document."""
    doc: dict = {"seed": sc.seed, "solutions": {}}
    for name, sol in solutions.items():
        if isinstance(sol, Stage1Solution):
            doc["solutions"][name] = {
                "stage": 1,
                "assoc": {u: list(bs) for u, bs in sorted(sol.assoc.items())},
                "prbs": [[u, b, y] for (u, b), y in sorted(sol.prbs.items())],
                "resolution": {
                    u: list(r) for u, r in sorted(sol.resolution.items())
                },
                "frame_rate": dict(sorted(sol.frame_rate.items())),
                "share": [[u, b, s] for (u, b), s in sorted(sol.share.items())],
            }
        elif isinstance(sol, Stage2Solution):
            doc["solutions"][name] = {
                "stage": 2,
                "placement": dict(sorted(sol.placement.items())),
                "selected_paths": {
                    u: list(ps) for u, ps in sorted(sol.selected_paths.items())
                },
                "flow": [[u, p, q] for (u, p), q in sorted(sol.flow.items())],
                "unplaced": sorted(sol.unplaced),
            }
        elif isinstance(sol, Stage3Solution):
            doc["solutions"][name] = {
                "stage": 3,
                "object_resolution": [
                    [u, o, r[0], r[1]]
                    for (u, o), r in sorted(sol.object_resolution.items())
                ],
                "schedule": [
                    [b, tti, u, n]
                    for (b, tti), entries in sorted(sol.schedule.items())
                    for u, n in entries
                ],
                "tti_groups": {
                    u: list(starts) for u, starts in sorted(sol.tti_groups.items())
                },
            }
    return doc


def doc_to_solutions(doc: dict) -> dict:
    """Rebuild solver outputs from a solutions document."""
    out: dict = {}
    for name, entry in doc["solutions"].items():
        stage = entry["stage"]
        if stage == 1:
            assoc = {u: tuple(bs) for u, bs in entry["assoc"].items()}
            out[name] = Stage1Solution(
                assoc=assoc,
                prbs={(u, b): int(y) for u, b, y in entry["prbs"]},
                resolution={
                    u: tuple(r) for u, r in entry["resolution"].items()
                },
                frame_rate={u: int(f) for u, f in entry["frame_rate"].items()},
                share={(u, b): float(s) for u, b, s in entry["share"]},
                admitted=frozenset(assoc),
            )
        elif stage == 2:
            placement = dict(entry["placement"])
            out[name] = Stage2Solution(
                placement=placement,
                selected_paths={
                    u: tuple(ps) for u, ps in entry["selected_paths"].items()
                },
                flow={(u, p): float(q) for u, p, q in entry["flow"]},
                active_cns=frozenset(placement.values()),
                unplaced=frozenset(entry["unplaced"]),
            )
        elif stage == 3:
            schedule: dict[tuple[str, int], list] = {}
            for b, tti, u, n in entry["schedule"]:
                schedule.setdefault((b, int(tti)), []).append((u, int(n)))
            out[name] = Stage3Solution(
                object_resolution={
                    (u, o): (int(w), int(h))
                    for u, o, w, h in entry["object_resolution"]
                },
                schedule={k: tuple(v) for k, v in schedule.items()},
                tti_groups={
                    u: tuple(starts) for u, starts in entry["tti_groups"].items()
                },
            )
        else:
            raise ValueError(f"solution {name!r} has unknown stage {stage!r}")
    return out


def verify_document(sc: Scenario, doc: dict) -> dict[str, list[Violation]]:
    """Run each serialized solution through its stage verifier.

    The same exemptions apply as during a run: cyclic schedulers are not
    held to grant totals, and the unconstrained baseline only answers for
    structural placement and routing problems.
    """
    sols = doc_to_solutions(doc)
    stage1 = sols.get("stage1")
    findings: dict[str, list[Violation]] = {}
    for name, sol in sols.items():
        if name in ("rr", "pf"):
            findings[name] = []
        elif isinstance(sol, Stage1Solution):
            findings[name] = verify_stage1(sol, sc)
        elif isinstance(sol, Stage2Solution):
            if stage1 is None:
                raise ValueError("stage-2 solutions need the stage1 entry")
            violations = verify_stage2(sol, sc, stage1)
            if name == "unconstrained":
                violations = [
                    v for v in violations if v.kind in ("placement", "routing")
                ]
            findings[name] = violations
        else:
            if stage1 is None:
                raise ValueError("stage-3 solutions need the stage1 entry")
            findings[name] = verify_stage3(sol, sc, stage1)
    return findings
