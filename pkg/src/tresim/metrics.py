"""Run metrics derived from the lease ledger and completion records, plus cost models."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Optional, Sequence

from .domain import LeaseLedger, WorkloadKind

HOUR = 3600
SETUP_SECONDS_PER_NODE = 15.743
CSV_VERSION = 1


@dataclass(frozen=True)
class SimReport:
    name: str
    model: str
    completed_jobs: int
    total_jobs: int
    unfinished_jobs: int
    unrunnable_jobs: int
    tasks_per_second: Optional[float]
    makespan: Optional[int]
    billed_node_hours: float
    busy_node_hours: float
    peak_nodes: int
    adjustment_node_count: int
    adjustment_events: int
    rejected_requests: int
    release_cap_binds: int
    duration_hours: float
    overhead_seconds: float
    overhead_per_hour: Optional[float]

    def row(self) -> dict:
        return asdict(self)


def billed_node_hours(grant_intervals: Iterable[tuple], quantum: int = HOUR) -> float:
    """Sum of nodes x lease-quantized duration in node-hours.

    ``grant_intervals`` holds ``(nodes, start, end)`` tuples.
    """
    total = 0
    for nodes, start, end in grant_intervals:
        if end < start:
            raise ValueError(f"interval ends before it starts: {start} > {end}")
        total += nodes * -(-(end - start) // quantum) * quantum
    return total / HOUR


def lease_intervals(events, tre_id: Optional[str] = None) -> list[tuple]:
    """Pair grants with (possibly partial) releases by lease id."""
    granted_at: dict[int, int] = {}
    out = []
    for ev in events:
        if tre_id is not None and ev.tre_id != tre_id:
            continue
        if ev.delta > 0:
            granted_at.setdefault(ev.lease_id, ev.time)
        elif ev.delta < 0:
            out.append((-ev.delta, granted_at[ev.lease_id], ev.time))
    return out


def peak_allocation(events, tre_id: Optional[str] = None) -> int:
    held = peak = 0
    for ev in events:
        if tre_id is None or ev.tre_id == tre_id:
            held += ev.delta
            peak = max(peak, held)
    return peak


def tasks_per_second(completed_tasks: int, makespan: float) -> Optional[float]:
    """Throughput over the workflow makespan; None when nothing completed."""
    if completed_tasks <= 0 or makespan <= 0:
        return None
    return completed_tasks / makespan


def adjustment_overhead(adjustment_node_count: int, per_node_cost: float = SETUP_SECONDS_PER_NODE,
                        hours: Optional[float] = None) -> tuple[float, Optional[float]]:
    """Total setup seconds for the adjusted nodes and the per-hour average."""
    if per_node_cost < 0:
        raise ValueError("per_node_cost must be >= 0")
    total = adjustment_node_count * per_node_cost
    per_hour = total / hours if hours else None
    return total, per_hour


def build_report(*, name: str, model: str, kind: WorkloadKind, total_jobs: int, starts: dict,
                 finished: dict, nodes: dict, unrunnable: int, window: tuple,
                 workflow_submit: Optional[int], ledger: LeaseLedger, quantum: int,
                 rejected: int, cap_binds: int, setup_cost: float) -> SimReport:
    start, end = window
    completed = sum(1 for t in finished.values() if t <= end)
    busy = sum(nodes[j] * (min(f, end) - s) for j, (s, f) in starts.items() if s < end)
    makespan = tps = None
    if kind is WorkloadKind.MTC and finished and workflow_submit is not None:
        makespan = max(finished.values()) - workflow_submit
        tps = tasks_per_second(completed, makespan)
    evs = [e for e in ledger.events if e.tre_id == name]
    adj = sum(abs(e.delta) for e in evs)
    hours = (end - start) / HOUR
    overhead, per_hour = adjustment_overhead(adj, setup_cost, hours)
    return SimReport(
        name=name,
        model=model,
        completed_jobs=completed,
        total_jobs=total_jobs,
        unfinished_jobs=total_jobs - completed - unrunnable,
        unrunnable_jobs=unrunnable,
        tasks_per_second=tps,
        makespan=makespan,
        billed_node_hours=billed_node_hours(lease_intervals(evs), quantum),
        busy_node_hours=busy / HOUR,
        peak_nodes=peak_allocation(evs),
        adjustment_node_count=adj,
        adjustment_events=len(evs),
        rejected_requests=rejected,
        release_cap_binds=cap_binds,
        duration_hours=hours,
        overhead_seconds=overhead,
        overhead_per_hour=per_hour,
    )


def merge_reports(name: str, model: str, reports: Sequence[SimReport], ledger: LeaseLedger,
                  quantum: int, setup_cost: float) -> SimReport:
    """Resource-provider view: totals across TREs, peak from the shared ledger."""
    times = [e.time for e in ledger.events]
    hours = (max(times) - min(times)) / HOUR if times else 0.0
    adj = sum(r.adjustment_node_count for r in reports)
    overhead, per_hour = adjustment_overhead(adj, setup_cost, hours)
    return SimReport(
        name=name,
        model=model,
        completed_jobs=sum(r.completed_jobs for r in reports),
        total_jobs=sum(r.total_jobs for r in reports),
        unfinished_jobs=sum(r.unfinished_jobs for r in reports),
        unrunnable_jobs=sum(r.unrunnable_jobs for r in reports),
        tasks_per_second=None,
        makespan=None,
        billed_node_hours=billed_node_hours(lease_intervals(ledger.events), quantum),
        busy_node_hours=sum(r.busy_node_hours for r in reports),
        peak_nodes=peak_allocation(ledger.events),
        adjustment_node_count=adj,
        adjustment_events=sum(r.adjustment_events for r in reports),
        rejected_requests=sum(r.rejected_requests for r in reports),
        release_cap_binds=sum(r.release_cap_binds for r in reports),
        duration_hours=hours,
        overhead_seconds=overhead,
        overhead_per_hour=per_hour,
    )


def savings_vs_baseline(report: float | SimReport, baseline: float | SimReport) -> float:
    """Percent of baseline node-hours saved (negative when consuming more)."""
    r = report.billed_node_hours if isinstance(report, SimReport) else report
    b = baseline.billed_node_hours if isinstance(baseline, SimReport) else baseline
    if b <= 0:
        raise ValueError("baseline consumption must be > 0")
    return (b - r) / b * 100.0


@dataclass(frozen=True)
class TcoInput:
    capex: float = 0.0
    depreciation_months: int = 96
    maintenance_total: float = 0.0
    energy_space_monthly: float = 0.0
    instance_count: int = 0
    hours_per_month: float = 720.0
    price_per_instance_hour: float = 0.1
    inbound_gb_per_month: float = 0.0
    price_per_gb: float = 0.1

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be non-negative")

    @property
    def monthly_opex(self) -> float:
        return self.maintenance_total / self.depreciation_months + self.energy_space_monthly


def tco_dcs(i: TcoInput) -> float:
    """Monthly cost of an owned cluster: depreciated capital plus operations."""
    if i.depreciation_months < 1:
        raise ValueError("depreciation_months must be >= 1")
    return i.capex / i.depreciation_months + i.monthly_opex


def tco_ssp(i: TcoInput) -> float:
    """Monthly cost of leased instances plus inbound transfer."""
    return i.instance_count * i.hours_per_month * i.price_per_instance_hour + i.inbound_gb_per_month * i.price_per_gb


# report serialization

CSV_COLUMNS = ("scenario", "model", "workload", "B", "R", "completed_jobs", "total_jobs",
               "unfinished_jobs", "unrunnable_jobs", "tasks_per_second", "billed_node_hours",
               "busy_node_hours", "peak_nodes", "adjustment_node_count", "adjustment_events",
               "rejected_requests", "overhead_per_hour", "savings_pct")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.4f}".rstrip("0").rstrip(".") if v == v else ""
    return str(v)


def report_rows(scenario: str, runs: Sequence[tuple]) -> list[dict]:
    """Rows for ``runs`` of ``(SimReport, B, R)``; savings are against the DCS row of the same workload."""
    baseline = {r.name: r.billed_node_hours for r, _, _ in runs if r.model == "dcs"}
    rows = []
    for r, b, ratio in runs:
        base = baseline.get(r.name)
        save = savings_vs_baseline(r, base) if base else None
        rows.append({
            "scenario": scenario, "model": r.model, "workload": r.name, "B": b, "R": ratio,
            "completed_jobs": r.completed_jobs, "total_jobs": r.total_jobs,
            "unfinished_jobs": r.unfinished_jobs, "unrunnable_jobs": r.unrunnable_jobs,
            "tasks_per_second": r.tasks_per_second, "billed_node_hours": r.billed_node_hours,
            "busy_node_hours": r.busy_node_hours, "peak_nodes": r.peak_nodes,
            "adjustment_node_count": r.adjustment_node_count, "adjustment_events": r.adjustment_events,
            "rejected_requests": r.rejected_requests, "overhead_per_hour": r.overhead_per_hour,
            "savings_pct": save,
        })
    return rows


def to_csv(rows: Sequence[dict], columns: Sequence[str] = CSV_COLUMNS) -> str:
    buf = io.StringIO()
    buf.write(f"# tresim report v{CSV_VERSION}: {','.join(columns)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def to_table(rows: Sequence[dict], columns: Sequence[str] = CSV_COLUMNS) -> str:
    cells = [[c for c in columns]] + [[_fmt(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    lines = ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"

