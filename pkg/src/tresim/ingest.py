"""Readers and writers for SWF batch traces and the line-oriented DAG format."""

from __future__ import annotations

import io
import math
import re
from collections import defaultdict, deque
from dataclasses import dataclass, replace
from decimal import Decimal
from fractions import Fraction
from typing import Iterable, TextIO, Union

from .domain import Job, TraceSource, Workload, WorkloadKind, validate_workload

SWF_FIELDS = 18
TWO_WEEKS = 14 * 24 * 3600

_HEADER_SCALE = re.compile(r"^;\s*(MaxProcs|MaxNodes)\s*:\s*(\d+)", re.IGNORECASE)


class IngestError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class TraceSlice:
    start_offset: int
    duration: int = TWO_WEEKS

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("slice duration must be > 0")


def _lines(text: Union[str, TextIO, Iterable[str]]):
    if isinstance(text, str):
        text = io.StringIO(text)
    return enumerate(text, start=1)


def _num(tok: str, lineno: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise IngestError(f"non-numeric field {tok!r}", lineno) from None


def parse_swf(text, name: str = "swf", machine_scale: int | None = None) -> Workload:
    """Parse a Standard Workload Format trace.

    Processor demand comes from the requested-processors field, falling back
    to allocated processors when the request is recorded as -1. Jobs without a
    positive runtime or processor count are skipped and counted.
    """
    jobs = []
    skipped = 0
    header_scale = {}
    for lineno, raw in _lines(text):
        line = raw.strip()
        if not line:
            continue
        if line.startswith(";"):
            m = _HEADER_SCALE.match(line)
            if m:
                header_scale[m.group(1).lower()] = int(m.group(2))
            continue
        toks = line.split()
        if len(toks) != SWF_FIELDS:
            raise IngestError(f"expected {SWF_FIELDS} fields, got {len(toks)}", lineno)
        vals = [_num(t, lineno) for t in toks]
        submit, runtime = vals[1], vals[3]
        procs = vals[7] if vals[7] != -1 else vals[4]
        if runtime < 1 or procs < 1 or submit < 0:
            skipped += 1
            continue
        jobs.append((int(submit), int(runtime), int(procs), int(vals[0])))
    jobs.sort(key=lambda t: (t[0], t[3]))
    out = tuple(
        Job(id=i, submit_time=s, runtime=r, nodes=p, name=str(orig))
        for i, (s, r, p, orig) in enumerate(jobs)
    )
    if machine_scale is None:
        machine_scale = header_scale.get("maxnodes") or header_scale.get("maxprocs")
    if machine_scale is None:
        machine_scale = max((j.nodes for j in out), default=1)
    return Workload(WorkloadKind.HTC, out, TraceSource(name, machine_scale), skipped_lines=skipped)


def write_swf(w: Workload, out: TextIO | None = None) -> str:
    """Serialize the simulator-relevant fields back to SWF (debug writer)."""
    buf = out if out is not None else io.StringIO()
    buf.write(f"; Generated trace: {w.source.name}\n")
    buf.write(f"; MaxNodes: {w.source.machine_scale}\n")
    buf.write(f"; MaxProcs: {w.source.machine_scale}\n")
    for j in w.jobs:
        number = j.name if j.name is not None and j.name.lstrip("-").isdigit() else j.id + 1
        fields = [number, j.submit_time, -1, j.runtime, j.nodes, -1, -1, j.nodes,
                  -1, -1, 1, -1, -1, -1, -1, -1, -1, -1]
        buf.write(" ".join(str(f) for f in fields) + "\n")
    return buf.getvalue() if out is None else ""


def parse_dag(text, name: str = "dag", workflow_id: str | None = None) -> Workload:
    """Parse the ``TASK``/``EDGE`` workflow format into an MTC workload.

    Runtimes are decimal seconds, truncated to whole seconds (minimum 1 s).
    Job ids are assigned in topological-level order, declaration order within
    a level, which is also the FCFS order used by the scheduler.
    """
    wid = workflow_id or name
    tasks: dict[str, tuple] = {}
    parents: dict[str, list] = defaultdict(list)
    for lineno, raw in _lines(text):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        tag = toks[0].upper()
        if tag == "TASK":
            if len(toks) != 4:
                raise IngestError("TASK needs <id> <runtime> <nodes>", lineno)
            tid = toks[1]
            if tid in tasks:
                raise IngestError(f"duplicate task {tid}", lineno)
            try:
                runtime = Decimal(toks[2])
                nodes = int(toks[3])
            except Exception:
                raise IngestError(f"bad TASK fields {toks[2:]}", lineno) from None
            if runtime <= 0 or nodes < 1:
                raise IngestError(f"task {tid} needs runtime > 0 and nodes >= 1", lineno)
            tasks[tid] = (len(tasks), max(1, int(runtime)), nodes)
        elif tag == "EDGE":
            if len(toks) != 3:
                raise IngestError("EDGE needs <parent> <child>", lineno)
            p, c = toks[1], toks[2]
            for t in (p, c):
                if t not in tasks:
                    raise IngestError(f"undeclared task {t}", lineno)
            if p not in parents[c]:
                parents[c].append(p)
        else:
            raise IngestError(f"unknown record {toks[0]!r}", lineno)

    level = _levels(tasks, parents)
    order = sorted(tasks, key=lambda t: (level.get(t, math.inf), tasks[t][0]))
    dense = {t: i for i, t in enumerate(order)}
    jobs = tuple(
        Job(
            id=dense[t],
            submit_time=0,
            runtime=tasks[t][1],
            nodes=tasks[t][2],
            deps=frozenset(dense[p] for p in parents.get(t, ())),
            workflow_id=wid,
            name=t,
        )
        for t in order
    )
    w = Workload(WorkloadKind.MTC, jobs, TraceSource(name, max((j.nodes for j in jobs), default=1)))
    bad = [v for v in validate_workload(w) if v.rule in ("cycle", "self-dependency")]
    if bad:
        raise IngestError(f"workflow dependency {bad[0].rule}: {bad[0].detail or bad[0].job_id}")
    return w


def _levels(tasks, parents) -> dict:
    """Longest-path depth from the roots (Kahn); tasks on a cycle get no level."""
    children = defaultdict(list)
    indeg = {t: 0 for t in tasks}
    for c, ps in parents.items():
        for p in ps:
            children[p].append(c)
            indeg[c] += 1
    level = {}
    ready = deque(sorted((t for t, d in indeg.items() if d == 0), key=lambda t: tasks[t][0]))
    for t in ready:
        level[t] = 0
    while ready:
        t = ready.popleft()
        for c in children[t]:
            level[c] = max(level.get(c, 0), level[t] + 1)
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
    return {t: lv for t, lv in level.items() if indeg[t] == 0}


def write_dag(w: Workload, out: TextIO | None = None) -> str:
    buf = out if out is not None else io.StringIO()
    names = {j.id: (j.name or f"t{j.id}") for j in w.jobs}
    buf.write(f"# workflow {w.source.name}: {len(w.jobs)} tasks\n")
    for j in w.jobs:
        buf.write(f"TASK {names[j.id]} {j.runtime} {j.nodes}\n")
    for j in w.jobs:
        for d in sorted(j.deps):
            buf.write(f"EDGE {names[d]} {names[j.id]}\n")
    return buf.getvalue() if out is None else ""


def scale_trace(w: Workload, target_nodes: int) -> Workload:
    """Rescale node demands so the trace's machine maps onto ``target_nodes``.

    Each demand is multiplied by ``target_nodes / machine_scale``, rounded
    half-up, and floored at one node.
    """
    if target_nodes < 1:
        raise ValueError(f"target_nodes must be >= 1, got {target_nodes}")
    factor = Fraction(target_nodes, w.source.machine_scale)
    jobs = tuple(j.with_nodes(max(1, _half_up(j.nodes * factor))) for j in w.jobs)
    src = replace(w.source, machine_scale=target_nodes,
                  scale_factor=w.source.scale_factor * float(factor))
    return replace(w, jobs=jobs, source=src)


def _half_up(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


def slice_trace(w: Workload, s: TraceSlice) -> Workload:
    """Keep jobs submitted in ``[start, start + duration)`` and rebase their submit times."""
    end = s.start_offset + s.duration
    jobs = [
        replace(j, submit_time=j.submit_time - s.start_offset)
        for j in w.jobs
        if s.start_offset <= j.submit_time < end
    ]
    if w.kind is WorkloadKind.HTC:
        jobs = [replace(j, id=i) for i, j in enumerate(jobs)]
    return replace(w, jobs=tuple(jobs))
