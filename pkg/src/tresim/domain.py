"""Core data types shared by the simulator: jobs, workloads, TRE state, lease ledger."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional


class WorkloadKind(str, Enum):
    HTC = "htc"
    MTC = "mtc"


class Lifecycle(str, Enum):
    INEXISTENT = "inexistent"
    PLANNING = "planning"
    CREATED = "created"
    RUNNING = "running"
    DESTROYED = "destroyed"


class LeaseCause(str, Enum):
    INITIAL = "initial"
    DR1 = "dr1"
    DR2 = "dr2"
    RELEASE = "release"
    DRP_JOB = "drp_job"


@dataclass(frozen=True)
class Job:
    id: int
    submit_time: int
    runtime: int
    nodes: int
    deps: frozenset = frozenset()
    workflow_id: Optional[str] = None
    name: Optional[str] = None  # original trace / DAG identifier

    def with_nodes(self, nodes: int) -> "Job":
        return replace(self, nodes=nodes)


@dataclass(frozen=True)
class TraceSource:
    name: str
    machine_scale: int  # node count of the machine the trace was recorded on
    scale_factor: float = 1.0


@dataclass(frozen=True)
class Workload:
    kind: WorkloadKind
    jobs: tuple
    source: TraceSource
    skipped_lines: int = 0

    def __len__(self) -> int:
        return len(self.jobs)

    @property
    def max_nodes(self) -> int:
        return max((j.nodes for j in self.jobs), default=0)

    def by_id(self) -> dict:
        return {j.id: j for j in self.jobs}


@dataclass(frozen=True)
class PolicyParams:
    initial_resources: int
    threshold_ratio: float
    scan_interval: int = 60
    idle_check_interval: int = 3600

    def __post_init__(self):
        if self.initial_resources < 1:
            raise ValueError(f"initial_resources must be >= 1, got {self.initial_resources}")
        if not self.threshold_ratio > 0:
            raise ValueError(f"threshold_ratio must be > 0, got {self.threshold_ratio}")
        if self.scan_interval < 1 or self.idle_check_interval < 1:
            raise ValueError("scan and idle-check intervals must be >= 1 s")

    @classmethod
    def for_kind(cls, kind: WorkloadKind, initial_resources: int, threshold_ratio: float) -> "PolicyParams":
        scan = 60 if kind is WorkloadKind.HTC else 3
        return cls(initial_resources, threshold_ratio, scan_interval=scan)

    @property
    def label(self) -> str:
        return f"B{self.initial_resources}_R{self.threshold_ratio:g}"


@dataclass
class TreState:
    """Mutable state of one thin runtime environment during a run."""

    tre_id: str
    kind: WorkloadKind
    params: Optional[PolicyParams] = None
    lifecycle: Lifecycle = Lifecycle.INEXISTENT
    owned_nodes: int = 0
    initial_nodes: int = 0
    queue: list = field(default_factory=list)
    running: dict = field(default_factory=dict)  # job id -> (job, finish_time)
    pending_releases: list = field(default_factory=list)  # Obligation objects
    rejected_requests: int = 0

    @property
    def busy_nodes(self) -> int:
        return sum(job.nodes for job, _ in self.running.values())

    @property
    def free_nodes(self) -> int:
        return self.owned_nodes - self.busy_nodes


@dataclass(frozen=True)
class LedgerEvent:
    time: int
    tre_id: str
    delta: int
    cause: LeaseCause
    lease_id: int


class LedgerError(RuntimeError):
    pass


class LeaseLedger:
    """Append-only record of node grants and releases.

    Every append is checked: per-TRE holdings never go negative, the global
    allocation never exceeds ``capacity`` (``None`` means unbounded), and time
    never moves backwards.
    """

    def __init__(self, capacity: Optional[int] = None):
        self.capacity = capacity
        self.events: list[LedgerEvent] = []
        self._held: dict[str, int] = {}
        self._lease_open: dict[int, int] = {}
        self.allocated = 0
        self.peak = 0
        self._next_lease = 0

    def new_lease_id(self) -> int:
        self._next_lease += 1
        return self._next_lease

    def held(self, tre_id: str) -> int:
        return self._held.get(tre_id, 0)

    @property
    def free(self) -> Optional[int]:
        if self.capacity is None:
            return None
        return self.capacity - self.allocated

    def append(self, time: int, tre_id: str, delta: int, cause: LeaseCause, lease_id: int) -> LedgerEvent:
        if self.events and time < self.events[-1].time:
            raise LedgerError(f"ledger time went backwards: {time} < {self.events[-1].time}")
        held = self._held.get(tre_id, 0) + delta
        if held < 0:
            raise LedgerError(f"TRE {tre_id} would hold {held} nodes at t={time}")
        allocated = self.allocated + delta
        if self.capacity is not None and allocated > self.capacity:
            raise LedgerError(f"allocation {allocated} exceeds capacity {self.capacity} at t={time}")
        open_nodes = self._lease_open.get(lease_id, 0) + delta
        if open_nodes < 0:
            raise LedgerError(f"lease {lease_id} released more than it was granted")
        self._lease_open[lease_id] = open_nodes
        self._held[tre_id] = held
        self.allocated = allocated
        self.peak = max(self.peak, allocated)
        ev = LedgerEvent(time, tre_id, delta, cause, lease_id)
        self.events.append(ev)
        return ev

    def open_leases(self) -> dict[int, int]:
        return {k: v for k, v in self._lease_open.items() if v > 0}


def _find_cycle(jobs: Iterable[Job]) -> Optional[list]:
    """Return one dependency cycle as a list of job ids, or None."""
    merged: dict[int, set] = {}
    for j in jobs:
        merged.setdefault(j.id, set()).update(j.deps)  # duplicate ids pool their edges
    graph = {k: sorted(v) for k, v in merged.items()}
    WHITE, GREY, BLACK = 0, 1, 2
    color = {v: WHITE for v in graph}
    for root in sorted(graph):
        if color[root] != WHITE:
            continue
        stack = [(root, iter(graph[root]))]
        path = [root]
        color[root] = GREY
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                path.pop()
                color[node] = BLACK
                continue
            if nxt not in color:
                continue  # dangling dep, reported separately
            if color[nxt] == GREY:
                return path[path.index(nxt):] + [nxt]
            if color[nxt] == WHITE:
                color[nxt] = GREY
                stack.append((nxt, iter(graph[nxt])))
                path.append(nxt)
    return None


@dataclass(frozen=True, order=True)
class Violation:
    rule: str
    job_id: Optional[int]
    detail: str = ""


def validate_workload(w: Workload, max_attainable: Optional[int] = None) -> list[Violation]:
    """Check the job and workload invariants; violations are returned, never raised."""
    out: list[Violation] = []
    ids = set()
    for j in w.jobs:
        if j.id in ids:
            out.append(Violation("duplicate-id", j.id))
        ids.add(j.id)
        if j.runtime <= 0:
            out.append(Violation("runtime-positive", j.id, f"runtime={j.runtime}"))
        if j.nodes < 1:
            out.append(Violation("nodes-positive", j.id, f"nodes={j.nodes}"))
        if j.submit_time < 0:
            out.append(Violation("submit-nonnegative", j.id, f"submit_time={j.submit_time}"))
        if j.id in j.deps:
            out.append(Violation("self-dependency", j.id))
        if w.kind is WorkloadKind.HTC and j.deps:
            out.append(Violation("htc-deps", j.id, "HTC jobs must be independent"))
        if max_attainable is not None and j.nodes > max_attainable:
            out.append(Violation("exceeds-attainable", j.id, f"nodes={j.nodes} > {max_attainable}"))
    for j in w.jobs:
        for d in sorted(j.deps - ids):
            out.append(Violation("dangling-dependency", j.id, f"unknown dep {d}"))
    for a, b in zip(w.jobs, w.jobs[1:]):
        if b.submit_time < a.submit_time:
            out.append(Violation("submit-order", b.id, f"{b.submit_time} < {a.submit_time}"))
    # self-loops are already reported; look for longer cycles only
    cyc = _find_cycle(
        replace(j, deps=j.deps - {j.id}) for j in w.jobs
    )
    if cyc is not None:
        out.append(Violation("cycle", min(cyc[:-1]), "->".join(map(str, cyc))))
    return sorted(out)
