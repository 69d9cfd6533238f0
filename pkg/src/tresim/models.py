"""The four usage models (DCS, SSP, DRP, DSP) composed from engine, scheduler and policy.

A scenario is a set of TRE entries sharing one provision pool and one lease
ledger. Each entry carries its workload plus both a fixed size (used by DCS
and SSP) and policy parameters (used by DSP); the model kind selects which
environment is built for every entry.
"""

from __future__ import annotations

import bisect
import logging
from collections import defaultdict
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

from . import policy
from .domain import (
    Job,
    LeaseCause,
    LeaseLedger,
    PolicyParams,
    TreState,
    Workload,
    WorkloadKind,
)
from .engine import Event, EventKind, SimulationError, Simulator, SpeedupFactor
from .metrics import SimReport, billed_node_hours, build_report, merge_reports  # noqa: F401
from .scheduler import fcfs, first_fit

log = logging.getLogger(__name__)

HOUR = 3600


class ModelKind(str, Enum):
    DCS = "dcs"
    SSP = "ssp"
    DRP = "drp"
    DSP = "dsp"


@dataclass(frozen=True)
class TreEntry:
    name: str
    workload: Workload
    fixed_size: Optional[int] = None
    params: Optional[PolicyParams] = None
    start: int = 0  # creation instant; workload submit times are offset by this
    lifetime: Optional[int] = None  # None: destroyed once the workload drains

    @property
    def end(self) -> Optional[int]:
        return None if self.lifetime is None else self.start + self.lifetime


@dataclass(frozen=True)
class ScenarioConfig:
    entries: tuple
    pool_capacity: Optional[int] = None
    lease_quantum: int = HOUR
    setup_cost_per_node: float = 15.743
    strict_scan: bool = False
    dr2_enabled: bool = True
    trace: bool = False
    livelock_limit: int = 10**6
    speedup: int = 100
    pace: bool = False

    def __post_init__(self):
        if self.lease_quantum < 1:
            raise ValueError("lease_quantum must be >= 1")
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate TRE names in {names}")

    def entry(self, name: str) -> TreEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)


@dataclass
class ScenarioResult:
    model: ModelKind
    reports: dict  # TRE name -> SimReport
    provider: SimReport
    ledger: LeaseLedger
    trace: str = ""


class _Run:
    """Shared state of one scenario execution."""

    def __init__(self, cfg: ScenarioConfig, model: ModelKind):
        self.cfg = cfg
        self.model = model
        capacity = None if model is ModelKind.DRP else cfg.pool_capacity
        self.ledger = LeaseLedger(capacity)
        self.sim = Simulator(livelock_limit=cfg.livelock_limit, trace=cfg.trace,
                             speedup=SpeedupFactor(cfg.speedup), pace=cfg.pace)
        self.envs: dict[str, _Env] = {}
        for kind in EventKind:
            self.sim.on(kind, self._dispatch)

    def _dispatch(self, ev: Event) -> None:
        self.envs[ev.tre].handle(ev)

    def lease(self, env: "_Env", size: int, cause: LeaseCause, lease_id: Optional[int] = None) -> int:
        lid = lease_id if lease_id is not None else self.ledger.new_lease_id()
        self.ledger.append(self.sim.now, env.name, size, cause, lid)
        self.sim.record(f"GRANT_{cause.name}", env.name, None, size)
        return lid

    def release(self, env: "_Env", size: int, lease_id: int) -> None:
        if size <= 0:
            return
        self.ledger.append(self.sim.now, env.name, -size, LeaseCause.RELEASE, lease_id)
        self.sim.record("RELEASE", env.name, None, -size)


class _Env:
    """Per-entry environment: arrival handling, dependency release, completion records."""

    def __init__(self, run: _Run, entry: TreEntry):
        self.run = run
        self.entry = entry
        self.name = entry.name
        self.w = entry.workload
        self.jobs = {j.id: j for j in self.w.jobs}
        self.children = defaultdict(list)
        self.missing = {j.id: len(j.deps) for j in self.w.jobs}
        for j in self.w.jobs:
            for d in j.deps:
                self.children[d].append(j.id)
        self.started: dict[int, tuple] = {}  # job id -> (start, finish)
        self.finished: dict[int, int] = {}
        self.unrunnable: set[int] = set()
        self.rejected = 0
        self.cap_binds = 0
        self.destroyed_at: Optional[int] = None
        self.destroy_pending = False
        self.created = False
        self.arrived = 0

    @property
    def sim(self) -> Simulator:
        return self.run.sim

    def setup(self) -> None:
        sim = self.sim
        sim.schedule(self.entry.start, EventKind.TRE_CREATE, self.name)
        if self.w.kind is WorkloadKind.HTC:
            for j in self.w.jobs:
                sim.schedule(self.entry.start + j.submit_time, EventKind.JOB_ARRIVAL, self.name, j.id)
        elif self.w.jobs:
            submit = self.entry.start + min(j.submit_time for j in self.w.jobs)
            sim.schedule(submit, EventKind.JOB_ARRIVAL, self.name, None)
        if self.entry.end is not None:
            sim.schedule(self.entry.end, EventKind.TRE_DESTROY, self.name)

    def handle(self, ev: Event) -> None:
        k = ev.kind
        if k is EventKind.TRE_CREATE:
            self.created = True
            self.create()
            self.maybe_drained()
        elif self.destroyed_at is not None:
            return
        elif k is EventKind.JOB_ARRIVAL:
            if ev.job is None:
                self.arrived = len(self.jobs)
                self.mark_unrunnable()
                roots = [j for j in self.w.jobs if not j.deps and j.id not in self.unrunnable]
                self.enqueue(roots)
            else:
                self.arrived += 1
                job = self.jobs[ev.job]
                if self.cannot_run(job):
                    self.unrunnable.add(job.id)
                    log.warning("%s: job %s needs %d nodes, more than attainable", self.name, job.id, job.nodes)
                else:
                    self.enqueue([job])
            self.after_change()
            self.maybe_drained()
        elif k is EventKind.JOB_FINISH:
            self.finish(ev.job)
            self.after_change()
            self.maybe_drained()
        elif k is EventKind.TRE_DESTROY:
            self.destroy()
        else:
            self.on_timer(ev)

    # workflow bookkeeping
    def mark_unrunnable(self, seeds=None) -> None:
        """Mark ``seeds`` (default: jobs the model can never fit) and their descendants."""
        stack = [j.id for j in self.w.jobs if self.cannot_run(j)] if seeds is None else list(seeds)
        while stack:
            jid = stack.pop()
            if jid in self.unrunnable:
                continue
            self.unrunnable.add(jid)
            stack.extend(self.children[jid])

    def finish(self, jid: int) -> None:
        self.finished[jid] = self.sim.now
        self.sim.record("JOB_FINISH", self.name, jid)
        self.on_finish(self.jobs[jid])
        released = []
        for c in self.children[jid]:
            self.missing[c] -= 1
            if self.missing[c] == 0 and c not in self.unrunnable:
                released.append(self.jobs[c])
        if released:
            released.sort(key=lambda j: j.id)
            self.enqueue(released)

    def start_job(self, job: Job) -> None:
        now = self.sim.now
        self.started[job.id] = (now, now + job.runtime)
        self.sim.schedule(now + job.runtime, EventKind.JOB_FINISH, self.name, job.id)
        self.sim.record("JOB_START", self.name, job.id)

    def drained(self) -> bool:
        return (self.arrived == len(self.jobs)
                and len(self.finished) + len(self.unrunnable) == len(self.jobs))

    def maybe_drained(self) -> None:
        if self.entry.end is None and not self.destroy_pending and self.drained():
            self.destroy_pending = True
            self.sim.schedule(self.sim.now, EventKind.TRE_DESTROY, self.name)

    def settled(self) -> bool:
        """True once this environment can no longer change the pool's free nodes by itself."""
        if self.destroyed_at is not None:
            return True
        if not self.created or self.entry.end is not None or self.arrived < len(self.jobs):
            return False
        return not self.active()

    # hooks
    def create(self) -> None: ...
    def cannot_run(self, job: Job) -> bool: return False
    def enqueue(self, jobs) -> None: ...
    def on_finish(self, job: Job) -> None: ...
    def after_change(self) -> None: ...
    def on_timer(self, ev: Event) -> None: ...
    def destroy(self) -> None: ...
    def active(self) -> bool: return False

    def report(self) -> SimReport:
        end = self.destroyed_at if self.destroyed_at is not None else self.sim.now
        submit = None
        if self.w.kind is WorkloadKind.MTC and self.w.jobs:
            submit = self.entry.start + min(j.submit_time for j in self.w.jobs)
        return build_report(
            name=self.name,
            model=self.run.model.value,
            kind=self.w.kind,
            total_jobs=len(self.jobs),
            starts=self.started,
            finished=self.finished,
            nodes={j.id: j.nodes for j in self.w.jobs},
            unrunnable=len(self.unrunnable),
            window=(self.entry.start, end),
            workflow_submit=submit,
            ledger=self.run.ledger,
            quantum=self.run.cfg.lease_quantum,
            rejected=self.rejected,
            cap_binds=self.cap_binds,
            setup_cost=self.run.cfg.setup_cost_per_node,
        )


class _QueueTre(_Env):
    """A TRE with a scheduler queue: fixed-size (DCS/SSP) or elastic (DSP)."""

    def __init__(self, run: _Run, entry: TreEntry):
        super().__init__(run, entry)
        self.state = TreState(entry.name, self.w.kind, entry.params)
        self.leases: dict[int, int] = {}  # lease id -> nodes held
        self.initial_lease: Optional[int] = None
        self.timers: list[Event] = []

    def initial_size(self) -> int:
        raise NotImplementedError

    def create(self) -> None:
        st = self.state
        for action in (policy.Action.APPLY, policy.Action.VALIDATED, policy.Action.DEPLOYED,
                       policy.Action.STARTED):
            policy.lifecycle_transition(st, action)
        size = self.initial_size()
        free = self.run.ledger.free
        if free is not None and free < size:
            raise SimulationError(f"pool cannot provide {size} initial nodes to {self.name} (free {free})")
        lid = self.run.lease(self, size, LeaseCause.INITIAL)
        self.initial_lease = lid
        self.leases[lid] = size
        st.owned_nodes = st.initial_nodes = size
        self.sim.record("TRE_CREATE", self.name, None, size)

    def enqueue(self, jobs) -> None:
        q = self.state.queue
        if self.w.kind is WorkloadKind.MTC:
            for j in jobs:
                bisect.insort(q, j, key=lambda x: x.id)
        else:
            q.extend(jobs)

    def after_change(self) -> None:
        self.schedule()

    def schedule(self) -> None:
        st = self.state
        if not st.queue:
            return
        free = st.free_nodes
        if self.w.kind is WorkloadKind.HTC:
            dec = first_fit(st.queue, free, max_starts=1 if self.run.cfg.strict_scan else None)
        else:
            dec = fcfs(st.queue, free)
        if not dec.started:
            return
        st.queue = list(dec.still_queued)
        for job in dec.started:
            st.running[job.id] = (job, self.sim.now + job.runtime)
            self.start_job(job)

    def on_finish(self, job: Job) -> None:
        self.state.running.pop(job.id)

    def active(self) -> bool:
        return bool(self.state.running or self.state.pending_releases)

    def destroy(self) -> None:
        st = self.state
        now = self.sim.now
        policy.lifecycle_transition(st, policy.Action.DESTROY)
        for ev in self.timers:
            self.sim.cancel(ev)
        self.timers.clear()
        for lid in sorted(self.leases):
            self.run.release(self, self.leases[lid], lid)
        self.leases.clear()
        st.owned_nodes = 0
        self.destroyed_at = now
        self.sim.record("TRE_DESTROY", self.name, None, None)


class _FixedTre(_QueueTre):
    def initial_size(self) -> int:
        if not self.entry.fixed_size or self.entry.fixed_size < 1:
            raise SimulationError(f"{self.name}: fixed model needs fixed_size >= 1")
        return self.entry.fixed_size

    def cannot_run(self, job: Job) -> bool:
        return job.nodes > self.entry.fixed_size


class _DspTre(_QueueTre):
    def __init__(self, run: _Run, entry: TreEntry):
        super().__init__(run, entry)
        if entry.params is None:
            raise SimulationError(f"{entry.name}: DSP needs policy parameters")
        self.params = entry.params

    def initial_size(self) -> int:
        return self.params.initial_resources

    def cannot_run(self, job: Job) -> bool:
        cap = self.run.ledger.capacity
        return cap is not None and job.nodes > cap

    def create(self) -> None:
        super().create()
        self.timers.append(self.sim.schedule(self.sim.now, EventKind.SCAN_TICK, self.name))

    def on_timer(self, ev: Event) -> None:
        if ev.kind is EventKind.SCAN_TICK:
            self.scan()
            self.timers.append(
                self.sim.schedule(self.sim.now + self.params.scan_interval, EventKind.SCAN_TICK, self.name))
        elif ev.kind is EventKind.IDLE_CHECK_TICK:
            self.idle_check(ev.data)
        self.timers = [t for t in self.timers if t.time >= self.sim.now and t is not ev]

    def scan(self) -> None:
        st = self.state
        reqs = policy.scan_tick(st, dr2_enabled=self.run.cfg.dr2_enabled)
        granted = False
        for req in reqs:
            outcome = policy.provision_decide(req, self.run.ledger.free)
            if isinstance(outcome, policy.Rejected):
                self.rejected += 1
                st.rejected_requests += 1
                self.sim.record(f"REJECT_{req.cause.name}", self.name, None, req.size)
                continue
            granted = True
            lid = self.run.lease(self, outcome.size, req.cause)
            self.leases[lid] = outcome.size
            st.owned_nodes += outcome.size
            ob = policy.Obligation(outcome.size, self.sim.now + self.params.idle_check_interval, lid, req.cause)
            st.pending_releases.append(ob)
            self.timers.append(self.sim.schedule(ob.due, EventKind.IDLE_CHECK_TICK, self.name, data=ob))
        if granted:
            self.schedule()
        elif st.queue and self.entry.end is None and all(e.settled() for e in self.run.envs.values()):
            # nothing runs anywhere and no grant can come: the queue is stuck for good
            stuck = [j.id for j in st.queue]
            log.warning("%s: %d queued jobs can never start; marking them unrunnable", self.name, len(stuck))
            st.queue = []
            self.mark_unrunnable(stuck)
            self.maybe_drained()

    def idle_check(self, ob: policy.Obligation) -> None:
        st = self.state
        size = policy.idle_check(st.owned_nodes, st.busy_nodes, st.initial_nodes, ob.size)
        if size is None:
            ob.due = self.sim.now + self.params.idle_check_interval
            self.timers.append(self.sim.schedule(ob.due, EventKind.IDLE_CHECK_TICK, self.name, data=ob))
            return
        if size < ob.size:
            self.cap_binds += 1
        st.pending_releases.remove(ob)
        if size:
            self.run.release(self, size, ob.lease_id)
            self.leases[ob.lease_id] -= size
            if not self.leases[ob.lease_id]:
                del self.leases[ob.lease_id]
            st.owned_nodes -= size


@dataclass
class _Unit:
    owner: str
    lease_id: int
    expiry: int
    busy_until: int


class _DrpUsers(_Env):
    """End users leasing nodes directly per job; no queue, unbounded pool.

    Lease owner is the workflow for MTC tasks (a user reuses its own paid,
    idle nodes until their lease expires) and the job itself for HTC.
    """

    def __init__(self, run: _Run, entry: TreEntry):
        super().__init__(run, entry)
        self.units: dict[str, list[_Unit]] = defaultdict(list)
        self.by_lease: dict[int, list[_Unit]] = {}
        self.quantum = run.cfg.lease_quantum

    def owner(self, job: Job) -> str:
        return job.workflow_id if job.workflow_id is not None else f"job{job.id}"

    def create(self) -> None:
        self.sim.record("TRE_CREATE", self.name, None, 0)

    def enqueue(self, jobs) -> None:
        for job in jobs:
            self.acquire(job)
            self.start_job(job)

    def _quantized(self, span: int) -> int:
        return -(-span // self.quantum) * self.quantum

    def acquire(self, job: Job) -> None:
        now = self.sim.now
        finish = now + job.runtime
        owner = self.owner(job)
        pool = self.units[owner]
        idle = [u for u in pool if u.busy_until <= now and u.expiry > now]
        idle.sort(key=lambda u: (-u.expiry, u.lease_id))
        reuse = idle[: job.nodes]
        for u in reuse:
            u.busy_until = finish
            if u.expiry < finish:
                u.expiry += self._quantized(finish - u.expiry)
                self.sim.schedule(u.expiry, EventKind.LEASE_EXPIRY_BOUNDARY, self.name, data=u.lease_id)
        fresh = job.nodes - len(reuse)
        if fresh:
            lid = self.run.lease(self, fresh, LeaseCause.DRP_JOB)
            expiry = now + self._quantized(job.runtime)
            new = [_Unit(owner, lid, expiry, finish) for _ in range(fresh)]
            pool.extend(new)
            self.by_lease[lid] = new
            self.sim.schedule(expiry, EventKind.LEASE_EXPIRY_BOUNDARY, self.name, data=lid)

    def on_timer(self, ev: Event) -> None:
        if ev.kind is not EventKind.LEASE_EXPIRY_BOUNDARY:
            return
        units = self.by_lease.get(ev.data, [])
        gone = [u for u in units if u.expiry == self.sim.now]
        if not gone:
            return
        self._drop(ev.data, gone)

    def _drop(self, lid: int, gone) -> None:
        ids = {id(u) for u in gone}
        self.by_lease[lid] = [u for u in self.by_lease[lid] if id(u) not in ids]
        if not self.by_lease[lid]:
            del self.by_lease[lid]
        for owner in {u.owner for u in gone}:
            left = [u for u in self.units[owner] if id(u) not in ids]
            if left:
                self.units[owner] = left
            else:
                del self.units[owner]
        self.run.release(self, len(gone), lid)

    def active(self) -> bool:
        return bool(self.by_lease)

    def maybe_drained(self) -> None:
        # leases outlive the jobs; the environment ends when the last lease expires
        if not self.by_lease:
            super().maybe_drained()

    def handle(self, ev: Event) -> None:
        super().handle(ev)
        if ev.kind is EventKind.LEASE_EXPIRY_BOUNDARY and self.destroyed_at is None:
            self.maybe_drained()

    def destroy(self) -> None:
        for lid in sorted(self.by_lease):
            self._drop(lid, list(self.by_lease[lid]))
        self.destroyed_at = self.sim.now
        self.sim.record("TRE_DESTROY", self.name, None, None)


_ENV_FOR = {
    ModelKind.DCS: _FixedTre,
    ModelKind.SSP: _FixedTre,
    ModelKind.DSP: _DspTre,
    ModelKind.DRP: _DrpUsers,
}


def run_scenario(cfg: ScenarioConfig, model: ModelKind) -> ScenarioResult:
    """Execute every entry of ``cfg`` under ``model`` against one pool."""
    model = ModelKind(model)
    run = _Run(cfg, model)
    for entry in cfg.entries:
        env = _ENV_FOR[model](run, entry)
        run.envs[entry.name] = env
        env.setup()
    run.sim.run()
    for env in run.envs.values():
        if env.destroyed_at is None:
            raise SimulationError(f"{env.name} never reached destruction")
    open_leases = run.ledger.open_leases()
    if open_leases:
        raise SimulationError(f"leases left open after the run: {sorted(open_leases)}")
    reports = {name: env.report() for name, env in run.envs.items()}
    provider = merge_reports("provider", model.value, list(reports.values()), run.ledger,
                             cfg.lease_quantum, cfg.setup_cost_per_node)
    return ScenarioResult(model, reports, provider, run.ledger,
                          run.sim.dump_trace() if cfg.trace else "")


def _single(entry: TreEntry, model: ModelKind, **cfg_kw) -> SimReport:
    cfg = ScenarioConfig(entries=(entry,), **cfg_kw)
    return run_scenario(cfg, model).reports[entry.name]


def run_fixed(w: Workload, size: int, owned: str = "leased", lifetime: Optional[int] = None,
              **cfg_kw) -> SimReport:
    """Whole workload on a constant partition; ``owned`` picks the DCS/SSP label only."""
    if size < 1:
        raise ValueError("size must be >= 1")
    model = ModelKind.DCS if owned == "local" else ModelKind.SSP
    return _single(TreEntry(w.source.name, w, fixed_size=size, lifetime=lifetime), model, **cfg_kw)


def run_drp(w: Workload, lifetime: Optional[int] = None, **cfg_kw) -> SimReport:
    return _single(TreEntry(w.source.name, w, lifetime=lifetime), ModelKind.DRP, **cfg_kw)


def run_dsp(scenario: ScenarioConfig) -> ScenarioResult:
    return run_scenario(scenario, ModelKind.DSP)


def simulate(model: ModelKind, w: Workload, *, size: Optional[int] = None,
             params: Optional[PolicyParams] = None, lifetime: Optional[int] = None,
             **cfg_kw) -> SimReport:
    """Run one workload under one usage model and return its report."""
    entry = TreEntry(w.source.name, w, fixed_size=size, params=params, lifetime=lifetime)
    return _single(entry, ModelKind(model), **cfg_kw)


def with_params(cfg: ScenarioConfig, name: str, params: PolicyParams) -> ScenarioConfig:
    entries = tuple(replace(e, params=params) if e.name == name else e for e in cfg.entries)
    return replace(cfg, entries=entries)
