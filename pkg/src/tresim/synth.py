"""Seeded synthetic workloads: a Montage-shaped workflow DAG and SWF batch traces.

The HTC profiles are stand-ins for the NASA iPSC and SDSC BLUE archive traces;
their knobs are set so the two-week windows match the published job counts,
machine scales and utilization figures. All generators are deterministic for a
given seed (``random.Random``, no global state).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Optional

from .domain import Job, TraceSource, Workload, WorkloadKind
from .ingest import write_dag, write_swf

DAY = 86400


# -- workflow ----------------------------------------------------------------

# (stage, relative runtime weight, jitter fraction); singletons carry fixed seconds
MONTAGE_STAGES = {
    "mProjectPP": 13.0,
    "mDiffFit": 10.7,
    "mBackground": 11.0,
}
MONTAGE_SINGLETONS = (
    ("mConcatFit", 62),
    ("mBgModel", 163),
    ("mImgtbl", 14),
    ("mAdd", 58),
    ("mShrink", 21),
    ("mJPEG", 9),
)


def _image_pairs(n_images: int, n_pairs: int, rng: random.Random) -> list[tuple]:
    """Overlapping image pairs on a near-square mosaic grid (8-neighbourhood)."""
    cols = math.ceil(math.sqrt(n_images))
    cand = []
    for i in range(n_images):
        r, c = divmod(i, cols)
        for dr, dc in ((0, 1), (1, -1), (1, 0), (1, 1)):
            rr, cc = r + dr, c + dc
            j = rr * cols + cc
            if 0 <= cc < cols and j < n_images:
                cand.append((i, j))
    if n_pairs > len(cand):
        extra = [(i, j) for i in range(n_images) for j in range(i + 2, n_images) if (i, j) not in set(cand)]
        rng.shuffle(extra)
        cand += extra[: n_pairs - len(cand)]
    picked = rng.sample(cand, n_pairs)
    return sorted(picked)


def _int_runtimes(means: list[float], jitter: float, target_total: int, rng: random.Random) -> list[int]:
    """Integer runtimes near ``means`` (uniform jitter) whose sum is exactly ``target_total``."""
    raw = [m * (1 + rng.uniform(-jitter, jitter)) for m in means]
    scale = target_total / sum(raw)
    vals = [max(1, int(x * scale)) for x in raw]
    frac = sorted(range(len(raw)), key=lambda k: -(raw[k] * scale - int(raw[k] * scale)))
    k = 0
    while sum(vals) < target_total:
        vals[frac[k % len(frac)]] += 1
        k += 1
    while sum(vals) > target_total:
        idx = max(range(len(vals)), key=lambda q: vals[q])
        vals[idx] -= 1
    return vals


def montage_workflow(n_images: int = 166, n_pairs: int = 662, mean_runtime: float = 11.38,
                     jitter: float = 0.2, seed: int = 0, name: str = "montage") -> Workload:
    """Montage-shaped DAG: project, pairwise diff-fit, concat, bg-model, background, then a
    four-task tail. Integer runtimes are drawn around stage means and rescaled so the
    mean task runtime is ``mean_runtime`` (to the nearest whole-second total)."""
    rng = random.Random(seed)
    pairs = _image_pairs(n_images, n_pairs, rng)
    names, means, parents = [], [], []

    def add(nm, mean, deps=()):
        names.append(nm)
        means.append(mean)
        parents.append(list(deps))
        return len(names) - 1

    proj = [add(f"mProjectPP_{i:03d}", MONTAGE_STAGES["mProjectPP"]) for i in range(n_images)]
    diffs = [add(f"mDiffFit_{k:03d}", MONTAGE_STAGES["mDiffFit"], (proj[a], proj[b]))
             for k, (a, b) in enumerate(pairs)]
    concat = add("mConcatFit", MONTAGE_SINGLETONS[0][1], diffs)
    bgmodel = add("mBgModel", MONTAGE_SINGLETONS[1][1], (concat,))
    bgs = [add(f"mBackground_{i:03d}", MONTAGE_STAGES["mBackground"], (bgmodel, proj[i]))
           for i in range(n_images)]
    prev = add("mImgtbl", MONTAGE_SINGLETONS[2][1], bgs)
    for nm, mean in MONTAGE_SINGLETONS[3:]:
        prev = add(nm, mean, (prev,))

    n = len(names)
    target = round(mean_runtime * n)
    fixed_idx = {concat, bgmodel} | set(range(bgs[-1] + 1, n))
    fixed_total = sum(int(means[i]) for i in fixed_idx)
    var_idx = [i for i in range(n) if i not in fixed_idx]
    var_rt = _int_runtimes([means[i] for i in var_idx], jitter, target - fixed_total, rng)
    runtimes = [0] * n
    for i in fixed_idx:
        runtimes[i] = int(means[i])
    for i, rt in zip(var_idx, var_rt):
        runtimes[i] = rt
    jobs = tuple(
        Job(id=i, submit_time=0, runtime=runtimes[i], nodes=1, deps=frozenset(parents[i]),
            workflow_id=name, name=names[i])
        for i in range(n)
    )
    return Workload(WorkloadKind.MTC, jobs, TraceSource(name, 1))


def layered_workflow(levels: list[int], mean_runtime: float = 10.0, fan_in: int = 2,
                     seed: int = 0, max_nodes: int = 1, name: str = "wf") -> Workload:
    """Small random layered DAG for property tests: every task in level k>0 depends on
    up to ``fan_in`` random tasks of level k-1."""
    rng = random.Random(seed)
    jobs = []
    prev: list[int] = []
    for width in levels:
        cur = []
        for _ in range(width):
            jid = len(jobs)
            deps = frozenset(rng.sample(prev, min(fan_in, len(prev)))) if prev else frozenset()
            rt = max(1, round(rng.expovariate(1 / mean_runtime)))
            jobs.append(Job(jid, 0, rt, rng.randint(1, max_nodes), deps, name, f"t{jid}"))
            cur.append(jid)
        prev = cur
    return Workload(WorkloadKind.MTC, tuple(jobs), TraceSource(name, max_nodes))


# -- batch traces --------------------------------------------------------------

@dataclass(frozen=True)
class RuntimeClass:
    share: float
    median: float  # seconds
    sigma: float  # lognormal shape
    cap: float


@dataclass(frozen=True)
class HtcProfile:
    name: str
    machine_procs: int
    node_procs: int  # processors per node on the recorded machine
    jobs: int
    days: int
    size_weights: dict  # processors -> weight
    runtime_classes: tuple
    hourly: tuple = ()  # 24 relative arrival weights
    phase_weights: tuple = (1.0,)  # relative load of equal-length phases of the trace
    day_jitter: float = 0.25
    big_job_runtime_factor: float = 1.0  # runtime multiplier for jobs >= half the machine
    header: tuple = field(default_factory=tuple)


_OFFICE_HOURS = (0.35, 0.3, 0.25, 0.25, 0.25, 0.3, 0.45, 0.7, 1.0, 1.3, 1.45, 1.5,
                 1.3, 1.45, 1.55, 1.5, 1.35, 1.15, 0.95, 0.85, 0.75, 0.65, 0.55, 0.45)

NASA_LIKE = HtcProfile(
    name="nasa-ipsc-synth",
    machine_procs=128,
    node_procs=1,
    jobs=2620,
    days=14,
    size_weights={1: 0.3, 2: 0.08, 4: 0.1, 8: 0.14, 16: 0.15, 32: 0.2, 64: 0.06, 128: 0.002},
    runtime_classes=(
        RuntimeClass(0.50, 60.0, 1.0, 3000.0),
        RuntimeClass(0.25, 1500.0, 0.5, 3500.0),
        RuntimeClass(0.25, 5400.0, 0.7, 48 * 3600.0),
    ),
    hourly=_OFFICE_HOURS,
    day_jitter=0.3,
    big_job_runtime_factor=0.6,
)

BLUE_LIKE = HtcProfile(
    name="sdsc-blue-synth",
    machine_procs=1152,
    node_procs=8,
    jobs=2657,
    days=14,
    size_weights={8: 0.65, 16: 0.15, 32: 0.1, 64: 0.04, 128: 0.02, 256: 0.01, 512: 0.003, 1152: 0.001},
    runtime_classes=(
        RuntimeClass(0.5, 300.0, 1.0, 3500.0),
        RuntimeClass(0.1, 3600.0, 0.6, 5 * 3600.0),
        RuntimeClass(0.4, 28800.0, 0.5, 36 * 3600.0),
    ),
    hourly=_OFFICE_HOURS,
    day_jitter=0.2,
    big_job_runtime_factor=0.7,
)

PROFILES = {"nasa": NASA_LIKE, "blue": BLUE_LIKE}
# seeds of the checked-in fixtures: the ones whose workload statistics sit
# closest to the published figures for the recorded traces
FIXTURE_SEEDS = {"nasa": 15, "blue": 14, "montage": 0}


def _weighted(rng: random.Random, weights: dict):
    keys = sorted(weights)
    return rng.choices(keys, weights=[weights[k] for k in keys])[0]


def _arrivals(p: HtcProfile, rng: random.Random) -> list[int]:
    hours = p.days * 24
    day_mult = [max(0.1, 1 + rng.uniform(-p.day_jitter, p.day_jitter)) for _ in range(p.days)]
    phases = p.phase_weights
    hourly = p.hourly or (1.0,) * 24
    w = []
    for h in range(hours):
        phase = phases[min(len(phases) - 1, h * len(phases) // hours)]
        w.append(hourly[h % 24] * day_mult[h // 24] * phase)
    bins = rng.choices(range(hours), weights=w, k=p.jobs)
    return sorted(b * 3600 + rng.randrange(3600) for b in bins)


def _runtime(p: HtcProfile, procs: int, rng: random.Random) -> int:
    cls = rng.choices(p.runtime_classes, weights=[c.share for c in p.runtime_classes])[0]
    rt = min(cls.cap, rng.lognormvariate(math.log(cls.median), cls.sigma))
    if procs * 2 >= p.machine_procs:
        rt *= p.big_job_runtime_factor
    return max(1, int(rt))


def htc_trace(p: HtcProfile, seed: int = 0) -> Workload:
    """Synthetic batch trace in the recorded machine's processor units."""
    rng = random.Random(seed)
    jobs = []
    for i, t in enumerate(_arrivals(p, rng)):
        procs = _weighted(rng, p.size_weights)
        jobs.append(Job(id=i, submit_time=t, runtime=_runtime(p, procs, rng), nodes=procs, name=str(i + 1)))
    # the largest request must occur so the trace spans the full machine
    if not any(j.nodes == p.machine_procs for j in jobs):
        k = rng.randrange(len(jobs))
        jobs[k] = Job(k, jobs[k].submit_time, jobs[k].runtime, p.machine_procs, name=jobs[k].name)
    return Workload(WorkloadKind.HTC, tuple(jobs), TraceSource(p.name, p.machine_procs))


def trace_stats(w: Workload, nodes: int, window: int, quantum: int = 3600) -> dict:
    """Workload-only statistics used to check a trace against its targets."""
    busy = sum(j.nodes * min(j.runtime, max(0, window - j.submit_time)) for j in w.jobs) / 3600
    drp = sum(j.nodes * -(-j.runtime // quantum) for j in w.jobs) * quantum / 3600
    return {
        "jobs": len(w.jobs),
        "max_nodes": w.max_nodes,
        "busy_node_hours": busy,
        "utilization": busy / (nodes * window / 3600),
        "per_job_lease_node_hours": drp,
    }


def write_fixture(kind: str, path: str, seed: Optional[int] = None) -> None:
    """Write a generated workload file (``montage`` DAG, or ``nasa``/``blue`` SWF)."""
    seed = FIXTURE_SEEDS[kind] if seed is None else seed
    with open(path, "w", encoding="utf-8") as fh:
        if kind == "montage":
            write_dag(montage_workflow(seed=seed), fh)
        else:
            write_swf(htc_trace(PROFILES[kind], seed=seed), fh)


def _main(argv: Optional[list] = None) -> None:
    import argparse

    ap = argparse.ArgumentParser(description="write synthetic workload fixtures")
    ap.add_argument("kind", choices=["montage", *PROFILES])
    ap.add_argument("out")
    ap.add_argument("--seed", type=int, help="default: the fixture seed")
    args = ap.parse_args(argv)
    write_fixture(args.kind, args.out, args.seed)


if __name__ == "__main__":
    _main()
