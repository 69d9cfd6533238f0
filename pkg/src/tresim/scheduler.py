"""Job selection inside a TRE: first-fit for HTC queues, FCFS for workflow tasks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .domain import Job


@dataclass(frozen=True)
class SchedDecision:
    started: tuple  # jobs in start order
    still_queued: tuple

    @property
    def started_nodes(self) -> int:
        return sum(j.nodes for j in self.started)


def first_fit(queue: Sequence[Job], free_nodes: int, max_starts: Optional[int] = None) -> SchedDecision:
    """Scan in arrival order and start the first job that fits, repeating to a fixed point.

    ``max_starts=1`` gives the strict one-job-per-scan variant.
    """
    if free_nodes < 0:
        raise ValueError("free_nodes must be >= 0")
    # Free nodes only shrink while scanning, so a job skipped earlier can never
    # fit after a later start: a single pass reaches the restart-from-head fixed point.
    started = []
    waiting = []
    for job in queue:
        if job.nodes <= free_nodes and (max_starts is None or len(started) < max_starts):
            started.append(job)
            free_nodes -= job.nodes
        else:
            waiting.append(job)
    return SchedDecision(tuple(started), tuple(waiting))


def fcfs(ready: Sequence[Job], free_nodes: int) -> SchedDecision:
    """Start jobs strictly from the head; the first job that does not fit blocks the rest."""
    if free_nodes < 0:
        raise ValueError("free_nodes must be >= 0")
    n = 0
    for job in ready:
        if job.nodes > free_nodes:
            break
        free_nodes -= job.nodes
        n += 1
    return SchedDecision(tuple(ready[:n]), tuple(ready[n:]))


def ready_jobs(jobs: Iterable[Job], completed: set, running: Iterable[int] = ()) -> list[Job]:
    """Jobs not yet completed or running whose dependencies have all completed, in FCFS order.

    FCFS order is the workflow's job-id order (topological level, then
    declaration order, as assigned by the DAG parser).
    """
    busy = set(running)
    out = [j for j in jobs if j.id not in completed and j.id not in busy and j.deps <= completed]
    out.sort(key=lambda j: j.id)
    return out
