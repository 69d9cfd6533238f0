"""Elastic resource negotiation for TREs.

Pure sizing functions (obtaining ratio, DR1, DR2, idle release), the
provision decision, and the TRE lifecycle state machine.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Optional, Sequence

from .domain import Job, LeaseCause, Lifecycle, TreState

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ResourceRequest:
    tre_id: str
    size: int
    cause: LeaseCause

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("request size must be >= 1")


@dataclass
class Obligation:
    """Idle-check duty registered for one dynamic grant."""

    size: int
    due: int
    lease_id: int
    cause: LeaseCause


@dataclass(frozen=True)
class Granted:
    size: int


@dataclass(frozen=True)
class Rejected:
    pass


def obtaining_ratio(queue: Sequence[Job], owned: int) -> Fraction:
    """Queued node demand over owned nodes, as an exact fraction."""
    if owned <= 0:
        raise ValueError(f"obtaining ratio undefined for owned={owned}")
    return Fraction(sum(j.nodes for j in queue), owned)


def compute_dr1(queue: Sequence[Job], owned: int) -> int:
    return max(sum(j.nodes for j in queue) - owned, 0)


def compute_dr2(queue: Sequence[Job], owned: int) -> int:
    biggest = max((j.nodes for j in queue), default=0)
    return max(biggest - owned, 0)


def _exceeds(ratio: Fraction, threshold: float) -> bool:
    if threshold == float("inf"):
        return False
    return ratio > Fraction(threshold).limit_denominator(10**6)


def decide_request(tre_id: str, queue: Sequence[Job], owned: int, threshold: float,
                   dr2_enabled: bool = True) -> Optional[ResourceRequest]:
    """One scan's decision: DR1 when the obtaining ratio exceeds the threshold,
    otherwise DR2 when the biggest queued job is larger than the owned nodes.
    At most one request per scan."""
    if not queue:
        return None
    ratio = obtaining_ratio(queue, owned)
    if _exceeds(ratio, threshold):
        size = compute_dr1(queue, owned)
        return ResourceRequest(tre_id, size, LeaseCause.DR1) if size > 0 else None
    if dr2_enabled:
        size = compute_dr2(queue, owned)
        if size > 0:
            return ResourceRequest(tre_id, size, LeaseCause.DR2)
    return None


def scan_tick(t: TreState, dr2_enabled: bool = True) -> list[ResourceRequest]:
    if t.lifecycle is not Lifecycle.RUNNING:
        raise LifecycleError(f"scan on TRE {t.tre_id} in state {t.lifecycle.value}")
    req = decide_request(t.tre_id, t.queue, t.owned_nodes, t.params.threshold_ratio, dr2_enabled)
    return [req] if req else []


def idle_check(owned: int, busy: int, initial: int, size: int) -> Optional[int]:
    """Release size for a due obligation, or None to re-arm the timer.

    Idle nodes must cover the whole obligation. The release never takes the
    TRE below its initial nodes.
    """
    if owned - busy < size:
        return None
    release = min(size, owned - initial)
    if release < size:
        log.info("idle release capped at %d of %d to keep %d initial nodes", release, size, initial)
    return max(release, 0)


def provision_decide(req: ResourceRequest, pool_free: Optional[int]):
    """All-or-nothing grant; ``pool_free=None`` is an unbounded pool."""
    if pool_free is None or pool_free >= req.size:
        return Granted(req.size)
    return Rejected()


class Action(str, Enum):
    APPLY = "apply"
    VALIDATED = "validated"
    DEPLOYED = "deployed"
    STARTED = "started"
    DESTROY = "destroy"


class LifecycleError(RuntimeError):
    pass


_TRANSITIONS = {
    (Lifecycle.INEXISTENT, Action.APPLY): Lifecycle.PLANNING,
    (Lifecycle.PLANNING, Action.VALIDATED): Lifecycle.PLANNING,
    (Lifecycle.PLANNING, Action.DEPLOYED): Lifecycle.CREATED,
    (Lifecycle.CREATED, Action.STARTED): Lifecycle.RUNNING,
    (Lifecycle.RUNNING, Action.DESTROY): Lifecycle.DESTROYED,
}


def next_state(state: Lifecycle, action: Action) -> Lifecycle:
    try:
        return _TRANSITIONS[(state, action)]
    except KeyError:
        raise LifecycleError(f"illegal action {action.value} in state {state.value}") from None


def lifecycle_transition(t: TreState, action: Action) -> TreState:
    """Advance the lifecycle in place and return the state.

    Resource effects of Started (initial grant, timers) and Destroy (return of
    all nodes) are carried out by the environment that owns the ledger.
    """
    t.lifecycle = next_state(t.lifecycle, action)
    return t
