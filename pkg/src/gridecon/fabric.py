"""Provider-side simulation: capacity, job execution, failures and pricing agent.

A :class:`Resource` is both the compute fabric and its trading agent: it
quotes prices from its schedule, bids in tenders, accepts directed contracts
and charges consumers through the ledger when their jobs complete.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Optional

from .economy import Ledger, Money, PriceSchedule, Rate, job_cost, price_at
from .kernel import Engine
from .protocols import DealTemplate, proportional_shares

SPACE_SHARED = "space-shared"
BID_PROPORTIONAL = "bid-proportional"


class FabricError(RuntimeError):
    pass


class NoContract(FabricError):
    pass


class NoCapacity(FabricError):
    pass


@dataclass
class ResourceSpec:
    resource_id: str
    node_count: int
    attributes: dict
    schedule: PriceSchedule
    reserve_rate: Rate = 0
    availability_fraction: Fraction = Fraction(1)
    sharing_mode: str = SPACE_SHARED
    organization: str = ""
    location: str = ""
    provider_id: Optional[str] = None

    def __post_init__(self):
        self.availability_fraction = Fraction(self.availability_fraction)
        if self.node_count < 1:
            raise ValueError(f"{self.resource_id}: node_count must be >= 1")
        if not 0 < self.availability_fraction <= 1:
            raise ValueError(f"{self.resource_id}: availability_fraction must be in (0, 1]")
        if self.sharing_mode not in (SPACE_SHARED, BID_PROPORTIONAL):
            raise ValueError(f"{self.resource_id}: unknown sharing mode {self.sharing_mode!r}")
        if self.provider_id is None:
            self.provider_id = self.resource_id

    @property
    def usable_nodes(self) -> int:
        return math.floor(self.node_count * self.availability_fraction)


class JobState(str, Enum):
    QUEUED = "queued"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"


@dataclass
class JobExecution:
    job_id: str
    resource_id: str
    owner: str
    payer: str
    nominal_cpu_seconds: int
    rate_at_start: Rate
    submitted: int
    start: Optional[int] = None
    end: Optional[int] = None
    state: JobState = JobState.QUEUED
    slot: Optional[int] = None
    remaining: Fraction = Fraction(0)
    charged: Money = 0
    attempt: int = 0

    @property
    def duration(self) -> Optional[int]:
        if self.start is None or self.end is None:
            return None
        return self.end - self.start


@dataclass(frozen=True)
class NodeLoss:
    nodes: int = 1


@dataclass(frozen=True)
class Outage:
    duration: int


Listener = Callable[[str, JobExecution, int], None]


class Resource:
    def __init__(self, spec: ResourceSpec, engine: Engine, ledger: Ledger,
                 directory=None, offer_ids: tuple[str, ...] = ()):
        self.spec = spec
        self.engine = engine
        self.ledger = ledger
        self.directory = directory
        self.offer_ids = tuple(offer_ids)
        self.account = f"provider:{spec.resource_id}"
        if self.account not in ledger.accounts:
            ledger.open_account(self.account)
        self.lost_nodes = 0
        self.outage_until: Optional[int] = None
        self.executions: dict[str, JobExecution] = {}
        self.running: dict[str, JobExecution] = {}
        self.waiting: deque[JobExecution] = deque()
        self.contracts: dict[str, Rate] = {}
        self.reservations: dict[str, int] = {}
        self.bids: dict[str, Money] = {}
        self.notify: Optional[Listener] = None
        self._busy_steps: list[tuple[int, int]] = [(0, 0)]
        self._fluid_version = 0
        self._fluid_last = 0
        self._fluid_rates: dict[str, Fraction] = {}
        self._attempts = 0
        rid = spec.resource_id
        engine.on(f"done:{rid}", self._on_done)
        engine.on(f"fluid:{rid}", self._on_fluid)
        engine.on(f"failure:{rid}", self._on_failure)
        engine.on(f"restore:{rid}", self._on_restore)

    # -- trading agent ------------------------------------------------------

    @property
    def resource_id(self) -> str:
        return self.spec.resource_id

    @property
    def provider_id(self) -> str:
        return self.spec.provider_id

    @property
    def attributes(self) -> dict:
        return self.spec.attributes

    @property
    def reserve_rate(self) -> Rate:
        return self.spec.reserve_rate

    def capacity(self, t: Optional[int] = None) -> int:
        if self.in_outage(t):
            return 0
        return max(0, self.spec.usable_nodes - self.lost_nodes)

    def in_outage(self, t: Optional[int] = None) -> bool:
        t = self.engine.now if t is None else t
        return self.outage_until is not None and t < self.outage_until

    def free_slots(self, t: Optional[int] = None) -> int:
        return max(0, self.capacity(t) - len(self.running) - sum(self.reservations.values()))

    def load(self, t: Optional[int] = None) -> Fraction:
        cap = self.capacity(t)
        if cap == 0:
            return Fraction(1)
        return min(Fraction(1), Fraction(len(self.running) + sum(self.reservations.values()), cap))

    def quote_rate(self, consumer: Optional[str], t: int) -> Rate:
        return price_at(self.spec.schedule, t, self.load(t), consumer)

    def tender_bid(self, template: DealTemplate, t: int) -> Optional[Rate]:
        if self.free_slots(t) <= 0:
            return None
        if template.price_hint is not None and template.price_hint < self.reserve_rate:
            return None
        return max(self.quote_rate(template.addressee, t), self.reserve_rate)

    def agree(self, broker: str, rate: Rate) -> None:
        self.contracts[broker] = rate

    def bind_contract(self, broker: str, rate: Rate, t: int) -> None:
        """Directed contract: lock ``rate`` and hold one slot for ``broker``."""
        self.contracts[broker] = rate
        self.reservations[broker] = self.reservations.get(broker, 0) + 1
        self.engine.record(self.provider_id, "negotiation", self.resource_id,
                           amount=rate, detail=f"directed contract accepted for {broker}")

    def set_bid(self, user: str, bid: Money) -> None:
        if bid < 0:
            raise ValueError("bid must be >= 0")
        self.bids[user] = bid
        if self.spec.sharing_mode == BID_PROPORTIONAL and self.running:
            self._fluid_advance(self.engine.now)
            self._fluid_reschedule(self.engine.now)

    # -- execution ----------------------------------------------------------

    def submit_job(self, job_id: str, cpu_seconds: int, owner: str, t: Optional[int] = None,
                   payer: Optional[str] = None, queue: bool = False) -> JobExecution:
        t = self.engine.now if t is None else t
        if owner not in self.contracts:
            raise NoContract(f"{owner} has no contract with {self.resource_id}")
        if job_id in self.running or any(ex.job_id == job_id for ex in self.waiting):
            raise FabricError(f"job {job_id} is already on {self.resource_id}")
        ex = JobExecution(job_id, self.resource_id, owner, payer or f"broker:{owner}",
                          cpu_seconds, self.contracts[owner], submitted=t)
        has_reservation = self.reservations.get(owner, 0) > 0
        shared = self.spec.sharing_mode == BID_PROPORTIONAL and self.capacity(t) > 0
        if has_reservation or shared or self.free_slots(t) > 0:
            if has_reservation:
                self.reservations[owner] -= 1
                if not self.reservations[owner]:
                    del self.reservations[owner]
            self.executions[job_id] = ex
            self._start(ex, t)
        elif queue and not self.in_outage(t):
            self.executions[job_id] = ex
            self.waiting.append(ex)
            self.engine.record(owner, "queue", self.resource_id, job_id)
        else:
            raise NoCapacity(f"{self.resource_id} has no free slot at t={t}")
        return ex

    def _start(self, ex: JobExecution, t: int) -> None:
        ex.state = JobState.RUNNING
        ex.start = t
        ex.remaining = Fraction(ex.nominal_cpu_seconds)
        self._attempts += 1
        ex.attempt = self._attempts
        used = {e.slot for e in self.running.values()}
        ex.slot = next(i for i in range(len(used) + 1) if i not in used)
        self.engine.record(ex.owner, "submit", self.resource_id, ex.job_id, ex.rate_at_start,
                           f"cpu_seconds={ex.nominal_cpu_seconds}")
        if self.spec.sharing_mode == SPACE_SHARED:
            self.running[ex.job_id] = ex
            self.engine.schedule(t + ex.nominal_cpu_seconds, f"done:{self.resource_id}",
                                 (ex.job_id, ex.attempt))
        else:
            self._fluid_advance(t)
            self.running[ex.job_id] = ex
            self._fluid_reschedule(t)
        self._mark_busy(t)

    def _on_done(self, event) -> None:
        job_id, attempt = event.payload
        ex = self.running.get(job_id)
        if ex is None or ex.attempt != attempt:
            return  # failed or superseded before completion
        self._complete(ex, event.at)
        self._drain_waiting(event.at)
        self._emit("completion", ex, event.at)

    def _complete(self, ex: JobExecution, t: int) -> None:
        del self.running[ex.job_id]
        ex.state = JobState.DONE
        ex.end = t
        ex.charged = job_cost(ex.nominal_cpu_seconds, ex.rate_at_start)
        self.ledger.transfer(ex.payer, self.account, ex.charged, t, memo=f"job {ex.job_id} on {self.resource_id}")
        self.engine.record(ex.owner, "complete", self.resource_id, ex.job_id, ex.charged,
                           f"duration={ex.duration}")
        self._mark_busy(t)

    def _fail(self, ex: JobExecution, t: int, reason: str) -> None:
        self.running.pop(ex.job_id, None)
        ex.state = JobState.FAILED
        ex.end = t
        self.engine.record(ex.owner, "failure", self.resource_id, ex.job_id, 0, reason)
        self._mark_busy(t)

    def _drain_waiting(self, t: int) -> None:
        while self.waiting and self.free_slots(t) > 0:
            self._start(self.waiting.popleft(), t)

    def _emit(self, kind: str, ex: JobExecution, t: int) -> None:
        if self.notify is not None:
            self.notify(kind, ex, t)

    # -- bid-proportional execution ------------------------------------------

    def drain_rates(self) -> dict[str, Fraction]:
        """CPU-seconds per second drained from each running job."""
        if not self.running:
            return {}
        per_user: dict[str, list[str]] = {}
        for ex in self.running.values():
            per_user.setdefault(ex.owner, []).append(ex.job_id)
        bids = {u: self.bids.get(u, 1) for u in per_user}
        if not any(bids.values()):
            bids = {u: 1 for u in per_user}
        shares = proportional_shares(bids).shares
        cap = self.capacity()
        rates = {}
        for user, jobs in per_user.items():
            for job in jobs:
                rates[job] = shares[user] * cap / len(jobs)
        return rates

    def _fluid_advance(self, t: int) -> None:
        dt = t - self._fluid_last
        if dt > 0:
            for job_id, rate in self._fluid_rates.items():
                ex = self.running.get(job_id)
                if ex is not None:
                    ex.remaining -= rate * dt
        self._fluid_last = t

    def _fluid_reschedule(self, t: int) -> None:
        self._fluid_version += 1
        self._fluid_rates = self.drain_rates()
        pending = [ex.remaining / self._fluid_rates[j] for j, ex in self.running.items()
                   if self._fluid_rates.get(j)]
        if pending:
            at = t + max(0, math.ceil(min(pending)))
            self.engine.schedule(at, f"fluid:{self.resource_id}", self._fluid_version)

    def _on_fluid(self, event) -> None:
        if event.payload != self._fluid_version:
            return
        t = event.at
        self._fluid_advance(t)
        finished = [ex for ex in self.running.values() if ex.remaining <= 0]
        for ex in sorted(finished, key=lambda e: e.job_id):
            self._complete(ex, t)
        self._drain_waiting(t)
        if self.running:
            self._fluid_reschedule(t)
        for ex in sorted(finished, key=lambda e: e.job_id):
            self._emit("completion", ex, t)

    # -- failures -----------------------------------------------------------

    def inject_failure(self, t: int, failure) -> None:
        self.engine.schedule(t, f"failure:{self.resource_id}", failure)

    def _on_failure(self, event) -> None:
        self.apply_failure(event.payload, event.at)

    def apply_failure(self, failure, t: int) -> list[JobExecution]:
        proportional = self.spec.sharing_mode == BID_PROPORTIONAL
        if proportional:
            self._fluid_advance(t)
        if isinstance(failure, NodeLoss):
            self.lost_nodes += failure.nodes
            cap = self.capacity(t)
            ranked = sorted(self.running.values(), key=lambda e: e.slot)
            if proportional:
                victims = ranked if cap == 0 else []  # survivors just drain slower
            else:
                victims = [e for e in ranked if e.slot >= cap]
            detail = f"node-loss({failure.nodes})"
        elif isinstance(failure, Outage):
            self.outage_until = t + failure.duration
            victims = list(self.running.values()) + list(self.waiting)
            self.waiting.clear()
            self.reservations.clear()
            if self.directory is not None:
                for oid in self.offer_ids:
                    self.directory.suspend(oid, self.outage_until)
            self.engine.schedule(self.outage_until, f"restore:{self.resource_id}")
            detail = f"outage({failure.duration})"
        else:
            raise TypeError(f"unknown failure {failure!r}")
        self.engine.record(self.provider_id, "resource-failure", self.resource_id, detail=detail)
        victims = sorted(victims, key=lambda e: e.job_id)
        for ex in victims:
            self._fail(ex, t, detail)
        if proportional and self.running:
            self._fluid_reschedule(t)
        for ex in victims:
            self._emit("failure", ex, t)
        return victims

    def _on_restore(self, event) -> None:
        if self.outage_until is not None and event.at >= self.outage_until:
            self.outage_until = None
            self.engine.record(self.provider_id, "resource-restored", self.resource_id)


    # -- accounting ---------------------------------------------------------

    def _mark_busy(self, t: int) -> None:
        if self.spec.sharing_mode == SPACE_SHARED:
            busy = len(self.running)
        else:
            busy = self.capacity(t) if self.running else 0
        if self._busy_steps[-1][0] == t:
            self._busy_steps[-1] = (t, busy)
        else:
            self._busy_steps.append((t, busy))

    def busy_node_seconds(self, start: int, end: int) -> int:
        total = 0
        steps = self._busy_steps + [(max(end, self._busy_steps[-1][0]), 0)]
        for (t0, busy), (t1, _) in zip(steps, steps[1:]):
            lo, hi = max(t0, start), min(t1, end)
            if hi > lo:
                total += busy * (hi - lo)
        return total

    def utilization(self, start: int, end: int) -> Fraction:
        if end < start:
            raise ValueError("window end precedes start")
        if end > self.engine.now:
            raise ValueError("utilization window must lie in the simulated past")
        if end == start:
            return Fraction(0)
        denom = self.spec.node_count * self.spec.availability_fraction * (end - start)
        return Fraction(self.busy_node_seconds(start, end)) / denom

    def revenue(self) -> Money:
        return self.ledger.inflow(self.account)


def effective_rate_share(resource: Resource, bids: dict[str, Money]) -> dict[str, Fraction]:
    if resource.spec.sharing_mode != BID_PROPORTIONAL:
        raise FabricError(f"{resource.resource_id} is not bid-proportional")
    return proportional_shares(bids).shares


def utilization(resource: Resource, start: int, end: int) -> Fraction:
    return resource.utilization(start, end)
