"""Per-user grid resource broker with deadline and budget constrained scheduling.

The broker discovers offers in the market directory, establishes a price with
each provider through the configured negotiation model, probes every
candidate once (calibration), then repeatedly plans the unfinished jobs with
either the cost- or the time-optimising planner and dispatches them into free
slots without ever committing more than its budget.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Any, Optional, Sequence

from .directory import MarketDirectory, ServiceOffer
from .economy import Ledger, Money, Rate, job_cost
from .fabric import JobExecution, Resource
from .kernel import Engine
from .protocols import (
    Auction,
    AuctionState,
    BargainSession,
    BargainState,
    Bidder,
    DealTemplate,
    ProtocolError,
    Quote,
    Tender,
    TenderState,
    announce_tender,
    award_tender,
    collect_bids,
    negotiate_bargain,
    request_quote,
    run_auction,
    solicit_bids,
)

COST_OPT = "cost_opt"
TIME_OPT = "time_opt"
MODES = (COST_OPT, TIME_OPT)


@dataclass(frozen=True)
class UserRequirements:
    deadline: int
    budget: Money
    mode: str = COST_OPT
    eligibility: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.deadline <= 0:
            raise ValueError("deadline must be > 0")
        if self.budget <= 0:
            raise ValueError("budget must be > 0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


@dataclass(frozen=True)
class Job:
    job_id: str
    cpu_seconds: int


@dataclass(frozen=True)
class JobSet:
    jobs: tuple[Job, ...]

    def __post_init__(self):
        if not self.jobs:
            raise ValueError("a job set must not be empty")
        if any(j.cpu_seconds <= 0 for j in self.jobs):
            raise ValueError("job durations must be > 0")

    def __len__(self):
        return len(self.jobs)

    @classmethod
    def uniform(cls, count: int, cpu_seconds: int, prefix: str = "job", jitter: int = 0, rng=None) -> "JobSet":
        """``count`` jobs of ``cpu_seconds`` each, optionally jittered by up to +-``jitter`` s."""
        width = len(str(count))
        jobs = []
        for i in range(count):
            secs = cpu_seconds
            if jitter:
                secs += rng.randint(-jitter, jitter)
            jobs.append(Job(f"{prefix}{i + 1:0{width}d}", max(1, secs)))
        return cls(tuple(jobs))


@dataclass
class ResourceProfile:
    resource_id: str
    negotiated_rate: Rate
    job_duration: int
    capacity_estimate: int
    observed_job_rate: float = 0.0
    last_update: int = 0
    trusted: bool = False

    @property
    def job_cost(self) -> Money:
        return self.negotiated_rate * self.job_duration


@dataclass
class SchedulePlan:
    assignments: dict[str, int]
    projected_cost: Money
    projected_makespan: int
    feasible: bool
    reason: Optional[str] = None


def _cost_order(profiles: Sequence[ResourceProfile]) -> list[ResourceProfile]:
    return sorted(profiles, key=lambda p: (p.job_cost, p.negotiated_rate, p.resource_id))


def _cheapest_fill(ordered: Sequence[ResourceProfile], jobs: int, caps: dict[str, int]) -> dict[str, int]:
    counts = {}
    for p in ordered:
        if jobs <= 0:
            break
        n = min(jobs, caps[p.resource_id])
        if n > 0:
            counts[p.resource_id] = n
            jobs -= n
    return counts


def _summarise(ordered, counts) -> tuple[Money, int]:
    by_id = {p.resource_id: p for p in ordered}
    cost = sum(n * by_id[r].job_cost for r, n in counts.items())
    makespan = max((math.ceil(n / by_id[r].capacity_estimate) * by_id[r].job_duration
                    for r, n in counts.items()), default=0)
    return cost, makespan


def plan(profiles: Sequence[ResourceProfile], unfinished: int, remaining_budget: Money,
         remaining_time: int, mode: str) -> SchedulePlan:
    """Assign ``unfinished`` identical jobs to resources.

    cost_opt fills resources cheapest-per-job first, each up to the number of
    jobs it can finish before the deadline (``capacity x floor(time / duration)``).

    time_opt looks for the earliest makespan whose slots can be filled
    cheapest-first within budget. Candidate makespans are the finish instants
    ``k x duration`` of every slot, so this is list scheduling onto the
    earliest-finishing slots with the budget as a hard cap.
    """
    if not profiles:
        raise ValueError("plan needs at least one resource profile")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    ordered = _cost_order([p for p in profiles if p.capacity_estimate > 0 and p.job_duration > 0])
    if unfinished <= 0:
        return SchedulePlan({}, 0, 0, True)
    if not ordered:
        return SchedulePlan({}, 0, 0, False, "no capacity")

    if mode == COST_OPT:
        caps = {p.resource_id: p.capacity_estimate * (max(remaining_time, 0) // p.job_duration) for p in ordered}
        counts = _cheapest_fill(ordered, unfinished, caps)
        cost, makespan = _summarise(ordered, counts)
        if sum(counts.values()) < unfinished:
            return SchedulePlan(counts, cost, makespan, False, "deadline")
        if cost > remaining_budget:
            return SchedulePlan(counts, cost, makespan, False, "budget")
        return SchedulePlan(counts, cost, makespan, True)

    cheapest = ordered[0].job_cost
    if unfinished * cheapest > remaining_budget:
        affordable = remaining_budget // cheapest if cheapest else unfinished
        caps = {p.resource_id: 0 for p in ordered}
        caps[ordered[0].resource_id] = max(0, affordable)
        counts = _cheapest_fill(ordered, unfinished, caps)
        cost, makespan = _summarise(ordered, counts)
        return SchedulePlan(counts, cost, makespan, False, "budget")
    horizons = sorted({k * p.job_duration for p in ordered
                       for k in range(1, math.ceil(unfinished / p.capacity_estimate) + 1)})
    for horizon in horizons:
        caps = {p.resource_id: p.capacity_estimate * (horizon // p.job_duration) for p in ordered}
        if sum(caps.values()) < unfinished:
            continue
        counts = _cheapest_fill(ordered, unfinished, caps)
        cost, makespan = _summarise(ordered, counts)
        if cost <= remaining_budget:
            break
    feasible = makespan <= remaining_time
    return SchedulePlan(counts, cost, makespan, feasible, None if feasible else "deadline")


# -- broker state and events ---------------------------------------------------

@dataclass(frozen=True)
class Completion:
    job_id: str
    resource_id: str
    start: int
    end: int
    cost: Money


@dataclass(frozen=True)
class BrokerEvent:
    kind: str  # completion | failure | price-change | epoch-tick
    at: int
    resource: Optional[str] = None
    job: Optional[Job] = None
    duration: Optional[int] = None
    rate: Optional[Rate] = None
    capacity: Optional[int] = None


@dataclass
class BrokerState:
    broker_id: str
    requirements: UserRequirements
    jobs_total: int
    ledger: Ledger
    account: str
    submitted_at: int = 0
    epoch: int = 60
    ema_alpha: float = 0.5
    profiles: dict[str, ResourceProfile] = field(default_factory=dict)
    pending: deque = field(default_factory=deque)
    in_flight: dict[str, tuple[str, Job, Money]] = field(default_factory=dict)
    completions: list[Completion] = field(default_factory=list)
    epoch_completions: dict[str, int] = field(default_factory=dict)
    infeasible_plans: int = 0

    @property
    def deadline_at(self) -> int:
        return self.submitted_at + self.requirements.deadline

    @property
    def spent(self) -> Money:
        return sum(c.cost for c in self.completions)

    @property
    def committed(self) -> Money:
        return sum(cost for _, _, cost in self.in_flight.values())

    def in_flight_on(self, resource_id: str) -> int:
        return sum(1 for rid, _, _ in self.in_flight.values() if rid == resource_id)

    def plannable(self) -> list[ResourceProfile]:
        return [p for p in self.profiles.values() if p.trusted and p.capacity_estimate > 0]


def reschedule(event: BrokerEvent, state: BrokerState) -> Optional[SchedulePlan]:
    """Fold ``event`` into the resource profiles and replan the unfinished jobs."""
    prof = state.profiles.get(event.resource) if event.resource else None
    if event.kind == "completion" and prof is not None:
        prof.job_duration = event.duration  # latest measurement replaces the estimate
        if not prof.trusted:
            prof.trusted = True
            prof.observed_job_rate = prof.capacity_estimate * state.epoch / event.duration
        state.epoch_completions[prof.resource_id] = state.epoch_completions.get(prof.resource_id, 0) + 1
        prof.last_update = event.at
    elif event.kind == "failure":
        if event.job is not None:
            state.pending.appendleft(event.job)
        if prof is not None:
            if event.capacity is not None:
                prof.capacity_estimate = event.capacity
            prof.last_update = event.at
    elif event.kind == "price-change" and prof is not None:
        prof.negotiated_rate = event.rate
        prof.last_update = event.at
    elif event.kind == "epoch-tick":
        a = state.ema_alpha
        for rid, p in sorted(state.profiles.items()):
            if p.trusted:
                p.observed_job_rate = a * state.epoch_completions.get(rid, 0) + (1 - a) * p.observed_job_rate
        state.epoch_completions.clear()
    return replan(state, event.at)


def replan(state: BrokerState, t: int) -> Optional[SchedulePlan]:
    """Plan the unfinished jobs over the trusted resources as of ``t``."""
    profiles = state.plannable()
    if not profiles:
        return None
    planned_ids = {p.resource_id for p in profiles}
    unfinished = len(state.pending) + sum(1 for rid, _, _ in state.in_flight.values() if rid in planned_ids)
    committed_elsewhere = sum(c for rid, _, c in state.in_flight.values() if rid not in planned_ids)
    remaining_budget = state.requirements.budget - state.spent - committed_elsewhere
    remaining_time = state.deadline_at - t
    result = plan(profiles, unfinished, remaining_budget, remaining_time, state.requirements.mode)
    if not result.feasible:
        state.infeasible_plans += 1
    return result


@dataclass
class ScheduleReport:
    broker_id: str
    mode: str
    total_cost: Money
    makespan: int
    jobs_total: int
    jobs_completed: int
    per_resource: dict[str, int]
    rates: dict[str, Rate]
    deadline: int
    budget: Money
    deadline_met: bool
    budget_respected: bool
    infeasible_plans: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScheduleReport":
        return cls(**data)


def settle(state: BrokerState) -> ScheduleReport:
    spent = state.ledger.outflow(state.account)
    charged = sum(c.cost for c in state.completions)
    if spent != charged:
        raise AssertionError(f"{state.broker_id}: ledger outflow {spent} != charged {charged}")
    per_resource: dict[str, int] = {}
    for c in state.completions:
        per_resource[c.resource_id] = per_resource.get(c.resource_id, 0) + 1
    last = max((c.end for c in state.completions), default=None)
    makespan = 0 if last is None else last - state.submitted_at
    done = len(state.completions)
    req = state.requirements
    return ScheduleReport(
        broker_id=state.broker_id,
        mode=req.mode,
        total_cost=spent,
        makespan=makespan,
        jobs_total=state.jobs_total,
        jobs_completed=done,
        per_resource=dict(sorted(per_resource.items())),
        rates={rid: p.negotiated_rate for rid, p in sorted(state.profiles.items())},
        deadline=req.deadline,
        budget=req.budget,
        deadline_met=done == state.jobs_total and done > 0 and makespan <= req.deadline,
        budget_respected=spent <= req.budget,
        infeasible_plans=state.infeasible_plans,
    )


# -- discovery -----------------------------------------------------------------

@dataclass
class Grid:
    engine: Engine
    ledger: Ledger
    directory: MarketDirectory
    resources: dict[str, Resource]
    brokers: dict[str, "Broker"] = field(default_factory=dict)

    def __post_init__(self):
        for resource in self.resources.values():
            resource.notify = self._route

    def _route(self, kind: str, ex: JobExecution, t: int) -> None:
        broker = self.brokers.get(ex.owner)
        if broker is not None:
            broker.on_resource_event(kind, ex, t)


@dataclass(frozen=True)
class NegotiationConfig:
    model: str = "commodity"
    params: dict = field(default_factory=dict)


def _say(grid: Grid, broker_id: str, resource: Optional[str], detail: str, amount=None) -> None:
    grid.engine.record(broker_id, "negotiation", resource, amount=amount, detail=detail)


def _regular_quote(offer, resource, broker_id, t) -> Optional[Quote]:
    if "commodity" not in offer.negotiation_models:
        return None
    return request_quote(offer, t, resource.load(t), broker_id)


def _negotiate_offer(grid, broker_id, offer, resource, model, params, t, consumer_class):
    if model == "commodity":
        q = request_quote(offer, t, resource.load(t), broker_id)
        _say(grid, broker_id, resource.resource_id, f"quote {offer.offer_id}", q.rate)
        return q
    if model == "proportional":
        q = Quote(offer.provider, resource.quote_rate(broker_id, t), offer.valid_until, offer.offer_id)
        bid = params.get("bid", 1)
        resource.set_bid(broker_id, bid)
        _say(grid, broker_id, resource.resource_id, f"proportional bid {bid} at rate {q.rate}", bid)
        return q
    if model == "posted":
        regular = _regular_quote(offer, resource, broker_id, t)
        specials = grid.directory.specials(t, offer.offer_id, consumer_class)
        if specials and (regular is None or specials[0].special_rate < regular.rate):
            sp = specials[0]
            _say(grid, broker_id, resource.resource_id, f"posted special {sp.offer_id}", sp.special_rate)
            valid = sp.window[1] - 1 if sp.window else offer.valid_until
            return Quote(offer.provider, sp.special_rate, valid, offer.offer_id, {"special": sp.offer_id})
        if regular is not None:
            _say(grid, broker_id, resource.resource_id, f"quote {offer.offer_id}", regular.rate)
        return regular
    if model == "bargain":
        ask = resource.quote_rate(broker_id, t)
        reserve = min(resource.reserve_rate, ask)
        try:
            session = BargainSession(
                broker_offer=min(params.get("start", 0), params.get("limit", ask)),
                gsp_ask=ask,
                broker_limit=params.get("limit", ask),
                gsp_reserve=reserve,
                broker_step=params.get("step", 1),
                gsp_step=params.get("gsp_step", max(1, (ask - reserve) // 4)),
                max_rounds=params.get("max_rounds", 10),
            )
        except ProtocolError as exc:
            _say(grid, broker_id, resource.resource_id, f"bargain rejected: {exc}")
            return None
        negotiate_bargain(session)
        for rnd, bo, ga in session.history:
            _say(grid, broker_id, resource.resource_id, f"bargain round {rnd} offer={bo} ask={ga}")
        if session.state is BargainState.AGREED:
            _say(grid, broker_id, resource.resource_id, "bargain agreed", session.agreed_rate)
            return Quote(offer.provider, session.agreed_rate, offer.valid_until, offer.offer_id, {"bargain": True})
        _say(grid, broker_id, resource.resource_id, "bargain abandoned")
        return None
    if model == "auction":
        kind = params.get("kind", "vickrey")
        value = params.get("value", resource.quote_rate(broker_id, t))
        auction = Auction(kind, item=f"{offer.offer_id}@{t}", reserve=resource.reserve_rate,
                          increment=params.get("increment", 1),
                          start_price=params.get("start_price", max(value, resource.reserve_rate) * 2 + 1),
                          decrement=params.get("decrement", 1), opened_at=t)
        run_auction(auction, [Bidder(broker_id, value)])
        for line in auction.log:
            _say(grid, broker_id, resource.resource_id, f"auction {kind}: {line}")
        if auction.state is AuctionState.CLOSED:
            return Quote(offer.provider, auction.price, offer.valid_until, offer.offer_id, {"auction": kind})
        return None
    raise ProtocolError(f"unknown negotiation model {model!r}")


def _tender_round(grid, broker_id, offers, requirements, params, t, jobs_hint):
    """Announce one tender to every tender-capable offer; each bid becomes a quote."""
    tid = f"{broker_id}-tender-{t}"
    template = DealTemplate(addressee=broker_id, eligibility=dict(requirements.eligibility),
                            job_count=jobs_hint[0], cpu_seconds=jobs_hint[1],
                            expiration=t + params.get("bid_window", 1),
                            price_hint=params.get("price_hint"))
    tender = Tender(tid, broker_id, template, announced_at=t)
    announce_tender(grid.directory, tender)
    _say(grid, broker_id, None, f"tender {tid} announced")
    by_resource = {o.resource_ref: o for o in offers}
    contractors = [grid.resources[r] for r in sorted(by_resource)]
    solicit_bids(tender, contractors, t)
    bids = collect_bids(tender, template.expiration)
    award_tender(tender, bids, template.expiration)
    quotes = {}
    for b in bids:
        res = next(r for r in contractors if r.provider_id == b.gsp)
        o = by_resource[res.resource_id]
        _say(grid, broker_id, res.resource_id, f"tender bid from {b.gsp}", b.rate)
        quotes[o.offer_id] = Quote(o.provider, b.rate, o.valid_until, o.offer_id, {"tender": tid})
    if tender.state is TenderState.AWARDED:
        _say(grid, broker_id, None, f"tender {tid} awarded to {tender.contract.gsp}", tender.contract.rate)
    else:
        _say(grid, broker_id, None, f"tender {tid} failed: no bids")
    return quotes


def discover(grid: Grid, broker_id: str, requirements: UserRequirements, t: int,
             negotiation: NegotiationConfig = NegotiationConfig(), offer_ids: Optional[Sequence[str]] = None,
             consumer_class: Optional[str] = None, jobs_hint: tuple[int, int] = (1, 1)) -> list[tuple[ServiceOffer, Quote]]:
    """Find eligible offers and price each through the negotiation model.

    Offers that do not support the configured model fall back to a commodity
    quote when they allow it and are skipped otherwise. Results are ordered by
    rate, then provider id. Every priced offer also becomes a contract with
    its provider at the quoted rate.
    """
    offers = grid.directory.query(requirements.eligibility, t)
    if offer_ids is not None:
        wanted = set(offer_ids)
        offers = [o for o in offers if o.offer_id in wanted]
    model = negotiation.model
    params = negotiation.params
    found = []
    tender_offers = [o for o in offers if model == "tender" and "tender" in o.negotiation_models]
    tender_quotes = _tender_round(grid, broker_id, tender_offers, requirements, params, t, jobs_hint) \
        if tender_offers else {}
    for offer in offers:
        resource = grid.resources[offer.resource_ref]
        if offer in tender_offers:
            quote = tender_quotes.get(offer.offer_id)
        elif model in offer.negotiation_models:
            quote = _negotiate_offer(grid, broker_id, offer, resource, model, params, t, consumer_class)
        elif "commodity" in offer.negotiation_models:
            quote = _negotiate_offer(grid, broker_id, offer, resource, "commodity", params, t, consumer_class)
        else:
            quote = None
        if quote is not None:
            found.append((offer, quote))
    found.sort(key=lambda oq: (oq[1].rate, oq[0].provider, oq[0].offer_id))
    return found


# -- the broker actor ----------------------------------------------------------

class Broker:
    def __init__(self, broker_id: str, jobset: JobSet, requirements: UserRequirements, grid: Grid,
                 negotiation: NegotiationConfig = NegotiationConfig(), start: int = 0, epoch: int = 60,
                 ema_alpha: float = 0.5, offer_ids: Optional[Sequence[str]] = None,
                 consumer_class: Optional[str] = None):
        if epoch <= 0:
            raise ValueError("epoch must be > 0")
        self.grid = grid
        self.jobset = jobset
        self.negotiation = negotiation
        self.offer_ids = offer_ids
        self.consumer_class = consumer_class
        self.nominal = max(j.cpu_seconds for j in jobset.jobs)
        if broker_id in grid.brokers:
            raise ValueError(f"duplicate broker id {broker_id!r}")
        grid.brokers[broker_id] = self
        account = f"broker:{broker_id}"
        grid.ledger.open_account(account)
        grid.ledger.mint(account, requirements.budget, start, memo=f"budget for {broker_id}")
        self.state = BrokerState(broker_id, requirements, len(jobset), grid.ledger, account,
                                 submitted_at=start, epoch=epoch, ema_alpha=ema_alpha,
                                 pending=deque(jobset.jobs))
        self.candidates: dict[str, tuple[ServiceOffer, Quote]] = {}
        self.probes: dict[str, str] = {}
        self.last_plan: Optional[SchedulePlan] = None
        self.aborted = False
        engine = grid.engine
        engine.on(f"start:{broker_id}", lambda ev: self._start(ev.at))
        engine.on(f"epoch:{broker_id}", lambda ev: self._tick(ev.at))
        engine.on(f"replan:{broker_id}", lambda ev: self._deferred_dispatch(ev.at))
        self._replan_queued = False
        engine.schedule(start, f"start:{broker_id}")

    @property
    def broker_id(self) -> str:
        return self.state.broker_id

    @property
    def finished(self) -> bool:
        s = self.state
        return not s.in_flight and (not s.pending or self.aborted)

    def _record(self, kind, resource=None, job=None, amount=None, detail=""):
        self.grid.engine.record(self.broker_id, kind, resource, job, amount, detail)

    # -- discovery and calibration --------------------------------------------

    def _refresh_candidates(self, t: int) -> list[BrokerEvent]:
        found = discover(self.grid, self.broker_id, self.state.requirements, t, self.negotiation,
                         self.offer_ids, self.consumer_class, (len(self.state.pending), self.nominal))
        best: dict[str, tuple[ServiceOffer, Quote]] = {}
        for offer, quote in found:
            best.setdefault(offer.resource_ref, (offer, quote))
        # an earlier agreement stands while its offer is still listed, e.g. a busy tenderer that skipped this round
        listed = {o.offer_id for o in self.grid.directory.query(self.state.requirements.eligibility, t)}
        for rid, (offer, quote) in self.candidates.items():
            if rid not in best and offer.offer_id in listed:
                best[rid] = (offer, quote)
        changes = []
        for rid, (offer, quote) in sorted(best.items()):
            resource = self.grid.resources[rid]
            resource.agree(self.broker_id, quote.rate)
            prof = self.state.profiles.get(rid)
            if prof is None:
                self.state.profiles[rid] = ResourceProfile(rid, quote.rate, self.nominal,
                                                           resource.capacity(t), last_update=t)
            elif prof.negotiated_rate != quote.rate:
                changes.append(BrokerEvent("price-change", t, rid, rate=quote.rate))
        for rid, prof in self.state.profiles.items():
            prof.capacity_estimate = self.grid.resources[rid].capacity(t) if rid in best else 0
        self.candidates = best
        return changes

    def _probe(self, t: int) -> None:
        s = self.state
        for rid in sorted(self.candidates):
            prof = s.profiles[rid]
            if prof.trusted or rid in self.probes or not s.pending:
                continue
            resource = self.grid.resources[rid]
            if resource.free_slots(t) <= 0:
                continue
            if self._submit(resource, t, probe=True) is None:
                break

    def _start(self, t: int) -> None:
        self._record("start", amount=self.state.requirements.budget,
                     detail=f"jobs={len(self.jobset)} deadline={self.state.requirements.deadline} "
                            f"mode={self.state.requirements.mode}")
        self._refresh_candidates(t)
        if not self.candidates:
            self._record("infeasible", detail="no eligible offers")
        self._probe(t)
        self.grid.engine.schedule(t + self.state.epoch, f"epoch:{self.broker_id}")

    # -- submission ----------------------------------------------------------

    def _contract_rate(self, rid: str, job: Job, t: int) -> Optional[Rate]:
        offer, quote = self.candidates[rid]
        special = (quote.conditions or {}).get("special")
        if special is None:
            return quote.rate
        if self.grid.directory.claim_special(special, job.cpu_seconds, t, self.consumer_class):
            return quote.rate
        resource = self.grid.resources[rid]
        regular = _regular_quote(offer, resource, self.broker_id, t)
        if regular is None:
            return None
        self.candidates[rid] = (offer, regular)
        resource.agree(self.broker_id, regular.rate)
        self.state.profiles[rid].negotiated_rate = regular.rate
        _say(self.grid, self.broker_id, rid, f"special {special} exhausted, regular quote", regular.rate)
        return regular.rate

    def _submit(self, resource: Resource, t: int, probe: bool = False) -> Optional[JobExecution]:
        s = self.state
        job = s.pending[0]
        rid = resource.resource_id
        rate = self._contract_rate(rid, job, t)
        if rate is None:
            return None
        cost = job_cost(job.cpu_seconds, rate)
        if s.spent + s.committed + cost > s.requirements.budget:
            self._record("budget-hold", rid, job.job_id, cost)
            return None
        s.pending.popleft()
        ex = resource.submit_job(job.job_id, job.cpu_seconds, self.broker_id, t, payer=s.account)
        s.in_flight[job.job_id] = (rid, job, cost)
        if probe:
            self.probes[rid] = job.job_id
            self._record("probe", rid, job.job_id, cost)
        return ex

    def _dispatch(self, result: Optional[SchedulePlan], t: int) -> None:
        s = self.state
        if result is None or self.aborted:
            return
        if self.last_plan is None or result.assignments != self.last_plan.assignments \
                or result.feasible != self.last_plan.feasible:
            detail = " ".join(f"{r}={n}" for r, n in sorted(result.assignments.items()))
            status = "feasible" if result.feasible else f"infeasible({result.reason})"
            self._record("plan", amount=result.projected_cost,
                         detail=f"{status} makespan={result.projected_makespan} {detail}")
        self.last_plan = result
        for p in _cost_order(s.plannable()):
            rid = p.resource_id
            if t + p.job_duration > s.deadline_at:
                continue
            resource = self.grid.resources[rid]
            want = result.assignments.get(rid, 0) - s.in_flight_on(rid)
            n = min(want, resource.free_slots(t), len(s.pending))
            for _ in range(max(0, n)):
                if self._submit(resource, t) is None:
                    return

    # -- event handling --------------------------------------------------------

    def on_resource_event(self, kind: str, ex: JobExecution, t: int) -> None:
        s = self.state
        entry = s.in_flight.pop(ex.job_id, None)
        if entry is None:
            return
        rid, job, _ = entry
        was_probe = self.probes.get(rid) == ex.job_id
        if was_probe:
            del self.probes[rid]
        if kind == "completion":
            s.completions.append(Completion(ex.job_id, rid, ex.start, ex.end, ex.charged))
            event = BrokerEvent("completion", t, rid, job, duration=ex.duration)
        else:
            if was_probe and rid in s.profiles:
                s.profiles[rid].trusted = False
            event = BrokerEvent("failure", t, rid, job, capacity=self.grid.resources[rid].capacity(t))
        reschedule(event, s)
        # dispatch once all events of this instant are folded in
        if not self._replan_queued:
            self._replan_queued = True
            self.grid.engine.schedule(t, f"replan:{self.broker_id}")

    def _deferred_dispatch(self, t: int) -> None:
        self._replan_queued = False
        if not self.aborted:
            self._dispatch(replan(self.state, t), t)
        self._maybe_finish(t)

    def _tick(self, t: int) -> None:
        s = self.state
        if t >= s.deadline_at and s.pending and not self.aborted:
            self.aborted = True
            self._record("abort", amount=len(s.pending), detail="deadline reached; remaining jobs dropped")
        if not self.aborted:
            for change in self._refresh_candidates(t):
                reschedule(change, s)
            self._probe(t)
            self._dispatch(reschedule(BrokerEvent("epoch-tick", t), s), t)
        if not self._maybe_finish(t) and not self.aborted:
            self.grid.engine.schedule(t + s.epoch, f"epoch:{self.broker_id}")

    def _maybe_finish(self, t: int) -> bool:
        if self.finished and not getattr(self, "_done_recorded", False):
            self._done_recorded = True
            s = self.state
            self._record("done", amount=s.spent, detail=f"completed={len(s.completions)}/{s.jobs_total}")
        return self.finished

    def report(self) -> ScheduleReport:
        return settle(self.state)
