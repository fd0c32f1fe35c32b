import random
from collections import deque
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from gridecon.broker import (
    COST_OPT,
    TIME_OPT,
    Broker,
    BrokerEvent,
    BrokerState,
    Completion,
    Grid,
    JobSet,
    NegotiationConfig,
    ResourceProfile,
    UserRequirements,
    discover,
    plan,
    replan,
    reschedule,
    settle,
)
from gridecon.directory import MarketDirectory, PostedSpecial, ServiceOffer
from gridecon.economy import Ledger, PriceSchedule
from gridecon.fabric import NodeLoss, Outage, Resource, ResourceSpec
from gridecon.kernel import Engine
from oracles import best_cost, best_makespan, cost_and_makespan

WWG = [("monash", 60, 2, Fraction(2, 15)), ("tokyo", 2, 3, 1), ("prosecco", 1, 3, 1),
       ("barbera", 1, 4, 1), ("anl", 8, 7, 1), ("isi", 10, 8, 1)]


def grid(resources, models=("commodity",), attrs=None, reserve=0):
    eng, led, gmd = Engine(1), Ledger(), MarketDirectory()
    res = {}
    for rid, nodes, rate, avail in resources:
        a = dict(attrs or {"os": "linux"})
        sched = PriceSchedule.flat(rate)
        gmd.publish(ServiceOffer(f"{rid}-cpu", rid, rid, a, sched, frozenset(models)))
        res[rid] = Resource(ResourceSpec(rid, nodes, a, sched, reserve_rate=reserve,
                                         availability_fraction=avail), eng, led, gmd, (f"{rid}-cpu",))
    return Grid(eng, led, gmd, res)


def prof(rid, rate, dur, cap):
    return ResourceProfile(rid, rate, dur, cap, trusted=True)


# -- plan ------------------------------------------------------------------------

def test_cost_opt_small_example():
    p = plan([prof("r1", 1, 10, 1), prof("r2", 2, 10, 1)], 4, 10**6, 25, COST_OPT)
    assert p.assignments == {"r1": 2, "r2": 2} and p.projected_cost == 60 and p.feasible


def test_time_opt_small_example():
    p = plan([prof("r1", 1, 10, 1), prof("r2", 2, 10, 1)], 4, 10**6, 25, TIME_OPT)
    assert p.assignments == {"r1": 2, "r2": 2} and p.projected_makespan == 20 and p.feasible


@pytest.mark.parametrize("mode", [COST_OPT, TIME_OPT])
def test_budget_boundary(mode):
    p = plan([prof("r", 2, 300, 1)], 1, 599, 10**6, mode)
    assert not p.feasible and p.reason == "budget"
    assert plan([prof("r", 2, 300, 1)], 1, 600, 10**6, mode).feasible


def test_cost_opt_reports_deadline_binding():
    p = plan([prof("r", 1, 300, 1)], 3, 10**6, 600, COST_OPT)
    assert not p.feasible and p.reason == "deadline" and p.assignments == {"r": 2}


def test_plan_needs_profiles():
    with pytest.raises(ValueError):
        plan([], 1, 1, 1, COST_OPT)


def test_time_opt_beats_earliest_finish_trap():
    # greedy earliest-finish would take X first, then be forced onto the slow Z
    ps = [prof("X", 10, 10, 1), prof("Y", 50 // 12 + 1, 12, 1), prof("Z", 1, 100, 1)]
    ps[1] = ResourceProfile("Y", 4, 12, 1, trusted=True)  # 48 per job
    p = plan(ps, 3, 102 + 48, 10**6, TIME_OPT)
    assert p.projected_makespan == best_makespan(ps, 3, 150)


profiles_st = st.lists(st.tuples(st.integers(0, 9), st.integers(1, 6), st.integers(1, 3)), min_size=1, max_size=4)


def as_profiles(raw):
    return [prof(f"r{i}", rate, dur * 5, cap) for i, (rate, dur, cap) in enumerate(raw)]


@settings(max_examples=150, deadline=None)
@given(profiles_st, st.integers(1, 8), st.integers(0, 400), st.integers(0, 60))
def test_planners_match_brute_force(raw, jobs, budget, horizon):
    ps = as_profiles(raw)
    c = plan(ps, jobs, budget, horizon, COST_OPT)
    t = plan(ps, jobs, budget, horizon, TIME_OPT)
    for p in (c, t):
        assert sum(p.assignments.values()) <= jobs
        counts = [p.assignments.get(x.resource_id, 0) for x in ps]
        assert (p.projected_cost, p.projected_makespan) == cost_and_makespan(counts, ps)
        if p.feasible:
            assert p.projected_cost <= budget and p.projected_makespan <= horizon
            assert sum(p.assignments.values()) == jobs
    optimal_cost = best_cost(ps, jobs, horizon)
    if optimal_cost is not None and optimal_cost <= budget:
        assert c.feasible and c.projected_cost == optimal_cost
    else:
        assert not c.feasible
    optimal_span = best_makespan(ps, jobs, budget)
    if optimal_span is None:
        assert not t.feasible and t.reason == "budget"
    else:
        assert t.projected_makespan == optimal_span
    if c.feasible and t.feasible:
        assert c.projected_cost <= t.projected_cost
        assert t.projected_makespan <= c.projected_makespan


# -- settle ------------------------------------------------------------------------

def recorded_state(alloc, rates, secs=300):
    led = Ledger()
    led.open_account("broker:u", 396000)
    state = BrokerState("u", UserRequirements(7200, 396000, COST_OPT), sum(alloc), led, "broker:u")
    for i, (n, rate) in enumerate(zip(alloc, rates)):
        rid = f"r{i}"
        led.open_account(f"provider:{rid}")
        state.profiles[rid] = ResourceProfile(rid, rate, secs, 1)
        for k in range(n):
            cost = secs * rate
            led.transfer("broker:u", f"provider:{rid}", cost, secs)
            state.completions.append(Completion(f"{rid}-{k}", rid, 0, secs, cost))
    return state


@pytest.mark.parametrize("alloc,total", [((64, 9, 7, 6, 42, 37), 237000), ((153, 1, 1, 1, 4, 5), 115200)])
def test_settle_recorded_allocations(alloc, total):
    rep = settle(recorded_state(alloc, (2, 3, 3, 4, 7, 8)))
    assert rep.total_cost == total and rep.budget_respected
    assert list(rep.per_resource.values()) == list(alloc)


def test_settle_nothing_done():
    led = Ledger()
    led.open_account("broker:u", 10)
    rep = settle(BrokerState("u", UserRequirements(10, 10), 3, led, "broker:u"))
    assert rep.total_cost == 0 and not rep.deadline_met and rep.jobs_completed == 0


def test_settle_detects_ledger_mismatch():
    state = recorded_state((1,), (2,))
    state.completions.append(Completion("ghost", "r0", 0, 300, 600))
    with pytest.raises(AssertionError):
        settle(state)


# -- reschedule ------------------------------------------------------------------------

def live_state(profiles, pending=4, remaining=1200):
    led = Ledger()
    led.open_account("broker:u", 10**6)
    s = BrokerState("u", UserRequirements(remaining, 10**6), pending, led, "broker:u")
    s.profiles = {p.resource_id: p for p in profiles}
    s.pending = deque(f"j{i}" for i in range(pending))
    return s


def test_slower_measurement_halves_completable_jobs():
    s = live_state([prof("r", 1, 300, 1)], pending=10)
    assert replan(s, 0).assignments == {"r": 4}
    reschedule(BrokerEvent("completion", 0, "r", None, duration=600), s)
    assert s.profiles["r"].job_duration == 600
    assert replan(s, 0).assignments == {"r": 2}


def test_quiet_epoch_keeps_the_plan():
    s = live_state([prof("a", 1, 300, 2), prof("b", 3, 300, 2)])
    first = reschedule(BrokerEvent("epoch-tick", 60), s)
    second = reschedule(BrokerEvent("epoch-tick", 60), s)
    assert first == second


def test_failure_returns_job_and_shrinks_capacity():
    s = live_state([prof("a", 1, 300, 2), prof("b", 3, 300, 2)], pending=0)
    out = reschedule(BrokerEvent("failure", 10, "a", "jX", capacity=0), s)
    assert list(s.pending) == ["jX"] and out.assignments == {"b": 1}


def test_price_change_updates_profile():
    s = live_state([prof("a", 1, 300, 1), prof("b", 3, 300, 1)], pending=1)
    assert reschedule(BrokerEvent("price-change", 0, "a", rate=5), s).assignments == {"b": 1}


def test_ema_smooths_completions_per_epoch():
    s = live_state([prof("a", 1, 300, 1)])
    s.profiles["a"].observed_job_rate = 4.0
    s.epoch_completions["a"] = 2
    reschedule(BrokerEvent("epoch-tick", 60), s)
    assert s.profiles["a"].observed_job_rate == 3.0


# -- discovery ------------------------------------------------------------------------

def test_wwg_candidates_in_rate_order():
    g = grid(WWG)
    found = discover(g, "u", UserRequirements(7200, 396000), 0)
    assert [q.rate for _, q in found] == [2, 3, 3, 4, 7, 8]
    assert [o.provider for o, _ in found] == ["monash", "prosecco", "tokyo", "barbera", "anl", "isi"]


def test_eligibility_filters_offers():
    g = grid([("lin", 1, 2, 1)])
    g.directory.publish(ServiceOffer("nt-cpu", "nt", "lin", {"os": "windows-nt"}, PriceSchedule.flat(1)))
    found = discover(g, "u", UserRequirements(10, 10, eligibility={"os": "linux"}), 0)
    assert [o.offer_id for o, _ in found] == ["lin-cpu"]


def test_cheaper_posted_special_wins():
    g = grid([("r", 1, 4, 1)], models=("commodity", "posted"))
    g.directory.post_special(PostedSpecial("deal", "r-cpu", 2))
    found = discover(g, "u", UserRequirements(10, 10), 0, NegotiationConfig("posted"))
    assert found[0][1].rate == 2 and found[0][1].conditions == {"special": "deal"}


def test_bargain_discovery_agrees_and_traces():
    g = grid([("r", 1, 10, 1)], models=("bargain",), reserve=5)
    found = discover(g, "u", UserRequirements(10, 10), 0,
                     NegotiationConfig("bargain", {"start": 2, "limit": 6, "step": 1, "gsp_step": 2}))
    assert found[0][1].rate == 5
    assert sum(1 for r in g.engine.trace if r.kind == "negotiation") >= 4


def test_bargain_discovery_can_fail():
    g = grid([("r", 1, 10, 1)], models=("bargain",), reserve=8)
    assert discover(g, "u", UserRequirements(10, 10), 0, NegotiationConfig("bargain", {"limit": 3})) == []


def test_tender_discovery_awards_lowest():
    g = grid([("a", 1, 5, 1), ("b", 1, 3, 1), ("c", 1, 7, 1)], models=("tender",))
    found = discover(g, "u", UserRequirements(10, 10), 0, NegotiationConfig("tender"))
    assert [q.rate for _, q in found] == [3, 5, 7]
    tender = next(iter(g.directory.tenders.values()))
    assert (tender.contract.gsp, tender.contract.rate) == ("b", 3)


def test_auction_discovery_vickrey_pays_reserve():
    g = grid([("a", 1, 9, 1)], models=("auction",), reserve=4)
    found = discover(g, "u", UserRequirements(10, 10), 0, NegotiationConfig("auction", {"kind": "vickrey"}))
    assert found[0][1].rate == 4


# -- the broker in a live grid ------------------------------------------------------------

def run_broker(resources, jobs=20, secs=300, deadline=7200, budget=10**7, mode=COST_OPT, failures=(), **kw):
    g = grid(resources)
    for rid, at, failure in failures:
        g.resources[rid].inject_failure(at, failure)
    b = Broker("u", JobSet.uniform(jobs, secs), UserRequirements(deadline, budget, mode), g, **kw)
    g.engine.run()
    return g, b, b.report()


def test_one_probe_per_candidate_at_start():
    g, b, rep = run_broker(WWG, jobs=165, deadline=7200, budget=396000)
    probes = [r for r in g.engine.trace if r.kind == "probe"]
    assert len(probes) == 6 and {r.time for r in probes} == {0}
    first_monash = next(r for r in g.engine.trace if r.kind == "complete" and r.resource == "monash")
    assert (first_monash.time, first_monash.amount) == (300, 600)
    # no bulk work is sent before calibration results are in
    bulk = [r for r in g.engine.trace if r.kind == "submit" and r.time == 0]
    assert len(bulk) == 6
    assert rep.jobs_completed == 165 and rep.deadline_met


def test_counts_match_trace_and_ledger():
    g, b, rep = run_broker(WWG, jobs=60, deadline=3600)
    done = [r for r in g.engine.trace if r.kind == "complete"]
    assert sum(rep.per_resource.values()) == len(done) == 60
    assert rep.total_cost == sum(r.amount for r in done) == sum(res.revenue() for res in g.resources.values())


@pytest.mark.parametrize("mode", [COST_OPT, TIME_OPT])
def test_budget_never_exceeded(mode):
    g, b, rep = run_broker(WWG, jobs=165, deadline=7200, budget=60000, mode=mode)
    spent = 0
    for e in g.ledger.journal:
        if e.source == "broker:u":
            spent += e.amount
            assert spent <= 60000
    assert rep.budget_respected and rep.jobs_completed < 165 and not rep.deadline_met


def test_failed_probe_is_reprobed_later_and_excluded_meanwhile():
    g, b, rep = run_broker([("cheap", 1, 1, 1), ("dear", 2, 5, 1)], jobs=6, secs=100, deadline=3600,
                           failures=[("cheap", 50, NodeLoss(1))])
    plans = [r for r in g.engine.trace if r.kind == "plan"]
    assert "cheap" not in plans[0].detail
    assert rep.jobs_completed == 6 and rep.per_resource.get("cheap", 0) == 0


def test_outage_mid_run_jobs_finish_elsewhere():
    g, b, rep = run_broker([("a", 2, 1, 1), ("b", 2, 2, 1)], jobs=12, secs=100, deadline=3600,
                           failures=[("a", 150, Outage(2000))])
    fails = [r for r in g.engine.trace if r.kind == "failure"]
    assert fails and rep.jobs_completed == 12 and rep.deadline_met
    assert rep.per_resource["b"] >= len(fails)


def test_deadline_stops_submission_but_running_jobs_finish():
    g, b, rep = run_broker([("r", 1, 1, 1)], jobs=10, secs=100, deadline=450)
    assert rep.jobs_completed == 4 and not rep.deadline_met
    assert any(r.kind == "abort" for r in g.engine.trace)
    assert max(r.time for r in g.engine.trace if r.kind == "complete") <= 450


def test_modes_dominate_on_wwg():
    _, _, cost = run_broker(WWG, jobs=165, deadline=7200, budget=396000, mode=COST_OPT)
    _, _, time = run_broker(WWG, jobs=165, deadline=7200, budget=396000, mode=TIME_OPT)
    assert cost.total_cost < time.total_cost and time.makespan <= cost.makespan
    assert cost.per_resource["monash"] > 165 // 2


def test_jobset_validation_and_jitter():
    with pytest.raises(ValueError):
        JobSet(())
    with pytest.raises(ValueError):
        UserRequirements(0, 1)
    a = JobSet.uniform(5, 300, jitter=10, rng=random.Random(1))
    b = JobSet.uniform(5, 300, jitter=10, rng=random.Random(1))
    assert a == b and all(290 <= j.cpu_seconds <= 310 for j in a.jobs)


def test_busy_tenderer_keeps_its_contract():
    g = grid(WWG, models=("tender",))
    b = Broker("u", JobSet.uniform(165, 300), UserRequirements(7200, 396000), g,
               negotiation=NegotiationConfig("tender"))
    g.engine.run()
    rep = b.report()
    assert rep.per_resource["monash"] == 160 and rep.total_cost == 103500
