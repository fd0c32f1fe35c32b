import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from gridecon.directory import MarketDirectory, ServiceOffer
from gridecon.economy import Calendar, Ledger, PriceSchedule
from gridecon.fabric import Resource, ResourceSpec
from gridecon.kernel import Engine
from gridecon.protocols import (
    Auction,
    AuctionState,
    BargainSession,
    BargainState,
    Bidder,
    ContractResponse,
    DealTemplate,
    ProtocolError,
    QuickResponse,
    Tender,
    TenderState,
    announce_tender,
    award_tender,
    collect_bids,
    directed_contract,
    negotiate_bargain,
    proportional_shares,
    quick_response_poll,
    request_quote,
    run_auction,
    solicit_bids,
)

CAL = Calendar()
LINUX = {"os": "linux", "arch": "x86", "memory_mb": 256}


def commodity(schedule, models=("commodity",)):
    return ServiceOffer("o", "gsp", "r", dict(LINUX), schedule, frozenset(models))


# -- commodity -----------------------------------------------------------------

def test_flat_rate_quote():
    q = request_quote(commodity(PriceSchedule.flat(2)), 0)
    assert q.rate == 2 and q.provider == "gsp"


def test_quote_honours_consumer_override():
    offer = commodity(PriceSchedule.flat(3, per_consumer_overrides={"C": 1}))
    assert request_quote(offer, 0, consumer="C").rate == 1
    assert request_quote(offer, 0, consumer="D").rate == 3


def test_quote_with_discount():
    offer = commodity(PriceSchedule.flat(8, discount_when_lightly_loaded=50))
    assert request_quote(offer, 0, load=Fraction(4, 10)).rate == 4


def test_quote_valid_until_band_end():
    offer = commodity(PriceSchedule.flat(2))
    t = CAL.at("tue", "10:00")
    assert request_quote(offer, t).valid_until == CAL.at("tue", "12:30") - 1


def test_quote_requires_commodity_model():
    with pytest.raises(ProtocolError):
        request_quote(commodity(PriceSchedule.flat(2), models=("auction",)), 0)


# -- bargaining ----------------------------------------------------------------

def test_bargain_meets_at_five():
    s = negotiate_bargain(BargainSession(2, 10, 6, 5, broker_step=1, gsp_step=2, max_rounds=10))
    assert s.state is BargainState.AGREED and s.agreed_rate == 5
    # round 0 is the opening exchange; concessions 3/8, 4/6, 5/5 cross in round 3
    assert s.history == [(0, 2, 10), (1, 3, 8), (2, 4, 6), (3, 5, 5)]
    assert s.round == 3


def test_bargain_disjoint_ranges_abandon():
    s = negotiate_bargain(BargainSession(1, 10, 3, 8))
    assert s.state is BargainState.ABANDONED and s.agreed_rate is None


def test_bargain_immediate_agreement():
    s = negotiate_bargain(BargainSession(7, 7, 9, 5))
    assert s.state is BargainState.AGREED and s.agreed_rate == 7 and s.round == 0


def test_bargain_rejects_non_terminating_steps():
    with pytest.raises(ProtocolError):
        BargainSession(1, 10, 20, 1, broker_step=0, gsp_step=0)
    with pytest.raises(ProtocolError):
        BargainSession(1, 10, 20, 1, broker_step=-1)


def test_bargain_gives_up_after_max_rounds():
    s = negotiate_bargain(BargainSession(0, 100, 100, 0, max_rounds=3))
    assert s.state is BargainState.ABANDONED and s.round == 3


@given(st.integers(0, 20), st.integers(0, 20), st.integers(0, 20), st.integers(0, 20),
       st.integers(0, 4), st.integers(0, 4), st.integers(0, 15))
def test_bargain_monotone_and_within_limits(offer, limit, ask, reserve, bstep, gstep, rounds):
    offer, limit = min(offer, limit), max(offer, limit)
    ask, reserve = max(ask, reserve), min(ask, reserve)
    try:
        s = BargainSession(offer, ask, limit, reserve, bstep, gstep, rounds)
    except ProtocolError:
        assert bstep == 0 and gstep == 0 and offer < ask
        return
    negotiate_bargain(s)
    offers = [o for _, o, _ in s.history]
    asks = [a for _, _, a in s.history]
    assert offers == sorted(offers) and asks == sorted(asks, reverse=True)
    assert all(o <= limit for o in offers) and all(a >= reserve for a in asks)
    if s.state is BargainState.AGREED:
        assert reserve <= s.agreed_rate <= limit


# -- tenders ---------------------------------------------------------------------

def template(**kw):
    base = dict(addressee="user", eligibility={"os": "linux"}, job_count=10, cpu_seconds=300, expiration=10)
    base.update(kw)
    return DealTemplate(**base)


def tender_with(bids):
    t = Tender("t1", "broker", template(), announced_at=0)
    for gsp, rate, at in bids:
        t.submit_bid(gsp, rate, at)
    return t


def test_lowest_bid_wins():
    t = tender_with([("A", 5, 1), ("B", 3, 1), ("C", 7, 1)])
    award_tender(t, collect_bids(t, 10), 10)
    assert t.state is TenderState.AWARDED and (t.contract.gsp, t.contract.rate) == ("B", 3)
    assert sorted(t.notices) == ["A:not-awarded", "B:awarded", "C:not-awarded"]


def test_tie_goes_to_earliest_bid():
    t = tender_with([("A", 3, 2), ("B", 3, 1)])
    award_tender(t, collect_bids(t, 10), 10)
    assert t.contract.gsp == "B"


def test_no_bids_fails_and_cannot_be_reawarded():
    t = tender_with([])
    award_tender(t, collect_bids(t, 10), 10)
    assert t.state is TenderState.FAILED
    with pytest.raises(ProtocolError):
        award_tender(t, [], 11)


def test_award_and_collection_wait_for_expiration():
    t = tender_with([("A", 3, 1)])
    with pytest.raises(ProtocolError):
        collect_bids(t, 9)
    with pytest.raises(ProtocolError):
        award_tender(t, t.bids, 9)


def test_expiration_must_follow_announcement():
    with pytest.raises(ProtocolError):
        Tender("t", "b", template(expiration=5), announced_at=5)


def world(*specs):
    eng, led = Engine(), Ledger()
    return eng, [Resource(s, eng, led) for s in specs]


def res_spec(rid, attrs, nodes=1, reserve=0, rate=4):
    return ResourceSpec(rid, nodes, attrs, PriceSchedule.flat(rate), reserve_rate=reserve)


def test_quick_response_classification():
    eng, (nt, busy, picky, ok) = world(
        res_spec("nt", {"os": "windows-nt"}), res_spec("busy", {"os": "linux"}),
        res_spec("picky", {"os": "linux"}, reserve=9), res_spec("ok", {"os": "linux"}))
    busy.agree("x", 4)
    busy.submit_job("j", 100, "x", 0)
    t = Tender("t1", "broker", template(price_hint=5), announced_at=0)
    replies = quick_response_poll(t, [nt, busy, picky, ok], 0)
    assert replies == {"nt": QuickResponse.INELIGIBLE, "busy": QuickResponse.BUSY,
                       "picky": QuickResponse.NOT_INTERESTED, "ok": QuickResponse.ELIGIBLE}


def test_solicited_bids_flow_through_directory():
    eng, res = world(res_spec("a", {"os": "linux"}, rate=5), res_spec("b", {"os": "linux"}, rate=3),
                     res_spec("w", {"os": "windows-nt"}, rate=1))
    gmd = MarketDirectory()
    t = Tender("t1", "broker", template(), announced_at=0)
    announce_tender(gmd, t)
    assert "t1" in gmd.tenders
    solicit_bids(t, res, 0)
    award_tender(t, collect_bids(t, 10), 10)
    assert (t.contract.gsp, t.contract.rate) == ("b", 3)


def test_directed_contracts():
    eng, (r,) = world(res_spec("r", {"os": "linux"}, reserve=3))
    assert directed_contract("u", r, 2, 0) is ContractResponse.REFUSAL
    assert directed_contract("u", r, 3, 0) is ContractResponse.ACCEPTANCE
    assert r.free_slots(0) == 0
    assert directed_contract("v", r, 10, 0) is ContractResponse.REFUSAL
    r.submit_job("j", 10, "u", 0)  # the reservation is consumed by the holder
    assert r.running["j"].rate_at_start == 3


# -- auctions ----------------------------------------------------------------------

def test_vickrey_pays_second_price():
    a = run_auction(Auction("vickrey"), [Bidder("a", 10), Bidder("b", 8), Bidder("c", 5)])
    assert (a.winner, a.price) == ("a", 8)


def test_vickrey_single_bid_pays_reserve():
    a = run_auction(Auction("vickrey", reserve=3), [Bidder("a", 10), Bidder("b", 2)])
    assert (a.winner, a.price) == ("a", 3)


def test_dutch_descent():
    a = run_auction(Auction("dutch", start_price=20, decrement=1), [Bidder("x", 15), Bidder("y", 12)])
    assert (a.winner, a.price, a.closed_at) == ("x", 15, 5)
    announced = [int(line.split()[-1]) for line in a.log if "announce" in line]
    assert announced == list(range(20, 14, -1))


def test_dutch_fails_at_reserve():
    a = run_auction(Auction("dutch", reserve=10, start_price=12, decrement=5), [Bidder("x", 9)])
    assert a.state is AuctionState.FAILED
    assert [line.split()[-1] for line in a.log if "announce" in line] == ["12", "10"]


def test_english_price_depends_on_who_opens():
    # round-robin in id order: the standing bid when the value-8 bidder drops out
    a = run_auction(Auction("english", increment=1), [Bidder("a", 8), Bidder("b", 10)])
    assert (a.winner, a.price) == ("b", 9)
    a = run_auction(Auction("english", increment=1), [Bidder("hi", 10), Bidder("lo", 8)])
    assert (a.winner, a.price) == ("hi", 8)
    rates = [r for _, r, _ in a.bids]
    assert all(b > a_ for a_, b in zip(rates, rates[1:]))
    assert any("open-exit lo" in line for line in a.log)


def test_fpsb_pays_own_bid():
    a = run_auction(Auction("fpsb"), [Bidder("a", 10), Bidder("b", 8)])
    assert (a.winner, a.price) == ("a", 10)


def test_auction_configuration_errors():
    with pytest.raises(ProtocolError):
        run_auction(Auction("english", increment=0), [Bidder("a", 1)])
    with pytest.raises(ProtocolError):
        run_auction(Auction("dutch", start_price=5, reserve=5), [Bidder("a", 1)])
    with pytest.raises(ProtocolError):
        run_auction(Auction("fpsb"), [])


@given(st.lists(st.integers(0, 30), min_size=1, max_size=5), st.integers(1, 4), st.integers(0, 5))
def test_english_winner_has_highest_value(values, eps, reserve):
    bidders = [Bidder(f"b{i}", v) for i, v in enumerate(values)]
    a = run_auction(Auction("english", increment=eps, reserve=reserve), bidders)
    if max(values) < reserve:
        assert a.state is AuctionState.FAILED
        return
    top = max(values)
    won = values[int(a.winner[1:])]
    others = [v for i, v in enumerate(values) if f"b{i}" != a.winner]
    # a bidder within one increment of the top value can hold the last raise
    assert won > top - eps
    if len(values) == 1 or top - sorted(values)[-2] >= eps:
        assert won == top
    assert a.price <= max(max(others, default=reserve) + eps, reserve)


# -- proportional share -----------------------------------------------------------

@pytest.mark.parametrize("bids,shares", [
    ({"u1": 2, "u2": 4}, {"u1": Fraction(1, 3), "u2": Fraction(2, 3)}),
    ({"u1": 5}, {"u1": Fraction(1)}),
    ({"u1": 1, "u2": 1, "u3": 2}, {"u1": Fraction(1, 4), "u2": Fraction(1, 4), "u3": Fraction(1, 2)}),
])
def test_proportional_examples(bids, shares):
    assert proportional_shares(bids).shares == shares


def test_all_zero_bids_rejected():
    with pytest.raises(ProtocolError):
        proportional_shares({"a": 0, "b": 0})


@given(st.dictionaries(st.sampled_from("abcdef"), st.integers(0, 50), min_size=1).filter(lambda d: any(d.values())),
       st.integers(1, 20))
def test_shares_sum_to_one_and_grow_with_bid(bids, extra):
    shares = proportional_shares(bids).shares
    assert sum(shares.values()) == 1
    user = sorted(bids)[0]
    more = dict(bids, **{user: bids[user] + extra})
    if len(bids) > 1 and sum(v for k, v in bids.items() if k != user) > 0:
        assert proportional_shares(more).shares[user] > shares[user]
