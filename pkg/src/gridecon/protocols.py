"""Price negotiation mechanisms between brokers and providers.

Every mechanism here is a deterministic state machine. Ties are always broken
by time first, then by identifier.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Protocol, Sequence

from .directory import MarketDirectory, ServiceOffer, matches
from .economy import Money, Rate, price_at


class ProtocolError(ValueError):
    pass


# -- commodity market --------------------------------------------------------

@dataclass(frozen=True)
class Quote:
    provider: str
    rate: Rate
    valid_until: int
    offer_id: Optional[str] = None
    conditions: Optional[dict] = None


def request_quote(offer: ServiceOffer, t: int, load=0, consumer: Optional[str] = None) -> Quote:
    if "commodity" not in offer.negotiation_models:
        raise ProtocolError(f"{offer.provider} does not trade {offer.offer_id} under the commodity model")
    rate = price_at(offer.pricing, t, load, consumer)
    valid_until = min(offer.pricing.calendar.band_end(t) - 1, offer.valid_until)
    return Quote(offer.provider, rate, valid_until, offer.offer_id)


# -- bargaining --------------------------------------------------------------

class BargainState(str, Enum):
    OPEN = "open"
    AGREED = "agreed"
    ABANDONED = "abandoned"


@dataclass
class BargainSession:
    """Broker bids up from a low offer, provider concedes down from a high ask.

    Round 0 is the opening exchange; each later round both sides concede one
    step. Agreement happens at the provider's standing ask on the first round
    where the broker's offer reaches it.
    """

    broker_offer: Rate
    gsp_ask: Rate
    broker_limit: Rate
    gsp_reserve: Rate
    broker_step: Rate = 1
    gsp_step: Rate = 1
    max_rounds: int = 10
    round: int = 0
    state: BargainState = BargainState.OPEN
    agreed_rate: Optional[Rate] = None
    history: list[tuple[int, Rate, Rate]] = field(default_factory=list)

    def __post_init__(self):
        if self.broker_step < 0 or self.gsp_step < 0:
            raise ProtocolError("concession steps must be >= 0")
        if self.broker_offer > self.broker_limit:
            raise ProtocolError("opening offer exceeds the broker's limit")
        if self.gsp_ask < self.gsp_reserve:
            raise ProtocolError("opening ask is below the provider's reserve")
        if self.broker_step == 0 and self.gsp_step == 0 and self.broker_offer < self.gsp_ask:
            raise ProtocolError("zero steps on both sides with a gap can never converge")
        if self.max_rounds < 0:
            raise ProtocolError("max_rounds must be >= 0")

    def _settle_if_crossed(self) -> bool:
        if self.broker_offer >= self.gsp_ask:
            self.state = BargainState.AGREED
            self.agreed_rate = self.gsp_ask
            return True
        return False


def negotiate_bargain(session: BargainSession) -> BargainSession:
    if session.state is not BargainState.OPEN:
        raise ProtocolError(f"session already {session.state.value}")
    session.history.append((session.round, session.broker_offer, session.gsp_ask))
    if session._settle_if_crossed():
        return session
    while session.round < session.max_rounds:
        if session.broker_offer == session.broker_limit and session.gsp_ask == session.gsp_reserve:
            break  # neither side can move
        session.round += 1
        session.broker_offer = min(session.broker_offer + session.broker_step, session.broker_limit)
        session.gsp_ask = max(session.gsp_ask - session.gsp_step, session.gsp_reserve)
        session.history.append((session.round, session.broker_offer, session.gsp_ask))
        if session._settle_if_crossed():
            return session
    session.state = BargainState.ABANDONED
    return session


# -- tender / contract net ---------------------------------------------------

@dataclass
class DealTemplate:
    addressee: str
    eligibility: dict
    job_count: int
    cpu_seconds: int
    expiration: int
    price_hint: Optional[Rate] = None
    bid_specification: str = "rate in G$ per CPU-second"


class TenderState(str, Enum):
    ANNOUNCED = "announced"
    AWARDED = "awarded"
    FAILED = "failed"


@dataclass(frozen=True)
class Bid:
    gsp: str
    rate: Rate
    at: int


@dataclass(frozen=True)
class Contract:
    tender_id: str
    manager: str
    gsp: str
    rate: Rate
    job_count: int
    cpu_seconds: int
    awarded_at: int


@dataclass
class Tender:
    tender_id: str
    manager: str
    template: DealTemplate
    announced_at: int = 0
    state: TenderState = TenderState.ANNOUNCED
    bids: list[Bid] = field(default_factory=list)
    contract: Optional[Contract] = None
    notices: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.template.expiration <= self.announced_at:
            raise ProtocolError("tender expiration must be after its announcement")

    def submit_bid(self, gsp: str, rate: Rate, at: int) -> Bid:
        if self.state is not TenderState.ANNOUNCED:
            raise ProtocolError(f"tender {self.tender_id} is {self.state.value}")
        if not self.announced_at <= at <= self.template.expiration:
            raise ProtocolError(f"bid from {gsp} at {at} is outside the bidding window")
        if rate < 0:
            raise ProtocolError("bid rate must be >= 0")
        bid = Bid(gsp, rate, at)
        self.bids.append(bid)
        return bid


class Contractor(Protocol):
    provider_id: str
    attributes: dict
    reserve_rate: Rate

    def load(self, t: int): ...
    def tender_bid(self, template: DealTemplate, t: int) -> Optional[Rate]: ...


def announce_tender(gmd: MarketDirectory, tender: Tender) -> str:
    if tender.tender_id in gmd.tenders:
        raise ProtocolError(f"duplicate tender id {tender.tender_id!r}")
    gmd.tenders[tender.tender_id] = tender
    return tender.tender_id


def solicit_bids(tender: Tender, contractors: Iterable[Contractor], t: int) -> list[Bid]:
    """Contractor side: each eligible provider evaluates the task and may bid."""
    placed = []
    for c in sorted(contractors, key=lambda c: c.provider_id):
        if not matches(c.attributes, tender.template.eligibility):
            continue
        rate = c.tender_bid(tender.template, t)
        if rate is not None:
            placed.append(tender.submit_bid(c.provider_id, rate, t))
    return placed


def collect_bids(tender: Tender, t: int) -> list[Bid]:
    if t < tender.template.expiration:
        raise ProtocolError(f"bids for {tender.tender_id} are sealed until {tender.template.expiration}")
    return sorted(tender.bids, key=lambda b: (b.at, b.gsp))


def award_tender(tender: Tender, bids: Sequence[Bid], t: int) -> Tender:
    if tender.state is TenderState.FAILED:
        raise ProtocolError(f"tender {tender.tender_id} already failed")
    if tender.state is TenderState.AWARDED:
        raise ProtocolError(f"tender {tender.tender_id} already awarded")
    if t < tender.template.expiration:
        raise ProtocolError(f"cannot award {tender.tender_id} before {tender.template.expiration}")
    if not bids:
        tender.state = TenderState.FAILED
        return tender
    best = min(bids, key=lambda b: (b.rate, b.at, b.gsp))
    tmpl = tender.template
    tender.contract = Contract(tender.tender_id, tender.manager, best.gsp, best.rate,
                               tmpl.job_count, tmpl.cpu_seconds, t)
    tender.state = TenderState.AWARDED
    # not obligatory for the manager; kept for auditability
    tender.notices = [f"{b.gsp}:{'awarded' if b is best else 'not-awarded'}" for b in bids]
    return tender


class QuickResponse(str, Enum):
    ELIGIBLE = "eligible"
    BUSY = "busy"
    INELIGIBLE = "ineligible"
    NOT_INTERESTED = "not_interested"


def quick_response_poll(tender: Tender, providers: Iterable[Contractor], t: int) -> dict[str, QuickResponse]:
    replies = {}
    hint = tender.template.price_hint
    for p in sorted(providers, key=lambda p: p.provider_id):
        if not matches(p.attributes, tender.template.eligibility):
            replies[p.provider_id] = QuickResponse.INELIGIBLE
        elif p.load(t) >= 1:
            replies[p.provider_id] = QuickResponse.BUSY
        elif hint is not None and hint < p.reserve_rate:
            replies[p.provider_id] = QuickResponse.NOT_INTERESTED
        else:
            replies[p.provider_id] = QuickResponse.ELIGIBLE
    return replies


class ContractResponse(str, Enum):
    ACCEPTANCE = "acceptance"
    REFUSAL = "refusal"


def directed_contract(broker: str, gsp, rate: Rate, t: int) -> ContractResponse:
    """Offer ``gsp`` a contract at ``rate`` without negotiation. Acceptance binds one slot."""
    if rate < gsp.reserve_rate or gsp.free_slots(t) <= 0:
        return ContractResponse.REFUSAL
    gsp.bind_contract(broker, rate, t)
    return ContractResponse.ACCEPTANCE


# -- auctions ----------------------------------------------------------------

class AuctionKind(str, Enum):
    ENGLISH = "english"
    DUTCH = "dutch"
    FPSB = "fpsb"
    VICKREY = "vickrey"


class AuctionState(str, Enum):
    OPEN = "open"
    CLOSED = "closed"
    FAILED = "failed"


@dataclass(frozen=True)
class Bidder:
    """A bidding strategy.

    ``value`` is the private valuation. ``sealed_bid`` is what the bidder
    submits in sealed-bid auctions (truthful when omitted) and ``threshold``
    is the price at which it accepts in a Dutch auction (its sealed bid when
    omitted). English bidding raises by the increment up to ``value``.
    """

    bidder_id: str
    value: Rate
    sealed_bid: Optional[Rate] = None
    threshold: Optional[Rate] = None

    def bid(self) -> Rate:
        return self.value if self.sealed_bid is None else self.sealed_bid

    def accept_at(self) -> Rate:
        return self.bid() if self.threshold is None else self.threshold


@dataclass
class Auction:
    kind: AuctionKind
    item: str = "slot"
    reserve: Rate = 0
    increment: Rate = 1
    start_price: Optional[Rate] = None
    decrement: Rate = 1
    tick: int = 1
    opened_at: int = 0
    bids: list[tuple[str, Rate, int]] = field(default_factory=list)
    state: AuctionState = AuctionState.OPEN
    winner: Optional[str] = None
    price: Optional[Rate] = None
    closed_at: Optional[int] = None
    log: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.kind = AuctionKind(self.kind)


def _close(auction: Auction, winner: Optional[str], price: Optional[Rate], at: int) -> Auction:
    auction.closed_at = at
    if winner is None:
        auction.state = AuctionState.FAILED
        auction.log.append(f"t={at} failed")
    else:
        auction.state = AuctionState.CLOSED
        auction.winner, auction.price = winner, price
        auction.log.append(f"t={at} closed winner={winner} price={price}")
    return auction


def _english(auction: Auction, order: list[Bidder]) -> Auction:
    standing: Optional[Rate] = None
    leader: Optional[Bidder] = None
    active = {b.bidder_id for b in order}
    at = auction.opened_at
    raised = True
    while raised:
        raised = False
        for b in order:
            if b is leader or b.bidder_id not in active:
                continue
            nxt = auction.reserve if standing is None else standing + auction.increment
            if nxt <= b.value:
                at += 1
                standing, leader = nxt, b
                auction.bids.append((b.bidder_id, nxt, at))
                raised = True
            else:
                active.discard(b.bidder_id)
                auction.log.append(f"t={at} open-exit {b.bidder_id}")
    return _close(auction, leader.bidder_id if leader else None, standing, at)


def _sealed(auction: Auction, order: list[Bidder]) -> Auction:
    at = auction.opened_at
    valid = []
    for b in order:
        auction.bids.append((b.bidder_id, b.bid(), at))
        if b.bid() >= auction.reserve:
            valid.append(b)
    if not valid:
        return _close(auction, None, None, at)
    ranked = sorted(valid, key=lambda b: -b.bid())  # stable: id order among equal bids
    top = ranked[0]
    if auction.kind is AuctionKind.FPSB:
        price = top.bid()
    else:
        price = max(ranked[1].bid(), auction.reserve) if len(ranked) > 1 else auction.reserve
    return _close(auction, top.bidder_id, price, at)


def _dutch(auction: Auction, order: list[Bidder]) -> Auction:
    price = auction.start_price
    k = 0
    while True:
        at = auction.opened_at + k * auction.tick
        auction.log.append(f"t={at} announce {price}")
        takers = [b for b in order if b.accept_at() >= price]
        if takers:
            # within one tick the highest threshold is crossed first
            top = max(takers, key=lambda b: b.accept_at())
            auction.bids.append((top.bidder_id, price, at))
            return _close(auction, top.bidder_id, price, at)
        if price == auction.reserve:
            return _close(auction, None, None, at)
        price = max(price - auction.decrement, auction.reserve)
        k += 1


def run_auction(auction: Auction, bidders: Sequence[Bidder]) -> Auction:
    if auction.state is not AuctionState.OPEN:
        raise ProtocolError("auction already run")
    if not bidders:
        raise ProtocolError("an auction needs at least one bidder")
    ids = [b.bidder_id for b in bidders]
    if len(set(ids)) != len(ids):
        raise ProtocolError("duplicate bidder ids")
    order = sorted(bidders, key=lambda b: b.bidder_id)
    kind = auction.kind
    if kind is AuctionKind.ENGLISH:
        if auction.increment <= 0:
            raise ProtocolError("english auction needs a positive increment")
        return _english(auction, order)
    if kind is AuctionKind.DUTCH:
        if auction.start_price is None or auction.start_price <= auction.reserve:
            raise ProtocolError("dutch auction needs start_price > reserve")
        if auction.decrement <= 0 or auction.tick <= 0:
            raise ProtocolError("dutch auction needs positive decrement and tick")
        return _dutch(auction, order)
    return _sealed(auction, order)


# -- bid-based proportional sharing -----------------------------------------

@dataclass(frozen=True)
class ShareAllocation:
    bids: dict[str, Money]
    shares: dict[str, Fraction]


def proportional_shares(bids: Mapping[str, Money]) -> ShareAllocation:
    if any(b < 0 for b in bids.values()):
        raise ProtocolError("bids must be >= 0")
    total = sum(bids.values())
    if total <= 0:
        raise ProtocolError("at least one bid must be positive")
    shares = {user: Fraction(bid, total) for user, bid in sorted(bids.items())}
    return ShareAllocation(dict(sorted(bids.items())), shares)
