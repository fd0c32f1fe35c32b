"""Token-regulated data access for a data-grid site.

A site that can serve ``max_mb_per_day`` MB provisions that many tokens each
day, one token per MB. Users spend tokens per MB accessed at a peak or
off-peak tariff, so at a 10-token peak tariff the site is never asked for
more than a tenth of its capacity during peak hours.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

from .economy import DEFAULT_CALENDAR, Calendar, Money
from .protocols import (
    BargainSession,
    BargainState,
    DealTemplate,
    ProtocolError,
    Tender,
    TenderState,
    award_tender,
    collect_bids,
    negotiate_bargain,
)

MB_PER_TB = 10**6  # decimal


@dataclass(frozen=True)
class SiteCapacity:
    max_mb_per_day: int

    def __post_init__(self):
        if self.max_mb_per_day < 0:
            raise ValueError("max_mb_per_day must be >= 0")

    @classmethod
    def from_terabytes(cls, tb_per_day: int) -> "SiteCapacity":
        return cls(tb_per_day * MB_PER_TB)


@dataclass
class TokenBucket:
    user: str
    balance: Money = 0
    allocation: Money = 0

    def __post_init__(self):
        if self.balance < 0 or self.allocation < 0:
            raise ValueError(f"{self.user}: token amounts must be >= 0")


@dataclass(frozen=True)
class TokenTariff:
    """Tokens per MB. Peak is the calendar's working-hours window on working days."""

    peak_tokens_per_mb: int = 10
    offpeak_tokens_per_mb: int = 6
    calendar: Calendar = DEFAULT_CALENDAR

    def __post_init__(self):
        if self.peak_tokens_per_mb < 0 or self.offpeak_tokens_per_mb < 0:
            raise ValueError("tariffs must be >= 0")

    def is_peak(self, t: int) -> bool:
        cal = self.calendar
        return not cal.is_holiday(t) and cal.peak[0] <= cal.time_of_day(t) < cal.peak[1]

    def per_mb(self, t: int) -> int:
        return self.peak_tokens_per_mb if self.is_peak(t) else self.offpeak_tokens_per_mb


def provision_tokens(capacity: SiteCapacity) -> Money:
    return capacity.max_mb_per_day


@dataclass(frozen=True)
class AccessRequest:
    user: str
    mb: int
    t: int


@dataclass(frozen=True)
class Granted:
    charged: Money
    granted: bool = True


@dataclass(frozen=True)
class Denied:
    reason: str
    required: Money
    available: Money
    granted: bool = False


Admission = Union[Granted, Denied]


def admit(request: AccessRequest, bucket: TokenBucket, tariff: TokenTariff) -> Admission:
    """Charge the bucket for the request, or deny it without touching anything."""
    if request.mb <= 0:
        raise ValueError("request size must be > 0 MB")
    if request.user != bucket.user:
        raise ValueError(f"bucket belongs to {bucket.user}, not {request.user}")
    charge = request.mb * tariff.per_mb(request.t)
    if bucket.balance < charge:
        return Denied("insufficient tokens", charge, bucket.balance)
    bucket.balance -= charge
    return Granted(charge)


def renew(buckets: Mapping[str, TokenBucket], t: int, demand_weights: Mapping[str, int],
          pool: Money, calendar: Calendar = DEFAULT_CALENDAR) -> tuple[dict[str, TokenBucket], Money]:
    """Fresh buckets for a new day plus the unallocated remainder of ``pool``.

    Each user gets ``floor(pool * w / sum(w))``; users without a weight get
    nothing. Unused balances do not carry over.
    """
    if calendar.time_of_day(t) != 0:
        raise ValueError(f"t={t} is not a day boundary")
    if any(w < 0 for w in demand_weights.values()):
        raise ValueError("demand weights must be >= 0")
    total = sum(demand_weights.get(u, 0) for u in buckets)
    if total <= 0:
        raise ValueError("demand weights sum to zero")
    fresh = {}
    for user in sorted(buckets):
        grant = pool * demand_weights.get(user, 0) // total
        fresh[user] = TokenBucket(user, grant, grant)
    return fresh, pool - sum(b.allocation for b in fresh.values())


# -- token redistribution ------------------------------------------------------

@dataclass(frozen=True)
class TokenHolder:
    """Another user's willingness to release tokens.

    ``spare`` is the most it will give up; ``ask`` is its price in a tender
    (lower means more willing). In a bargain the holder starts by offering
    ``opening`` tokens and concedes by ``step``.
    """

    bucket: TokenBucket
    spare: Money
    ask: int = 0
    opening: Money = 0
    step: Money = 1


@dataclass(frozen=True)
class Reallocation:
    granted: bool
    tokens: Money = 0
    counterparty: Optional[str] = None
    reason: str = ""


def _move(source: TokenBucket, target: TokenBucket, amount: Money) -> None:
    if amount > source.balance:
        raise ProtocolError(f"{source.user} cannot release {amount} tokens")
    source.balance -= amount
    target.balance += amount


def negotiate_extra_tokens(requestor: TokenBucket, others: Sequence[TokenHolder], need: Money,
                           protocol: str = "bargain", t: int = 0, minimum: Optional[Money] = None,
                           concession: Money = 1, max_rounds: int = 10) -> Reallocation:
    """Obtain ``need`` more tokens from other holders.

    bargain: holders are tried in user-id order. The requestor's demand falls
    from ``need`` towards ``minimum`` while the holder's offer rises towards
    its spare; the first agreement transfers the requestor's standing demand.

    tender: every holder able to cover ``need`` bids its ask; the lowest ask
    (then earliest, then user id) transfers ``need`` tokens.

    Tokens move between buckets only, so the sum of balances is unchanged.
    """
    if need <= 0:
        raise ValueError("need must be > 0")
    minimum = need if minimum is None else minimum
    if not 0 < minimum <= need:
        raise ValueError("minimum must be in (0, need]")
    holders = sorted((h for h in others if h.bucket.user != requestor.user), key=lambda h: h.bucket.user)
    if protocol == "bargain":
        for h in holders:
            spare = min(h.spare, h.bucket.balance)
            if spare < minimum:
                continue
            session = BargainSession(broker_offer=min(h.opening, spare), gsp_ask=need, broker_limit=spare,
                                     gsp_reserve=minimum, broker_step=h.step, gsp_step=concession,
                                     max_rounds=max_rounds)
            negotiate_bargain(session)
            if session.state is BargainState.AGREED:
                _move(h.bucket, requestor, session.agreed_rate)
                return Reallocation(True, session.agreed_rate, h.bucket.user)
        return Reallocation(False, reason="no holder agreed")
    if protocol == "tender":
        tender = Tender(f"tokens:{requestor.user}:{t}", requestor.user,
                        DealTemplate(requestor.user, {}, 1, need, expiration=t + 1), announced_at=t)
        by_user = {}
        for h in holders:
            if min(h.spare, h.bucket.balance) >= need:
                tender.submit_bid(h.bucket.user, h.ask, t)
                by_user[h.bucket.user] = h
        award_tender(tender, collect_bids(tender, t + 1), t + 1)
        if tender.state is not TenderState.AWARDED:
            return Reallocation(False, reason="no holder bid")
        winner = by_user[tender.contract.gsp]
        _move(winner.bucket, requestor, need)
        return Reallocation(True, need, winner.bucket.user)
    raise ValueError(f"unknown protocol {protocol!r}")


# -- a site that runs the daily cycle ------------------------------------------

@dataclass
class DataSite:
    site_id: str
    capacity: SiteCapacity
    tariff: TokenTariff = field(default_factory=TokenTariff)
    buckets: dict[str, TokenBucket] = field(default_factory=dict)
    unallocated: Money = 0
    spent_today: Money = 0
    granted_mb_today: int = 0
    engine: Optional[object] = None

    @property
    def provisioned(self) -> Money:
        return provision_tokens(self.capacity)

    def open_day(self, t: int, demand_weights: Mapping[str, int]) -> None:
        users = {u: self.buckets.get(u, TokenBucket(u)) for u in demand_weights}
        self.buckets, self.unallocated = renew(users, t, demand_weights, self.provisioned,
                                               self.tariff.calendar)
        self.spent_today = 0
        self.granted_mb_today = 0

    def access(self, user: str, mb: int, t: int) -> Admission:
        bucket = self.buckets.get(user)
        if bucket is None:
            result: Admission = Denied("no token allocation", mb * self.tariff.per_mb(t), 0)
        else:
            result = admit(AccessRequest(user, mb, t), bucket, self.tariff)
        if isinstance(result, Granted):
            self.spent_today += result.charged
            self.granted_mb_today += mb
        if self.engine is not None:
            charged = result.charged if isinstance(result, Granted) else 0
            self.engine.record(user, "data_access", self.site_id, amount=charged,
                               detail=f"mb={mb} granted={str(result.granted).lower()}")
        return result

    def conserved(self) -> bool:
        """Spent + remaining balances + unallocated equals the day's provision."""
        held = sum(b.balance for b in self.buckets.values())
        return self.spent_today + held + self.unallocated == self.provisioned
