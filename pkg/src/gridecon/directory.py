"""Grid market directory: a passive yellow-pages registry of service offers.

Providers publish offers and posted-price specials; brokers poll it. Queries
return offers ordered by ``(provider, offer_id)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from numbers import Real
from typing import Any, Mapping, Optional

from .economy import BANDS, PriceSchedule, Rate

NEGOTIATION_MODELS = frozenset({"commodity", "posted", "bargain", "tender", "auction", "proportional"})


class DirectoryError(ValueError):
    pass


def matches(attributes: Mapping[str, Any], clauses: Optional[Mapping[str, Any]]) -> bool:
    """True when ``attributes`` satisfy every clause.

    Numbers are minima (``memory_mb: 128`` accepts 256), collections are
    required subsets (middleware tags), anything else must be equal.
    """
    for key, want in (clauses or {}).items():
        if key not in attributes:
            return False
        have = attributes[key]
        if isinstance(want, Real) and not isinstance(want, bool):
            if isinstance(have, bool) or not isinstance(have, Real) or have < want:
                return False
        elif isinstance(want, (list, tuple, set, frozenset)):
            pool = set(have) if isinstance(have, (list, tuple, set, frozenset)) else {have}
            if not set(want) <= pool:
                return False
        elif have != want:
            return False
    return True


@dataclass
class ServiceOffer:
    offer_id: str
    provider: str
    resource_ref: str
    attributes: dict
    pricing: PriceSchedule
    negotiation_models: frozenset = frozenset({"commodity"})
    valid_until: int = 2**62

    def __post_init__(self):
        if not self.attributes:
            raise DirectoryError(f"offer {self.offer_id}: attributes must be non-empty")
        self.negotiation_models = frozenset(self.negotiation_models)
        unknown = self.negotiation_models - NEGOTIATION_MODELS
        if unknown:
            raise DirectoryError(f"offer {self.offer_id}: unknown negotiation models {sorted(unknown)}")

    def to_dict(self) -> dict:
        return {
            "offer_id": self.offer_id,
            "provider": self.provider,
            "resource_ref": self.resource_ref,
            "attributes": self.attributes,
            "pricing": self.pricing.to_dict(),
            "negotiation_models": sorted(self.negotiation_models),
            "valid_until": self.valid_until,
        }


@dataclass
class PostedSpecial:
    """A non-negotiable discounted price attached to a published offer.

    ``window`` is a half-open ``(start, end)`` sim-time interval (``None`` for
    always). ``max_cpu_seconds`` caps the CPU time sold at the special rate,
    first come first served.
    """

    offer_id: str
    base_offer: str
    special_rate: Rate
    window: Optional[tuple[int, int]] = None
    max_cpu_seconds: Optional[int] = None
    consumer_classes: frozenset = frozenset()
    used_cpu_seconds: int = 0

    def __post_init__(self):
        self.consumer_classes = frozenset(self.consumer_classes)
        if self.special_rate < 0:
            raise DirectoryError("special_rate must be >= 0")
        if self.window is not None and self.window[1] <= self.window[0]:
            raise DirectoryError("special window must have end > start")

    def remaining(self) -> Optional[int]:
        if self.max_cpu_seconds is None:
            return None
        return self.max_cpu_seconds - self.used_cpu_seconds

    def applies(self, t: int, consumer_class: Optional[str] = None, cpu_seconds: int = 0) -> bool:
        if self.window is not None and not self.window[0] <= t < self.window[1]:
            return False
        if self.consumer_classes and consumer_class not in self.consumer_classes:
            return False
        left = self.remaining()
        return left is None or left >= max(cpu_seconds, 1)

    def to_dict(self) -> dict:
        return {
            "offer_id": self.offer_id,
            "base_offer": self.base_offer,
            "special_rate": self.special_rate,
            "window": list(self.window) if self.window else None,
            "max_cpu_seconds": self.max_cpu_seconds,
            "consumer_classes": sorted(self.consumer_classes),
            "used_cpu_seconds": self.used_cpu_seconds,
        }


def regular_floor(schedule: PriceSchedule, window: Optional[tuple[int, int]]) -> Rate:
    """Lowest regular band rate the schedule charges anywhere inside ``window``."""
    if window is None:
        return min(schedule.band_rate(b) for b in BANDS)
    cal = schedule.calendar
    t, end = window
    lowest = schedule.band_rate(cal.band(t))
    while True:
        t = cal.band_end(t)
        if t >= end:
            return lowest
        lowest = min(lowest, schedule.band_rate(cal.band(t)))


class MarketDirectory:
    def __init__(self):
        self._offers: dict[str, ServiceOffer] = {}
        self._specials: dict[str, PostedSpecial] = {}
        self._suspended: dict[str, int] = {}
        self.tenders: dict[str, Any] = {}

    def __len__(self):
        return len(self._offers)

    def offer(self, offer_id: str) -> ServiceOffer:
        try:
            return self._offers[offer_id]
        except KeyError:
            raise DirectoryError(f"unknown offer {offer_id!r}") from None

    def publish(self, offer: ServiceOffer, t: int = 0) -> str:
        if offer.offer_id in self._offers or offer.offer_id in self._specials:
            raise DirectoryError(f"duplicate offer id {offer.offer_id!r}")
        if offer.valid_until <= t:
            raise DirectoryError(f"offer {offer.offer_id} expires at {offer.valid_until}, not after {t}")
        self._offers[offer.offer_id] = offer
        return offer.offer_id

    def withdraw(self, offer_id: str) -> None:
        self.offer(offer_id)
        del self._offers[offer_id]
        for sid in [s for s, sp in self._specials.items() if sp.base_offer == offer_id]:
            del self._specials[sid]

    def suspend(self, offer_id: str, until: int) -> None:
        """Hide an offer from queries until ``until`` (exclusive), e.g. during an outage."""
        self.offer(offer_id)
        self._suspended[offer_id] = max(until, self._suspended.get(offer_id, until))

    def query(self, clauses: Optional[Mapping[str, Any]] = None, t: int = 0) -> list[ServiceOffer]:
        hits = [
            o for o in self._offers.values()
            if o.valid_until >= t
            and self._suspended.get(o.offer_id, t) <= t
            and matches(o.attributes, clauses)
        ]
        return sorted(hits, key=lambda o: (o.provider, o.offer_id))

    def post_special(self, special: PostedSpecial, t: int = 0) -> str:
        base = self.offer(special.base_offer)
        if special.offer_id in self._offers or special.offer_id in self._specials:
            raise DirectoryError(f"duplicate offer id {special.offer_id!r}")
        ceiling = regular_floor(base.pricing, special.window)
        if special.special_rate > ceiling:
            raise DirectoryError(
                f"special {special.offer_id} rate {special.special_rate} exceeds regular price {ceiling}")
        self._specials[special.offer_id] = special
        return special.offer_id

    def specials(self, t: int, base_offer: Optional[str] = None,
                 consumer_class: Optional[str] = None) -> list[PostedSpecial]:
        found = [
            s for s in self._specials.values()
            if (base_offer is None or s.base_offer == base_offer)
            and s.base_offer in self._offers
            and s.applies(t, consumer_class)
        ]
        return sorted(found, key=lambda s: (s.special_rate, s.offer_id))

    def claim_special(self, offer_id: str, cpu_seconds: int, t: int,
                      consumer_class: Optional[str] = None) -> bool:
        """Consume ``cpu_seconds`` of a special's cap; False once it no longer applies."""
        special = self._specials.get(offer_id)
        if special is None or not special.applies(t, consumer_class, cpu_seconds):
            return False
        special.used_cpu_seconds += cpu_seconds
        return True

    def dump(self, t: int = 0) -> dict:
        return {
            "time": t,
            "offers": [o.to_dict() for o in self.query(None, t)],
            "specials": [s.to_dict() for s in sorted(self._specials.values(), key=lambda s: s.offer_id)],
            "tenders": sorted(self.tenders),
        }


def publish(gmd: MarketDirectory, offer: ServiceOffer, t: int = 0) -> str:
    return gmd.publish(offer, t)


def query(gmd: MarketDirectory, clauses: Optional[Mapping[str, Any]] = None, t: int = 0) -> list[ServiceOffer]:
    return gmd.query(clauses, t)


def post_special(gmd: MarketDirectory, special: PostedSpecial, t: int = 0) -> str:
    return gmd.post_special(special, t)
