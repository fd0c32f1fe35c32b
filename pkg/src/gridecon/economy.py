"""Grid currency, ledgers, calendar-driven price schedules and cost arithmetic.

All amounts are integer grid-currency units (G$ or tokens). Rates are integer
G$ per CPU-second. Nothing in this module uses floating point for money.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping, Optional

# Money and Rate are plain ints; the aliases document intent.
Money = int
Rate = int

# Hard ceiling standing in for a fixed-width accumulator.
MAX_MONEY = 2**63 - 1

DAY = 86_400
WEEKDAYS = ("mon", "tue", "wed", "thu", "fri", "sat", "sun")

PEAK = "peak"
LUNCH = "lunch"
OFFPEAK = "offpeak"
HOLIDAY = "holiday"
BANDS = (PEAK, LUNCH, OFFPEAK, HOLIDAY)

LOAD_THRESHOLD = Fraction(1, 2)


def parse_clock(text: str) -> int:
    """'12:30' -> seconds since midnight."""
    hours, _, minutes = text.partition(":")
    return int(hours) * 3600 + int(minutes or 0) * 60


def weekday_index(name: str | int) -> int:
    if isinstance(name, int):
        if not 0 <= name < 7:
            raise ValueError(f"weekday index out of range: {name}")
        return name
    try:
        return WEEKDAYS.index(name.strip().lower()[:3])
    except ValueError:
        raise ValueError(f"unknown weekday: {name!r}") from None


@dataclass(frozen=True)
class Calendar:
    """Maps simulated seconds onto a working-week calendar.

    Sim time 0 falls on ``start_weekday`` at ``start_offset`` seconds past
    midnight. Holidays are either whole weekdays or explicit day indices
    counted from the epoch day (day 0).
    """

    start_weekday: int = 0
    start_offset: int = 0
    holiday_weekdays: frozenset[int] = frozenset({5, 6})
    holiday_days: frozenset[int] = frozenset()
    peak: tuple[int, int] = (9 * 3600, 18 * 3600)
    lunch: tuple[int, int] = (12 * 3600 + 1800, 14 * 3600)

    def __post_init__(self):
        if not 0 <= self.start_offset < DAY:
            raise ValueError("start_offset must lie within one day")
        for lo, hi in (self.peak, self.lunch):
            if not 0 <= lo <= hi <= DAY:
                raise ValueError(f"bad window ({lo}, {hi})")

    def _abs(self, t: int) -> int:
        return self.start_offset + t

    def day_index(self, t: int) -> int:
        return self._abs(t) // DAY

    def weekday(self, t: int) -> int:
        return (self.start_weekday + self.day_index(t)) % 7

    def time_of_day(self, t: int) -> int:
        return self._abs(t) % DAY

    def is_holiday(self, t: int) -> bool:
        return self.weekday(t) in self.holiday_weekdays or self.day_index(t) in self.holiday_days

    def band(self, t: int) -> str:
        # holiday classification wins over any time-of-day window
        if self.is_holiday(t):
            return HOLIDAY
        tod = self.time_of_day(t)
        if self.lunch[0] <= tod < self.lunch[1]:
            return LUNCH
        if self.peak[0] <= tod < self.peak[1]:
            return PEAK
        return OFFPEAK

    def band_end(self, t: int) -> int:
        """First instant after ``t`` at which the band may change."""
        tod = self.time_of_day(t)
        day_start = t - tod
        if self.is_holiday(t):
            return day_start + DAY
        edges = sorted({*self.peak, *self.lunch, DAY})
        for edge in edges:
            if edge > tod:
                return day_start + edge
        return day_start + DAY

    def at(self, weekday: str | int, clock: str = "00:00", week: int = 0) -> int:
        """Sim time of the given weekday/clock in the ``week``-th week of the run."""
        wd = weekday_index(weekday)
        days_ahead = (wd - self.start_weekday) % 7 + 7 * week
        t = days_ahead * DAY + parse_clock(clock) - self.start_offset
        if t < 0:
            t += 7 * DAY
        return t

    @classmethod
    def from_dict(cls, data: Mapping) -> "Calendar":
        kwargs = {}
        if "start_weekday" in data:
            kwargs["start_weekday"] = weekday_index(data["start_weekday"])
        if "start_time" in data:
            kwargs["start_offset"] = parse_clock(data["start_time"])
        if "holidays" in data:
            kwargs["holiday_weekdays"] = frozenset(weekday_index(d) for d in data["holidays"])
        if "holiday_days" in data:
            kwargs["holiday_days"] = frozenset(int(d) for d in data["holiday_days"])
        if "peak" in data:
            kwargs["peak"] = tuple(parse_clock(x) for x in data["peak"])
        if "lunch" in data:
            kwargs["lunch"] = tuple(parse_clock(x) for x in data["lunch"])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        def clock(s):
            return f"{s // 3600:02d}:{s % 3600 // 60:02d}"

        return {
            "start_weekday": WEEKDAYS[self.start_weekday],
            "start_time": clock(self.start_offset),
            "holidays": [WEEKDAYS[d] for d in sorted(self.holiday_weekdays)],
            "holiday_days": sorted(self.holiday_days),
            "peak": [clock(x) for x in self.peak],
            "lunch": [clock(x) for x in self.lunch],
        }


DEFAULT_CALENDAR = Calendar()


def _check_rate(name, value):
    if isinstance(value, bool) or not isinstance(value, int):
        raise TypeError(f"{name} must be an integer rate, got {value!r}")
    if value < 0:
        raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class PriceSchedule:
    """A provider's price specification.

    Field names follow the trading-server price block: one rate per calendar
    band, a percent discount when the resource is lightly loaded, a percent
    raise under high demand, and per-consumer override rates.
    """

    peak_time_price: Rate
    lunch_time_price: Rate
    offpeak_time_price: Rate
    price_holiday_time: Rate
    discount_when_lightly_loaded: int = 0
    raise_price_high_demand: int = 0
    per_consumer_overrides: Mapping[str, Rate] = field(default_factory=dict)
    calendar: Calendar = DEFAULT_CALENDAR

    def __post_init__(self):
        for name in ("peak_time_price", "lunch_time_price", "offpeak_time_price", "price_holiday_time"):
            _check_rate(name, getattr(self, name))
        for consumer, rate in self.per_consumer_overrides.items():
            _check_rate(f"per_consumer_overrides[{consumer}]", rate)
        if not 0 <= self.discount_when_lightly_loaded <= 100:
            raise ValueError("discount_when_lightly_loaded must be within 0..100")
        if self.raise_price_high_demand < 0:
            raise ValueError("raise_price_high_demand must be >= 0")

    @classmethod
    def flat(cls, rate: Rate, **kwargs) -> "PriceSchedule":
        return cls(rate, rate, rate, rate, **kwargs)

    def band_rate(self, band: str) -> Rate:
        return {
            PEAK: self.peak_time_price,
            LUNCH: self.lunch_time_price,
            OFFPEAK: self.offpeak_time_price,
            HOLIDAY: self.price_holiday_time,
        }[band]

    def with_calendar(self, calendar: Calendar) -> "PriceSchedule":
        return replace(self, calendar=calendar)

    @classmethod
    def from_dict(cls, data: Mapping, calendar: Calendar = DEFAULT_CALENDAR) -> "PriceSchedule":
        if "flat" in data:
            base = {k: data["flat"] for k in ("peak_time_price", "lunch_time_price",
                                              "offpeak_time_price", "price_holiday_time")}
        else:
            base = {}
        base.update({k: v for k, v in data.items() if k != "flat"})
        missing = [k for k in ("peak_time_price", "lunch_time_price", "offpeak_time_price",
                               "price_holiday_time") if k not in base]
        if missing:
            raise KeyError(", ".join(missing))
        return cls(
            peak_time_price=base["peak_time_price"],
            lunch_time_price=base["lunch_time_price"],
            offpeak_time_price=base["offpeak_time_price"],
            price_holiday_time=base["price_holiday_time"],
            discount_when_lightly_loaded=base.get("discount_when_lightly_loaded", 0),
            raise_price_high_demand=base.get("raise_price_high_demand", 0),
            per_consumer_overrides=dict(base.get("per_consumer_overrides", {})),
            calendar=calendar,
        )

    def to_dict(self) -> dict:
        return {
            "peak_time_price": self.peak_time_price,
            "lunch_time_price": self.lunch_time_price,
            "offpeak_time_price": self.offpeak_time_price,
            "price_holiday_time": self.price_holiday_time,
            "discount_when_lightly_loaded": self.discount_when_lightly_loaded,
            "raise_price_high_demand": self.raise_price_high_demand,
            "per_consumer_overrides": dict(sorted(self.per_consumer_overrides.items())),
        }


def price_at(schedule: PriceSchedule, t: int, load=0, consumer: Optional[str] = None) -> Rate:
    """Rate charged to ``consumer`` at sim time ``t`` with the resource at ``load``.

    A per-consumer override is a negotiated price and is returned as is.
    Otherwise the calendar band rate is discounted (load below one half) or
    raised (load above one half) by the schedule's percentages, rounding down.
    """
    if not 0 <= load <= 1:
        raise ValueError(f"load must lie in [0, 1], got {load}")
    if consumer is not None and consumer in schedule.per_consumer_overrides:
        return schedule.per_consumer_overrides[consumer]
    rate = schedule.band_rate(schedule.calendar.band(t))
    load = Fraction(load) if not isinstance(load, Fraction) else load
    if load < LOAD_THRESHOLD and schedule.discount_when_lightly_loaded:
        rate = rate * (100 - schedule.discount_when_lightly_loaded) // 100
    elif load > LOAD_THRESHOLD and schedule.raise_price_high_demand:
        rate = rate * (100 + schedule.raise_price_high_demand) // 100
    return rate


def job_cost(cpu_seconds: int, rate: Rate) -> Money:
    if cpu_seconds < 0:
        raise ValueError("cpu_seconds must be >= 0")
    if rate < 0:
        raise ValueError("rate must be >= 0")
    cost = cpu_seconds * rate
    if cost > MAX_MONEY:
        raise OverflowError(f"cost {cpu_seconds} x {rate} exceeds the money range")
    return cost


class LedgerError(Exception):
    pass


class InsufficientFunds(LedgerError):
    def __init__(self, account, needed, available):
        super().__init__(f"{account}: needs {needed}, has {available}")
        self.account = account
        self.needed = needed
        self.available = available


class UnknownAccount(LedgerError, KeyError):
    def __str__(self):
        return f"unknown account {self.args[0]!r}"


@dataclass(frozen=True)
class JournalEntry:
    receipt: int
    time: int
    source: Optional[str]  # None marks a provisioning (mint) entry
    target: str
    amount: Money
    memo: str = ""


class Ledger:
    """Single-writer account book with an append-only journal.

    Units enter only through :meth:`mint`; transfers move them between
    accounts and never change the total.
    """

    def __init__(self):
        self.accounts: dict[str, Money] = {}
        self.journal: list[JournalEntry] = []
        self.minted: Money = 0

    def open_account(self, account: str, balance: Money = 0, t: int = 0) -> None:
        if account in self.accounts:
            raise LedgerError(f"account {account!r} already exists")
        self.accounts[account] = 0
        if balance:
            self.mint(account, balance, t, memo="opening balance")

    def balance(self, account: str) -> Money:
        try:
            return self.accounts[account]
        except KeyError:
            raise UnknownAccount(account) from None

    def total(self) -> Money:
        return sum(self.accounts.values())

    def mint(self, account: str, amount: Money, t: int = 0, memo: str = "provision") -> int:
        if amount < 0:
            raise ValueError("cannot mint a negative amount")
        self.balance(account)
        if self.accounts[account] + amount > MAX_MONEY:
            raise OverflowError("balance exceeds the money range")
        self.accounts[account] += amount
        self.minted += amount
        return self._append(t, None, account, amount, memo)

    def transfer(self, source: str, target: str, amount: Money, t: int = 0, memo: str = "") -> int:
        if isinstance(amount, bool) or not isinstance(amount, int) or amount < 0:
            raise ValueError(f"transfer amount must be a non-negative integer, got {amount!r}")
        available = self.balance(source)
        self.balance(target)
        if available < amount:
            raise InsufficientFunds(source, amount, available)
        self.accounts[source] -= amount
        self.accounts[target] += amount
        return self._append(t, source, target, amount, memo)

    def _append(self, t, source, target, amount, memo) -> int:
        receipt = len(self.journal) + 1
        self.journal.append(JournalEntry(receipt, t, source, target, amount, memo))
        return receipt

    def outflow(self, account: str) -> Money:
        return sum(e.amount for e in self.journal if e.source == account)

    def inflow(self, account: str, include_mint: bool = False) -> Money:
        return sum(e.amount for e in self.journal
                   if e.target == account and (include_mint or e.source is not None))


def transfer(ledger: Ledger, source: str, target: str, amount: Money, t: int = 0, memo: str = "") -> int:
    return ledger.transfer(source, target, amount, t, memo)


@dataclass(frozen=True)
class BarterCredit:
    """Community credits earned by contributing CPU time to a shared pool."""

    account: str
    earned: Money = 0
    spent: Money = 0

    def __post_init__(self):
        if not 0 <= self.spent <= self.earned:
            raise ValueError("barter credit requires 0 <= spent <= earned")

    @property
    def available(self) -> Money:
        return self.earned - self.spent


def accrue_barter_credit(credit: BarterCredit, contributed_cpu_seconds: int, exchange_rate: Rate) -> BarterCredit:
    return replace(credit, earned=credit.earned + job_cost(contributed_cpu_seconds, exchange_rate))


def spend_barter_credit(credit: BarterCredit, amount: Money) -> BarterCredit:
    if amount < 0:
        raise ValueError("amount must be >= 0")
    if amount > credit.available:
        raise InsufficientFunds(credit.account, amount, credit.available)
    return replace(credit, spent=credit.spent + amount)
