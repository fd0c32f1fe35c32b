"""Declarative scenarios: load, validate, run, summarise and render.

Scenario files are JSON documents. The canonical serialization (used for
golden files) is ``json.dumps(data, indent=2, sort_keys=True)`` plus a
trailing newline; see :func:`canonical_json`.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from importlib import resources as importlib_resources
from pathlib import Path
from typing import Any, Optional

from .broker import MODES, Broker, Grid, JobSet, NegotiationConfig, ScheduleReport, UserRequirements
from .data_economy import DataSite, SiteCapacity, TokenTariff
from .directory import NEGOTIATION_MODELS, MarketDirectory, PostedSpecial, ServiceOffer
from .economy import DAY, Calendar, Ledger, PriceSchedule, price_at
from .fabric import BID_PROPORTIONAL, SPACE_SHARED, NodeLoss, Outage, Resource, ResourceSpec
from .kernel import Engine

BUNDLED = ("wwg",)


class ScenarioError(ValueError):
    """Invalid scenario. ``problems`` lists ``(field_path, message)`` pairs."""

    def __init__(self, problems: list[tuple[str, str]]):
        self.problems = problems
        super().__init__("; ".join(f"{p}: {m}" for p, m in problems))


class ScenarioParseError(ScenarioError):
    pass


def canonical_json(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def bundled_path(name: str) -> Path:
    return Path(str(importlib_resources.files("gridecon") / "scenarios" / f"{name}.scenario"))


# -- typed configuration --------------------------------------------------------

@dataclass(frozen=True)
class FailureConfig:
    at: int
    kind: str  # node-loss | outage
    nodes: int = 1
    duration: int = 0

    def build(self):
        return NodeLoss(self.nodes) if self.kind == "node-loss" else Outage(self.duration)


@dataclass(frozen=True)
class OfferConfig:
    offer_id: str
    negotiation_models: tuple[str, ...]
    attributes: dict
    valid_until: int


@dataclass(frozen=True)
class ProviderConfig:
    provider_id: str
    node_count: int
    availability_fraction: Fraction
    sharing_mode: str
    reserve_rate: int
    attributes: dict
    schedule: PriceSchedule
    offers: tuple[OfferConfig, ...]
    specials: tuple[dict, ...] = ()
    failures: tuple[FailureConfig, ...] = ()
    organization: str = ""
    location: str = ""
    assumed: tuple[str, ...] = ()


@dataclass(frozen=True)
class BrokerConfig:
    broker_id: str
    jobs: int
    job_seconds: int
    requirements: UserRequirements
    negotiation: NegotiationConfig
    jitter: int = 0
    start: int = 0
    epoch: int = 60
    ema_alpha: float = 0.5
    offers: Optional[tuple[str, ...]] = None
    consumer_class: Optional[str] = None


@dataclass(frozen=True)
class DataRequest:
    at: int
    user: str
    mb: int


@dataclass(frozen=True)
class DataSiteConfig:
    site_id: str
    capacity: SiteCapacity
    tariff: TokenTariff
    demand_weights: dict
    requests: tuple[DataRequest, ...] = ()


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    calendar: Calendar
    providers: tuple[ProviderConfig, ...]
    brokers: tuple[BrokerConfig, ...]
    data_sites: tuple[DataSiteConfig, ...] = ()
    stop_time: Optional[int] = None
    source: dict = field(default_factory=dict, compare=False, repr=False)

    def to_json(self) -> str:
        return canonical_json(self.source)


# -- validation -----------------------------------------------------------------

class _Checker:
    def __init__(self):
        self.problems: list[tuple[str, str]] = []

    def fail(self, path: str, message: str) -> None:
        self.problems.append((path, message))

    def int_(self, obj: dict, key: str, path: str, minimum: Optional[int] = None, default=None,
             required: bool = True) -> Optional[int]:
        if key not in obj:
            if required and default is None:
                self.fail(f"{path}.{key}", "is required")
            return default
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, int):
            self.fail(f"{path}.{key}", f"must be an integer, got {v!r}")
            return default
        if minimum is not None and v < minimum:
            self.fail(f"{path}.{key}", f"must be >= {minimum}, got {v}")
            return default
        return v

    def str_(self, obj: dict, key: str, path: str, default=None) -> Optional[str]:
        if key not in obj:
            if default is None:
                self.fail(f"{path}.{key}", "is required")
            return default
        v = obj[key]
        if not isinstance(v, str) or not v:
            self.fail(f"{path}.{key}", f"must be a non-empty string, got {v!r}")
            return default
        return v

    def dict_(self, obj: dict, key: str, path: str) -> dict:
        v = obj.get(key, {})
        if not isinstance(v, dict):
            self.fail(f"{path}.{key}", "must be an object")
            return {}
        return v

    def list_(self, obj: dict, key: str, path: str) -> list:
        v = obj.get(key, [])
        if not isinstance(v, list):
            self.fail(f"{path}.{key}", "must be a list")
            return []
        return v


def _failure(chk: _Checker, raw, path) -> Optional[FailureConfig]:
    if not isinstance(raw, dict):
        chk.fail(path, "must be an object")
        return None
    at = chk.int_(raw, "at", path, minimum=0)
    kind = chk.str_(raw, "type", path)
    if kind == "node-loss":
        nodes = chk.int_(raw, "nodes", path, minimum=1, default=1)
        return None if at is None else FailureConfig(at, kind, nodes=nodes)
    if kind == "outage":
        duration = chk.int_(raw, "duration", path, minimum=1)
        return None if at is None or duration is None else FailureConfig(at, kind, duration=duration)
    if kind is not None:
        chk.fail(f"{path}.type", f"must be 'node-loss' or 'outage', got {kind!r}")
    return None


def _provider(chk: _Checker, raw, path, calendar, offer_ids: set) -> Optional[ProviderConfig]:
    if not isinstance(raw, dict):
        chk.fail(path, "must be an object")
        return None
    pid = chk.str_(raw, "id", path)
    nodes = chk.int_(raw, "node_count", path, minimum=1)
    try:
        avail = Fraction(str(raw.get("availability_fraction", 1)))
        if not 0 < avail <= 1:
            raise ValueError
    except (ValueError, ZeroDivisionError):
        chk.fail(f"{path}.availability_fraction", "must be a fraction in (0, 1]")
        avail = Fraction(1)
    mode = raw.get("sharing_mode", SPACE_SHARED)
    if mode not in (SPACE_SHARED, BID_PROPORTIONAL):
        chk.fail(f"{path}.sharing_mode", f"must be {SPACE_SHARED!r} or {BID_PROPORTIONAL!r}")
    reserve = chk.int_(raw, "reserve_rate", path, minimum=0, default=0)
    attributes = chk.dict_(raw, "attributes", path)
    schedule = None
    if "price_schedule" not in raw:
        chk.fail(f"{path}.price_schedule", "is required")
    else:
        try:
            schedule = PriceSchedule.from_dict(raw["price_schedule"], calendar)
        except KeyError as exc:
            chk.fail(f"{path}.price_schedule", f"missing {exc.args[0]}")
        except (TypeError, ValueError, AttributeError) as exc:
            chk.fail(f"{path}.price_schedule", str(exc))
    offers = []
    raw_offers = chk.list_(raw, "offers", path)
    if not raw_offers:
        chk.fail(f"{path}.offers", "a provider needs at least one offer")
    for j, ro in enumerate(raw_offers):
        opath = f"{path}.offers[{j}]"
        if not isinstance(ro, dict):
            chk.fail(opath, "must be an object")
            continue
        oid = chk.str_(ro, "offer_id", opath)
        if oid in offer_ids:
            chk.fail(f"{opath}.offer_id", f"duplicate offer id {oid!r}")
        offer_ids.add(oid)
        models = ro.get("negotiation_models", ["commodity"])
        if not isinstance(models, list) or not models or not set(models) <= NEGOTIATION_MODELS:
            chk.fail(f"{opath}.negotiation_models", f"must be a non-empty subset of {sorted(NEGOTIATION_MODELS)}")
            models = ["commodity"]
        attrs = {**attributes, **chk.dict_(ro, "attributes", opath)}
        if not attrs:
            chk.fail(f"{opath}.attributes", "offer attributes must be non-empty")
        valid_until = chk.int_(ro, "valid_until", opath, minimum=1, default=2**62)
        offers.append(OfferConfig(oid, tuple(sorted(models)), attrs, valid_until))
    specials = []
    for j, rs in enumerate(chk.list_(raw, "specials", path)):
        spath = f"{path}.specials[{j}]"
        if not isinstance(rs, dict):
            chk.fail(spath, "must be an object")
            continue
        base = rs.get("base_offer")
        if base not in {o.offer_id for o in offers}:
            chk.fail(f"{spath}.base_offer", f"unknown offer {base!r} for provider {pid}")
        sid = chk.str_(rs, "offer_id", spath)
        if sid in offer_ids:
            chk.fail(f"{spath}.offer_id", f"duplicate offer id {sid!r}")
        offer_ids.add(sid)
        chk.int_(rs, "special_rate", spath, minimum=0)
        specials.append(rs)
    failures = [f for j, rf in enumerate(chk.list_(raw, "failures", path))
                if (f := _failure(chk, rf, f"{path}.failures[{j}]")) is not None]
    if pid is None or nodes is None or schedule is None:
        return None
    return ProviderConfig(pid, nodes, avail, mode, reserve, attributes, schedule, tuple(offers),
                          tuple(specials), tuple(failures), raw.get("organization", ""),
                          raw.get("location", ""), tuple(raw.get("assumed", ())))


def _broker(chk: _Checker, raw, path, offers: dict[str, OfferConfig]) -> Optional[BrokerConfig]:
    if not isinstance(raw, dict):
        chk.fail(path, "must be an object")
        return None
    bid = chk.str_(raw, "id", path)
    jobs = chk.int_(raw, "jobs", path, minimum=1)
    secs = chk.int_(raw, "job_seconds", path, minimum=1)
    deadline = chk.int_(raw, "deadline", path, minimum=1)
    budget = chk.int_(raw, "budget", path, minimum=1)
    mode = raw.get("mode", "cost_opt")
    if mode not in MODES:
        chk.fail(f"{path}.mode", f"must be one of {list(MODES)}, got {mode!r}")
    neg = chk.dict_(raw, "negotiation", path)
    model = neg.get("model", "commodity")
    params = neg.get("params", {})
    if model not in NEGOTIATION_MODELS:
        chk.fail(f"{path}.negotiation.model", f"unknown model {model!r}")
    if not isinstance(params, dict):
        chk.fail(f"{path}.negotiation.params", "must be an object")
        params = {}
    wanted = raw.get("offers")
    if wanted is not None:
        if not isinstance(wanted, list):
            chk.fail(f"{path}.offers", "must be a list of offer ids")
            wanted = []
        for j, oid in enumerate(wanted):
            if oid not in offers:
                chk.fail(f"{path}.offers[{j}]", f"unknown offer {oid!r}")
    reachable = [offers[o] for o in (wanted if wanted is not None else offers) if o in offers]
    if model in NEGOTIATION_MODELS and reachable and not any(
            model in o.negotiation_models or "commodity" in o.negotiation_models for o in reachable):
        chk.fail(f"{path}.negotiation.model", f"no reachable offer trades under {model!r} or commodity")
    jitter = chk.int_(raw, "jitter", path, minimum=0, default=0)
    start = chk.int_(raw, "start", path, minimum=0, default=0)
    epoch = chk.int_(raw, "epoch", path, minimum=1, default=60)
    alpha = raw.get("ema_alpha", 0.5)
    if isinstance(alpha, bool) or not isinstance(alpha, (int, float)) or not 0 < alpha <= 1:
        chk.fail(f"{path}.ema_alpha", "must be a number in (0, 1]")
        alpha = 0.5
    eligibility = chk.dict_(raw, "eligibility", path)
    if None in (bid, jobs, secs, deadline, budget) or mode not in MODES:
        return None
    return BrokerConfig(bid, jobs, secs, UserRequirements(deadline, budget, mode, eligibility),
                        NegotiationConfig(model, dict(params)), jitter, start, epoch, float(alpha),
                        tuple(wanted) if wanted is not None else None, raw.get("consumer_class"))


def _data_site(chk: _Checker, raw, path, calendar) -> Optional[DataSiteConfig]:
    if not isinstance(raw, dict):
        chk.fail(path, "must be an object")
        return None
    sid = chk.str_(raw, "id", path)
    if "tb_per_day" in raw:
        tb = chk.int_(raw, "tb_per_day", path, minimum=0)
        capacity = SiteCapacity.from_terabytes(tb) if tb is not None else None
    else:
        mb = chk.int_(raw, "mb_per_day", path, minimum=0)
        capacity = SiteCapacity(mb) if mb is not None else None
    peak = chk.int_(raw, "peak_tokens_per_mb", path, minimum=0, default=10)
    off = chk.int_(raw, "offpeak_tokens_per_mb", path, minimum=0, default=6)
    weights = chk.dict_(raw, "users", path)
    for user, w in weights.items():
        if isinstance(w, bool) or not isinstance(w, int) or w < 0:
            chk.fail(f"{path}.users.{user}", "weight must be an integer >= 0")
    if weights and sum(w for w in weights.values() if isinstance(w, int)) <= 0:
        chk.fail(f"{path}.users", "demand weights sum to zero")
    requests = []
    for j, rr in enumerate(chk.list_(raw, "requests", path)):
        rpath = f"{path}.requests[{j}]"
        if not isinstance(rr, dict):
            chk.fail(rpath, "must be an object")
            continue
        at = chk.int_(rr, "at", rpath, minimum=0)
        mb = chk.int_(rr, "mb", rpath, minimum=1)
        user = chk.str_(rr, "user", rpath)
        if user is not None and user not in weights:
            chk.fail(f"{rpath}.user", f"unknown user {user!r}")
        if None not in (at, mb, user):
            requests.append(DataRequest(at, user, mb))
    if sid is None or capacity is None:
        return None
    return DataSiteConfig(sid, capacity, TokenTariff(peak, off, calendar), dict(weights),
                          tuple(sorted(requests, key=lambda r: (r.at, r.user))))


def parse_scenario(data: Any, name: str = "scenario") -> Scenario:
    chk = _Checker()
    if not isinstance(data, dict):
        raise ScenarioError([("$", "scenario must be an object")])
    seed = chk.int_(data, "seed", "$", minimum=0, default=0)
    try:
        calendar = Calendar.from_dict(data.get("calendar", {}))
    except (ValueError, TypeError, AttributeError) as exc:
        chk.fail("$.calendar", str(exc))
        calendar = Calendar()
    offer_ids: set = set()
    providers = []
    seen = set()
    for i, raw in enumerate(chk.list_(data, "providers", "$")):
        p = _provider(chk, raw, f"$.providers[{i}]", calendar, offer_ids)
        if p is not None:
            if p.provider_id in seen:
                chk.fail(f"$.providers[{i}].id", f"duplicate provider id {p.provider_id!r}")
            seen.add(p.provider_id)
            providers.append(p)
    offers = {o.offer_id: o for p in providers for o in p.offers}
    raw_brokers = chk.list_(data, "brokers", "$")
    if raw_brokers and not data.get("providers"):
        chk.fail("$.providers", "brokers need at least one provider")
    brokers = []
    seen = set()
    for i, raw in enumerate(raw_brokers):
        b = _broker(chk, raw, f"$.brokers[{i}]", offers)
        if b is not None:
            if b.broker_id in seen:
                chk.fail(f"$.brokers[{i}].id", f"duplicate broker id {b.broker_id!r}")
            seen.add(b.broker_id)
            brokers.append(b)
    sites = [s for i, raw in enumerate(chk.list_(data, "data_sites", "$"))
             if (s := _data_site(chk, raw, f"$.data_sites[{i}]", calendar)) is not None]
    stop = chk.int_(data, "stop_time", "$", minimum=0, required=False)
    if chk.problems:
        raise ScenarioError(chk.problems)
    return Scenario(data.get("name", name), seed, calendar, tuple(providers), tuple(brokers),
                    tuple(sites), stop, data)


def load_scenario(path: str | Path) -> Scenario:
    """Load a scenario file, or a bundled scenario by name (e.g. ``"wwg"``)."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        p = bundled_path(str(path))
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioParseError([(str(path), f"cannot read: {exc.strerror}")]) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError([(f"{p.name}:{exc.lineno}:{exc.colno}", exc.msg)]) from None
    return parse_scenario(data, p.stem)


# -- building and running -------------------------------------------------------

@dataclass
class World:
    scenario: Scenario
    grid: Grid
    brokers: list[Broker]
    sites: list[DataSite]

    @property
    def engine(self) -> Engine:
        return self.grid.engine


def build_world(scenario: Scenario, seed: Optional[int] = None, mode: Optional[str] = None) -> World:
    engine = Engine(scenario.seed if seed is None else seed)
    ledger = Ledger()
    gmd = MarketDirectory()
    resources = {}
    for p in scenario.providers:
        for o in p.offers:
            gmd.publish(ServiceOffer(o.offer_id, p.provider_id, p.provider_id, o.attributes, p.schedule,
                                     frozenset(o.negotiation_models), o.valid_until))
        spec = ResourceSpec(p.provider_id, p.node_count, p.attributes, p.schedule, p.reserve_rate,
                            p.availability_fraction, p.sharing_mode, p.organization, p.location)
        resources[p.provider_id] = Resource(spec, engine, ledger, gmd, tuple(o.offer_id for o in p.offers))
        for s in p.specials:
            window = tuple(s["window"]) if s.get("window") else None
            gmd.post_special(PostedSpecial(s["offer_id"], s["base_offer"], s["special_rate"], window,
                                           s.get("max_cpu_seconds"), frozenset(s.get("consumer_classes", ()))))
        for f in p.failures:
            resources[p.provider_id].inject_failure(f.at, f.build())
    grid = Grid(engine, ledger, gmd, resources)
    brokers = []
    for b in scenario.brokers:
        req = b.requirements if mode is None else UserRequirements(
            b.requirements.deadline, b.requirements.budget, mode, b.requirements.eligibility)
        jobs = JobSet.uniform(b.jobs, b.job_seconds, prefix=f"{b.broker_id}-j", jitter=b.jitter,
                              rng=engine.rng(f"jobs:{b.broker_id}"))
        brokers.append(Broker(b.broker_id, jobs, req, grid, b.negotiation, b.start, b.epoch, b.ema_alpha,
                              b.offers, b.consumer_class))
    sites = [_schedule_site(engine, cfg) for cfg in scenario.data_sites]
    return World(scenario, grid, brokers, sites)


def _schedule_site(engine: Engine, cfg: DataSiteConfig) -> DataSite:
    site = DataSite(cfg.site_id, cfg.capacity, cfg.tariff, engine=engine)
    cal = cfg.tariff.calendar
    first_day = (DAY - cal.time_of_day(0)) % DAY
    last = max((r.at for r in cfg.requests), default=first_day)
    engine.on(f"day:{cfg.site_id}", lambda ev: site.open_day(ev.at, cfg.demand_weights))
    engine.on(f"data:{cfg.site_id}", lambda ev: site.access(ev.payload.user, ev.payload.mb, ev.at))
    day = first_day
    while day <= last:
        engine.schedule(day, f"day:{cfg.site_id}")
        day += DAY
    for r in cfg.requests:
        engine.schedule(r.at, f"data:{cfg.site_id}", r)
    return site


@dataclass
class ResourceSummary:
    resource_id: str
    organization: str
    price: int
    node_count: int
    usable_nodes: int
    jobs: int
    revenue: int
    utilization: str  # exact fraction, e.g. "3/4"


@dataclass
class RunSummary:
    scenario: str
    seed: int
    end_time: int
    brokers: list[ScheduleReport]
    resources: list[ResourceSummary]
    broker_spend: int
    provider_revenue: int
    data_sites: list[dict] = field(default_factory=list)
    trace_files: dict[str, str] = field(default_factory=dict)

    @property
    def balanced(self) -> bool:
        return self.broker_spend == self.provider_revenue

    @property
    def feasible(self) -> bool:
        return all(b.deadline_met and b.budget_respected for b in self.brokers)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["balanced"] = self.balanced
        return d

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "RunSummary":
        d = json.loads(text)
        d.pop("balanced", None)
        d["brokers"] = [ScheduleReport.from_dict(b) for b in d["brokers"]]
        d["resources"] = [ResourceSummary(**r) for r in d["resources"]]
        return cls(**d)


def summarise(world: World) -> RunSummary:
    grid = world.grid
    end = grid.engine.now
    reports = [b.report() for b in world.brokers]
    per_resource: dict[str, int] = {}
    for r in reports:
        for rid, n in r.per_resource.items():
            per_resource[rid] = per_resource.get(rid, 0) + n
    resources = []
    for rid, res in sorted(grid.resources.items()):
        resources.append(ResourceSummary(
            rid, res.spec.organization, price_at(res.spec.schedule, 0), res.spec.node_count,
            res.spec.usable_nodes, per_resource.get(rid, 0), res.revenue(), str(res.utilization(0, end))))
    spend = sum(grid.ledger.outflow(b.state.account) for b in world.brokers)
    revenue = sum(r.revenue for r in resources)
    sites = [{"site": s.site_id, "provisioned": s.provisioned, "spent_today": s.spent_today,
              "granted_mb_today": s.granted_mb_today, "unallocated": s.unallocated,
              "balances": {u: b.balance for u, b in sorted(s.buckets.items())}} for s in world.sites]
    return RunSummary(world.scenario.name, grid.engine.seed, end, reports, resources, spend, revenue, sites)


def run(scenario: Scenario, seed: Optional[int] = None, mode: Optional[str] = None,
        trace_dir: Optional[str | Path] = None) -> RunSummary:
    """Run ``scenario`` on a fresh engine; optionally write traces and summaries."""
    if mode is not None and mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    world = build_world(scenario, seed, mode)
    world.engine.run(scenario.stop_time)
    summary = summarise(world)
    if summary.broker_spend != summary.provider_revenue:
        raise AssertionError(f"ledger audit failed: spend {summary.broker_spend} != "
                             f"revenue {summary.provider_revenue}")
    if trace_dir is not None:
        out = Path(trace_dir)
        paths = world.engine.trace.write(out)
        summary.trace_files = {
            "csv": str(paths["csv"]), "jsonl": str(paths["jsonl"]),
            "summary_json": str(out / "summary.json"), "summary_txt": str(out / "summary.txt"),
        }
        (out / "summary.json").write_text(summary.to_json(), encoding="utf-8", newline="")
        (out / "summary.txt").write_text(render_table(summary), encoding="utf-8", newline="")
    return summary


# -- reports ---------------------------------------------------------------------

CSV_COLUMNS = ("resource", "price", "jobs", "cost", "makespan")


def _minutes(seconds: int) -> str:
    return f"{seconds / 60:.1f}"


def render_table(summary: RunSummary) -> str:
    makespan = max((b.makespan for b in summary.brokers), default=0)
    modes = ",".join(sorted({b.mode for b in summary.brokers})) or "-"
    header = f"{'Resource':<14}{'Organisation':<22}{'Price (G$/s)':>13}{'Jobs':>7}{'Cost (G$)':>12}"
    lines = [f"scenario {summary.scenario}  seed {summary.seed}  mode {modes}", header, "-" * len(header)]
    for r in summary.resources:
        lines.append(f"{r.resource_id:<14}{r.organization[:21]:<22}{r.price:>13}{r.jobs:>7}{r.revenue:>12}")
    lines.append("-" * len(header))
    total_jobs = sum(r.jobs for r in summary.resources)
    lines.append(f"{'Total':<14}{'':<22}{'':>13}{total_jobs:>7}{summary.broker_spend:>12}")
    lines.append(f"Time to complete: {_minutes(makespan)} min ({makespan} s)")
    for b in summary.brokers:
        lines.append(f"broker {b.broker_id}: {b.jobs_completed}/{b.jobs_total} jobs, spend {b.total_cost} "
                     f"of {b.budget}, deadline {'met' if b.deadline_met else 'missed'}")
    lines.append(f"ledger audit: spend {summary.broker_spend} = revenue {summary.provider_revenue}"
                 if summary.balanced else
                 f"ledger audit FAILED: spend {summary.broker_spend} != revenue {summary.provider_revenue}")
    return "\n".join(lines) + "\n"


def render_csv(summary: RunSummary) -> str:
    import csv
    import io
    makespan = max((b.makespan for b in summary.brokers), default=0)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in summary.resources:
        w.writerow([r.resource_id, r.price, r.jobs, r.revenue, makespan])
    w.writerow(["total", "", sum(r.jobs for r in summary.resources), summary.broker_spend, makespan])
    return buf.getvalue()


def report(summary: RunSummary, fmt: str = "table") -> str:
    if fmt == "table":
        return render_table(summary)
    if fmt == "json":
        return summary.to_json()
    if fmt == "csv":
        return render_csv(summary)
    raise ValueError(f"unknown report format {fmt!r}")


def comparison_table(summaries: dict[str, RunSummary]) -> str:
    """Side-by-side jobs per resource for several modes, with totals and completion times."""
    modes = list(summaries)
    first = summaries[modes[0]]
    head = f"{'Resource':<14}{'Price':>7}" + "".join(f"{m:>12}" for m in modes)
    lines = [head, "-" * len(head)]
    jobs = {m: {r.resource_id: r.jobs for r in s.resources} for m, s in summaries.items()}
    for r in first.resources:
        lines.append(f"{r.resource_id:<14}{r.price:>7}" + "".join(f"{jobs[m][r.resource_id]:>12}" for m in modes))
    lines.append("-" * len(head))
    lines.append(f"{'Total cost':<21}" + "".join(f"{summaries[m].broker_spend:>12}" for m in modes))
    lines.append(f"{'Time (min)':<21}" + "".join(
        f"{_minutes(max((b.makespan for b in summaries[m].brokers), default=0)):>12}" for m in modes))
    return "\n".join(lines) + "\n"
