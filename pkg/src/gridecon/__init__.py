"""Deterministic simulator and library for economy-driven grid resource management."""

from .broker import (
    COST_OPT,
    TIME_OPT,
    Broker,
    Grid,
    JobSet,
    NegotiationConfig,
    ResourceProfile,
    SchedulePlan,
    ScheduleReport,
    UserRequirements,
    discover,
    plan,
    reschedule,
    settle,
)
from .economy import Calendar, Ledger, PriceSchedule, job_cost, price_at
from .kernel import Engine
from .scenario import RunSummary, Scenario, load_scenario, report, run

__version__ = "0.1.0"

__all__ = [
    "COST_OPT", "TIME_OPT", "Broker", "Grid", "JobSet", "NegotiationConfig", "ResourceProfile",
    "SchedulePlan", "ScheduleReport", "UserRequirements", "discover", "plan", "reschedule", "settle",
    "Calendar", "Ledger", "PriceSchedule", "job_cost", "price_at", "Engine",
    "RunSummary", "Scenario", "load_scenario", "report", "run",
]
