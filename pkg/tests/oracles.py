"""Independent brute-force and hand-integration oracles used by the tests."""

from __future__ import annotations

import itertools
import math
from fractions import Fraction


def fluid_completions(work: dict[str, int], bids: dict[str, int], capacity: int = 1) -> dict[str, Fraction]:
    """Exact completion instants when each user runs one job and shares a resource by bid."""
    left = {u: Fraction(w) for u, w in work.items()}
    now = Fraction(0)
    done = {}
    while left:
        total = sum(bids[u] for u in left) or len(left)
        speed = {u: Fraction(bids[u] if sum(bids[v] for v in left) else 1, total) * capacity for u in left}
        step = min(left[u] / speed[u] for u in left)
        now += step
        for u in list(left):
            left[u] -= speed[u] * step
            if left[u] == 0:
                done[u] = now
                del left[u]
    return done


def assignments(n_jobs: int, resources: int):
    """Every way to split n identical jobs over the resources."""
    for cut in itertools.combinations(range(n_jobs + resources - 1), resources - 1):
        bounds = (-1, *cut, n_jobs + resources - 1)
        yield tuple(b - a - 1 for a, b in zip(bounds, bounds[1:]))


def cost_and_makespan(counts, profiles) -> tuple[int, int]:
    cost = sum(n * p.negotiated_rate * p.job_duration for n, p in zip(counts, profiles))
    span = max((math.ceil(n / p.capacity_estimate) * p.job_duration for n, p in zip(counts, profiles) if n),
               default=0)
    return cost, span


def best_cost(profiles, n_jobs, deadline):
    feasible = [cost_and_makespan(c, profiles) for c in assignments(n_jobs, len(profiles))]
    costs = [c for c, m in feasible if m <= deadline]
    return min(costs) if costs else None


def best_makespan(profiles, n_jobs, budget):
    feasible = [cost_and_makespan(c, profiles) for c in assignments(n_jobs, len(profiles))]
    spans = [m for c, m in feasible if c <= budget]
    return min(spans) if spans else None
