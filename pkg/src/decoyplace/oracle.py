"""Random small instances and exhaustive cross-checks.

Used by the test suite and by ``decoyplace oracle-check``. Everything here
is brute force on purpose: path enumeration instead of dynamic
programming, full enumeration instead of branch and bound.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .allocators import knapsack_2d, solve_optimal
from .attack_graph import AttackGraph, compute_attack_paths
from .model import ComputeNode, DecoyAllocation, DeploymentPlan, Microservice, ResourceView, Vulnerability
from .objective import ObjectiveContext, expected_interceptions_oracle, objective


def random_dag(rng: np.random.Generator, n: int, p: float = 0.35, integer_weights: bool = False) -> AttackGraph:
    """Random DAG on vertices ``0..n-1`` (forward edges of a random permutation).

    Integer weights in {1, 2, 3} make equal-cost paths common; otherwise
    weights are uniform in [0.5, 3.0].
    """
    perm = rng.permutation(n)
    edges = []
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < p:
                w = float(rng.integers(1, 4)) if integer_weights else float(rng.uniform(0.5, 3.0))
                edges.append((int(perm[a]), int(perm[b]), w))
    return AttackGraph.from_edges(list(range(n)), edges)


def random_plan(rng: np.random.Generator, n: int, decoyable: int, max_copies: int = 2) -> DeploymentPlan:
    """Plan whose decoy budgets admit clones of at most ``decoyable`` microservices.

    Budgets fit ``max_copies`` clones of each chosen microservice on its own;
    the rest request more than their node's whole budget.
    """
    n_nodes = int(rng.integers(1, 3))
    node_of = rng.integers(n_nodes, size=n)
    chosen = set(rng.choice(n, size=min(decoyable, n), replace=False).tolist())
    budget = rng.uniform(0.2, 0.4, size=(n_nodes, 2))
    services = []
    for m in range(n):
        nb = budget[node_of[m]]
        if m in chosen:
            # between max_copies and max_copies + 1 copies fit per resource
            req = nb / rng.uniform(max_copies + 0.05, max_copies + 0.95, size=2)
        else:
            req = nb * rng.uniform(1.1, 2.0, size=2)
        vulns = (Vulnerability(float(rng.uniform(0.1, 3.9)), 1.0),)
        services.append(Microservice(m, float(req[0]), float(req[1]), int(node_of[m]), vulns))
    used = np.zeros((n_nodes, 2))
    for s in services:
        used[s.node] += s.request
    nodes = tuple(ComputeNode(k, float(used[k, 0] + budget[k, 0]), float(used[k, 1] + budget[k, 1]))
                  for k in range(n_nodes))
    return DeploymentPlan(nodes, tuple(services), 1.0)


def feasible_vectors(plan: DeploymentPlan, ids, cap: int | None = None):
    """Every feasible allocation vector, optionally with ``x_m <= cap``."""
    rv = ResourceView(plan, ids)
    d0 = rv.d_hat(np.zeros_like(rv.budget))
    if cap is not None:
        d0 = np.minimum(d0, cap)
    for combo in itertools.product(*(range(int(d) + 1) for d in d0)):
        x = np.array(combo, dtype=np.int64)
        if rv.feasible(x):
            yield x


def brute_force_optimum(plan: DeploymentPlan, ctx: ObjectiveContext) -> tuple[float, np.ndarray]:
    best_val, best_x = -math.inf, None
    for x in feasible_vectors(plan, ctx.ids):
        val = objective(ctx, x)
        if val > best_val:
            best_val, best_x = val, x
    return best_val, best_x


def brute_force_knapsack(values, requests, limit) -> int:
    values = np.asarray(values, dtype=np.int64)
    requests = np.asarray(requests, dtype=float)
    caps = [int(min(limit[0] // r[0], limit[1] // r[1])) for r in requests]
    best = 0
    for combo in itertools.product(*(range(c + 1) for c in caps)):
        c = np.array(combo)
        if np.all(c @ requests <= limit):
            best = max(best, int(values @ c))
    return best


def rel_close(a: float, b: float, rtol: float) -> bool:
    return abs(a - b) <= rtol * max(1.0, abs(a), abs(b))


@dataclass
class SuiteReport:
    name: str
    checked: int = 0
    failures: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {"suite": self.name, "checked": self.checked, "failures": len(self.failures),
                "first_failures": self.failures[:5], "seconds": round(self.seconds, 3)}


def objective_oracle_suite(trials: int, seed: int, max_vertices: int = 10, rtol: float = 1e-9,
                           integer_weights: bool = False) -> SuiteReport:
    """Objective against path enumeration, every feasible x with ``x_m <= 2``.

    Real weights by default. With integer weights equal-cost paths through
    different vertices appear, and the objective (canonical path only) and
    the oracle (average over all minimum paths) legitimately differ.
    """
    rep = SuiteReport("objective-vs-oracle")
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    for trial in range(trials):
        n = int(rng.integers(3, max_vertices + 1))
        g = random_dag(rng, n, integer_weights=integer_weights)
        plan = random_plan(rng, n, decoyable=int(rng.integers(1, 4)))
        ctx = ObjectiveContext(compute_attack_paths(g))
        for x in feasible_vectors(plan, ctx.ids, cap=2):
            alloc = DecoyAllocation.from_vector(ctx.ids, x)
            got = objective(ctx, alloc)
            want = expected_interceptions_oracle(g, alloc)
            rep.checked += 1
            if not rel_close(got, want, rtol):
                rep.failures.append({"trial": trial, "x": x.tolist(), "objective": got, "oracle": want})
    rep.seconds = time.perf_counter() - started
    return rep


def optimality_suite(trials: int, seed: int, max_ms: int = 8, max_total: int = 10, rtol: float = 1e-9) -> SuiteReport:
    """solve_optimal against full enumeration on instances with sum of d_hat <= ``max_total``."""
    rep = SuiteReport("exhaustive-optimality")
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    done = 0
    while done < trials:
        n = int(rng.integers(3, max_ms + 1))
        g = random_dag(rng, n, integer_weights=bool(done % 2))
        plan = random_plan(rng, n, decoyable=int(rng.integers(1, n + 1)), max_copies=int(rng.integers(1, 4)))
        ctx = ObjectiveContext(compute_attack_paths(g))
        rv = ResourceView(plan, ctx.ids)
        if rv.d_hat(np.zeros_like(rv.budget)).sum() > max_total:
            continue
        done += 1
        out = solve_optimal(plan, ctx)
        want, _ = brute_force_optimum(plan, ctx)
        rep.checked += 1
        if not out.exact or not rel_close(out.objective_value, want, rtol):
            rep.failures.append({"trial": done - 1, "optimal": out.objective_value, "exact": out.exact,
                                 "brute_force": want})
    rep.seconds = time.perf_counter() - started
    return rep


def knapsack_suite(trials: int, seed: int, max_items: int = 5) -> SuiteReport:
    """knapsack_2d against enumeration, at most 10 feasible counts per item."""
    rep = SuiteReport("linear-knapsack")
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    for trial in range(trials):
        k = int(rng.integers(1, max_items + 1))
        limit = rng.uniform(0.5, 1.0, size=2)
        # each item fits between 1 and 9 times on its own
        requests = limit / rng.uniform(1.05, 9.95, size=(k, 2))
        values = rng.integers(0, 20, size=k)
        got, counts = knapsack_2d(values, requests, limit)
        want = brute_force_knapsack(values, requests, limit)
        rep.checked += 1
        feasible = bool(np.all(counts @ requests <= limit * (1 + 1e-9)))
        if got != want or int(values @ counts) != got or not feasible:
            rep.failures.append({"trial": trial, "knapsack": got, "brute_force": want})
    rep.seconds = time.perf_counter() - started
    return rep
