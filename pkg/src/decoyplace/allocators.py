"""Decoy allocation schemes.

* ``optimal``   exact branch-and-bound on the non-linear objective
* ``heuristic`` greedy one-decoy-at-a-time allocation driven by marginal gains
* ``linear``    exact maximization of decoy-free through-counts, per node
* ``sidecar``   clones the most vulnerable microservices first
* ``random``    uniform choice among microservices that still fit

Every scheme returns an :class:`AllocationOutcome` whose allocation
respects the per-node CPU and RAM decoy budgets.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .attack_graph import AttackGraph, compute_attack_paths, edge_weight
from .model import DecoyAllocation, DeploymentPlan, ResourceView
from .objective import ObjectiveContext, all_marginal_gains, objective

SCHEMES = ("optimal", "heuristic", "linear", "sidecar", "random")

#: relative tolerance for objective ties
OBJ_RTOL = 1e-9


@dataclass
class AllocationOutcome:
    scheme: str
    x: DecoyAllocation
    objective_value: float
    wall_time: float
    exact: bool = False
    details: dict = field(default_factory=dict)

    @property
    def decoys(self) -> int:
        return self.x.total

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "x": {str(k): v for k, v in _sorted_counts(self.x.counts)},
            "objective": self.objective_value,
            "exact": self.exact,
            "wall_time_s": self.wall_time,
        }

    @classmethod
    def from_dict(cls, doc, ids=None) -> AllocationOutcome:
        """Rebuild from JSON; ``ids`` maps the string keys back to plan ids."""
        lookup = {str(i): i for i in ids} if ids is not None else {}
        counts = {lookup.get(k, k): int(v) for k, v in doc["x"].items()}
        return cls(doc["scheme"], DecoyAllocation(counts), float(doc.get("objective", math.nan)),
                   float(doc.get("wall_time_s", 0.0)), bool(doc.get("exact", False)))


def _sorted_counts(counts):
    try:
        return sorted(counts.items())
    except TypeError:
        return sorted(counts.items(), key=lambda kv: str(kv[0]))


def _priority_key(p: float) -> float:
    # 12 significant digits: mathematically equal priorities that differ only
    # by summation order compare equal and fall back to the id rule
    return float(f"{p:.12g}")


def _view(plan: DeploymentPlan, ctx: ObjectiveContext) -> ResourceView:
    plan_ids = {m.id for m in plan.microservices}
    if plan_ids != set(ctx.ids):
        raise ValueError("attack graph vertices and plan microservices differ")
    return ResourceView(plan, ctx.ids)


def _plan_ids(plan: DeploymentPlan) -> list:
    return sorted(m.id for m in plan.microservices)


def _outcome(scheme, ids, x, ctx, started, exact=False, **details) -> AllocationOutcome:
    alloc = DecoyAllocation.from_vector(ids, x)
    value = objective(ctx, alloc) if ctx is not None else math.nan
    return AllocationOutcome(scheme, alloc, value, time.perf_counter() - started, exact, details)


# -- heuristic -----------------------------------------------------------


@dataclass
class HeuristicState:
    """Working state of the greedy loop.

    ``scores`` and ``theta`` are the running betweenness and pairwise
    interaction tallies; they are kept for inspection only, priorities come
    from exact marginal gains.
    """

    x: np.ndarray
    used: np.ndarray
    scores: np.ndarray
    theta: np.ndarray
    queue: list = field(default_factory=list)
    picks: list = field(default_factory=list)


def _update_tallies(ctx: ObjectiveContext, state: HeuristicState, m: int) -> None:
    x = state.x
    out = ctx.as_src[m]  # pairs (m, t)
    inn = ctx.as_tgt[m]  # pairs (t, m)
    for pairs, other in ((out, ctx.tgt), (inn, ctx.src)):
        if len(pairs) == 0:
            continue
        lengths = ctx.int_ptr[pairs + 1] - ctx.int_ptr[pairs]
        offsets = np.repeat(ctx.int_ptr[pairs], lengths) + (
            np.arange(lengths.sum()) - np.repeat(np.cumsum(lengths) - lengths, lengths)
        )
        interior = ctx.int_nodes[offsets]
        partner = np.repeat(other[pairs], lengths)
        np.add.at(state.scores, interior, x[partner] + 1.0)
        np.add.at(state.theta, (interior, partner), x[m] + 1.0)


def solve_heuristic(plan: DeploymentPlan, ctx: ObjectiveContext) -> AllocationOutcome:
    """Greedy allocation, one decoy per iteration.

    Candidates are ranked by (gain x deployable decoys); the first round uses
    the decoy-free betweenness as gain, later rounds the exact marginal gain
    of the objective. Ties go to the smaller microservice id.
    """
    started = time.perf_counter()
    rv = _view(plan, ctx)
    n = ctx.n
    state = HeuristicState(
        x=np.zeros(n),
        used=np.zeros_like(rv.budget),
        scores=np.asarray(ctx.bc, dtype=float).copy(),
        theta=np.zeros((n, n)),
    )
    d_hat = rv.d_hat(state.used)
    for m in range(n):
        if d_hat[m] >= 1:
            heapq.heappush(state.queue, (-_priority_key(state.scores[m] * d_hat[m]), m))

    while state.queue:
        _, m = heapq.heappop(state.queue)
        state.x[m] += 1
        state.used[rv.node_of[m]] += rv.request[m]
        state.picks.append(m)
        _update_tallies(ctx, state, m)
        state.queue.clear()
        d_hat = rv.d_hat(state.used)
        gains = all_marginal_gains(ctx, state.x)
        for i in np.flatnonzero(d_hat >= 1):
            state.queue.append((-_priority_key(gains[i] * d_hat[i]), int(i)))
        heapq.heapify(state.queue)

    x = state.x.astype(np.int64)
    return _outcome("heuristic", ctx.ids, x, ctx, started, iterations=len(state.picks))


# -- linear --------------------------------------------------------------


def knapsack_2d(values, requests, limit, upper=None):
    """Bounded integer knapsack with two capacity constraints.

    Maximizes ``sum(values * counts)`` subject to ``requests.T @ counts <=
    limit`` and ``0 <= counts <= upper``. Values must be non-negative
    integers. Among optimal solutions the one with the fewest items wins,
    then the lexicographically smallest count vector (in input order).
    Branch and bound; the bound is the tighter of the two single-resource
    fractional relaxations. Returns ``(best_value, counts)``.
    """
    values = np.asarray(values, dtype=np.int64)
    requests = np.asarray(requests, dtype=float).reshape(-1, 2)
    limit = np.asarray(limit, dtype=float)
    k = len(values)
    cap_each = np.floor(np.min(limit / requests, axis=1) + 1e-12).astype(np.int64) if k else np.zeros(0, np.int64)
    # guard the floor against rounding up past the limit
    for j in range(k):
        while cap_each[j] > 0 and np.any(cap_each[j] * requests[j] > limit):
            cap_each[j] -= 1
    upper = cap_each if upper is None else np.minimum(np.asarray(upper, dtype=np.int64), cap_each)
    items = [j for j in range(k) if values[j] > 0 and upper[j] > 0]
    if not items:
        return 0, np.zeros(k, dtype=np.int64)

    scale = np.where(limit > 0, limit, 1.0)
    items.sort(key=lambda j: (-values[j] / (requests[j] / scale).sum(), j))
    # per-resource density order for the relaxation bound
    dens = [sorted(items, key=lambda j, r=r: (-values[j] / requests[j, r], j)) for r in range(2)]
    depth_of = {j: d for d, j in enumerate(items)}

    best = {"value": 0, "total": 0, "x": np.zeros(k, dtype=np.int64)}
    x = np.zeros(k, dtype=np.int64)

    def bound(depth, rem):
        out = math.inf
        for r in range(2):
            cap = rem[r]
            acc = 0.0
            for j in dens[r]:
                if depth_of[j] < depth:
                    continue
                need = requests[j, r] * upper[j]
                if need <= cap:
                    acc += values[j] * upper[j]
                    cap -= need
                else:
                    acc += values[j] * cap / requests[j, r]
                    break
            out = min(out, acc)
        return out

    def better(value, total, vec):
        if value != best["value"]:
            return value > best["value"]
        if total != best["total"]:
            return total < best["total"]
        return tuple(vec) < tuple(best["x"])

    def dfs(depth, value, total, rem):
        if depth == len(items):
            if better(value, total, x):
                best.update(value=value, total=total, x=x.copy())
            return
        ub = value + math.floor(bound(depth, rem) + 1e-9)
        if ub < best["value"]:
            return
        if ub == best["value"] and total >= best["total"]:
            # only a tie is reachable; adding items cannot reduce the count
            if total == best["total"] and better(value, total, x):
                best.update(value=value, total=total, x=x.copy())
            return
        j = items[depth]
        top = min(upper[j], int(np.floor(np.min(rem / requests[j]) + 1e-12)))
        while top > 0 and np.any(top * requests[j] > rem):
            top -= 1
        for c in range(top, -1, -1):
            x[j] = c
            dfs(depth + 1, value + c * int(values[j]), total + c, rem - c * requests[j])
        x[j] = 0

    dfs(0, 0, 0, limit.copy())
    return int(best["value"]), best["x"]


def solve_linear(plan: DeploymentPlan, ctx: ObjectiveContext, fill_idle: bool = False) -> AllocationOutcome:
    """Maximize ``sum_m x_m * c_m`` with ``c_m`` the decoy-free through-count of ``m``.

    The objective is separable and every decoy stays on its origin's node,
    so each node is an independent two-resource knapsack. With
    ``fill_idle`` the budget left over by the knapsack is filled with
    zero-coefficient microservices (smallest id first), which leaves the
    linear value unchanged but makes the allocation maximal.
    """
    started = time.perf_counter()
    rv = _view(plan, ctx)
    coeff = ctx.through_count
    x = np.zeros(ctx.n, dtype=np.int64)
    value = 0
    for node in range(len(rv.node_ids)):
        members = np.flatnonzero(rv.node_of == node)
        if len(members) == 0:
            continue
        v, counts = knapsack_2d(coeff[members], rv.request[members], rv.limit[node])
        value += v
        x[members] = counts
    if fill_idle:
        used = rv.usage(x)
        while True:
            d_hat = rv.d_hat(used)
            open_ = np.flatnonzero((d_hat >= 1) & (coeff == 0))
            if len(open_) == 0:
                break
            j = open_[0]
            x[j] += 1
            used[rv.node_of[j]] += rv.request[j]
    return _outcome("linear", ctx.ids, x, ctx, started, exact=True, linear_value=int(value))


# -- sidecar and random --------------------------------------------------


def _vulnerability_weight(ms, inbound) -> float:
    # the microservice's own weight; graphs built without a catalog fall back
    # to the lightest inbound edge
    if ms.vulnerabilities:
        return edge_weight(ms.vulnerabilities)
    if ms.id in inbound:
        return float(inbound[ms.id])
    raise ValueError(f"microservice {ms.id!r} has no vulnerabilities and no inbound edges")


def solve_sidecar(plan: DeploymentPlan, g: AttackGraph, ctx: ObjectiveContext | None = None) -> AllocationOutcome:
    """Clone the most vulnerable microservices (lowest inbound edge weight).

    Priority is ``d_hat / w``: deployable decoys over the microservice's
    vulnerability weight. One decoy per iteration until nothing fits.
    """
    started = time.perf_counter()
    ids = list(ctx.ids) if ctx is not None else sorted(g.originals)
    rv = _view(plan, ctx) if ctx is not None else ResourceView(plan, ids)
    by_id = {m.id: m for m in plan.microservices}
    inbound: dict = {}
    for _, v, w in g.edges:
        inbound[v] = min(w, inbound.get(v, np.inf))
    used = np.zeros_like(rv.budget)
    # only microservices that fit at least once can ever be picked
    weight = np.full(len(ids), np.inf)
    for j in np.flatnonzero(rv.d_hat(used) >= 1):
        weight[j] = _vulnerability_weight(by_id[ids[j]], inbound)
    x = np.zeros(len(ids), dtype=np.int64)
    while True:
        d_hat = rv.d_hat(used)
        open_ = np.flatnonzero(d_hat >= 1)
        if len(open_) == 0:
            break
        j = min(open_, key=lambda i: (-_priority_key(d_hat[i] / weight[i]), i))
        x[j] += 1
        used[rv.node_of[j]] += rv.request[j]
    return _outcome("sidecar", ids, x, ctx, started)


def solve_random(plan: DeploymentPlan, seed: int, ctx: ObjectiveContext | None = None) -> AllocationOutcome:
    """Uniformly random microservice among those that still fit, until none does."""
    started = time.perf_counter()
    ids = list(ctx.ids) if ctx is not None else _plan_ids(plan)
    rv = ResourceView(plan, ids)
    rng = np.random.default_rng(seed)
    x = np.zeros(len(ids), dtype=np.int64)
    used = np.zeros_like(rv.budget)
    while True:
        open_ = np.flatnonzero(rv.d_hat(used) >= 1)
        if len(open_) == 0:
            break
        j = open_[rng.integers(len(open_))]
        x[j] += 1
        used[rv.node_of[j]] += rv.request[j]
    return _outcome("random", ids, x, ctx, started)


# -- optimal -------------------------------------------------------------


@dataclass
class SearchLimits:
    max_nodes: int = 5_000_000
    time_limit: float | None = 300.0


def _better(obj, total, vec, best) -> bool:
    tol = OBJ_RTOL * max(1.0, abs(best[0]))
    if obj > best[0] + tol:
        return True
    if obj < best[0] - tol:
        return False
    if total != best[1]:
        return total < best[1]
    return tuple(vec) < tuple(best[2])


def solve_optimal(plan: DeploymentPlan, ctx: ObjectiveContext,
                  limits: SearchLimits | None = None) -> AllocationOutcome:
    """Exact maximizer of the objective by depth-first branch and bound.

    Branches on one microservice at a time (largest count first); the bound
    evaluates the objective with every undecided microservice at the most
    decoys it could still receive alone, which is valid because the
    objective is nondecreasing in every component. Seeded with the
    heuristic and linear allocations. ``exact`` is False when the search
    stopped at a limit; the incumbent is returned then.
    """
    limits = limits or SearchLimits()
    started = time.perf_counter()
    rv = _view(plan, ctx)
    n = ctx.n
    d0 = rv.d_hat(np.zeros_like(rv.budget))
    free = [j for j in range(n) if d0[j] >= 1 and ctx.touches[j]]
    free.sort(key=lambda j: (-(len(ctx.through[j]) + len(ctx.as_src[j]) + len(ctx.as_tgt[j])), j))

    zero = np.zeros(n, dtype=np.int64)
    best = [0.0, 0, zero.copy()]
    for seed_x in (solve_heuristic(plan, ctx).x, solve_linear(plan, ctx).x):
        vec = seed_x.vector(ctx.ids)
        # drop decoys on microservices that cannot affect the objective
        vec = np.where(ctx.touches, vec, 0)
        val = objective(ctx, vec)
        if _better(val, int(vec.sum()), vec, best):
            best[:] = [val, int(vec.sum()), vec]

    x = zero.copy()
    used = np.zeros_like(rv.budget)
    free_arr = np.array(free, dtype=np.int64)
    nodes = 0
    aborted = False
    deadline = None if limits.time_limit is None else started + limits.time_limit

    def dfs(depth: int, total: int) -> None:
        nonlocal nodes, aborted
        if aborted:
            return
        nodes += 1
        if nodes > limits.max_nodes or (deadline is not None and nodes % 1024 == 0 and time.perf_counter() > deadline):
            aborted = True
            return
        if depth == len(free):
            val = objective(ctx, x)
            if _better(val, total, x, best):
                best[:] = [val, total, x.copy()]
            return
        rest = free_arr[depth:]
        d_hat = rv.d_hat(used)
        upper = x.astype(float)
        upper[rest] = d_hat[rest]
        ub = objective(ctx, upper)
        tol = OBJ_RTOL * max(1.0, abs(best[0]))
        if ub < best[0] - tol:
            return
        if ub <= best[0] + tol and total >= best[1]:
            if total == best[1]:
                val = objective(ctx, x)
                if _better(val, total, x, best):
                    best[:] = [val, total, x.copy()]
            return
        j = free[depth]
        node = rv.node_of[j]
        saved = used[node].copy()
        for c in range(int(d_hat[j]), -1, -1):
            x[j] = c
            used[node] = saved + c * rv.request[j]
            dfs(depth + 1, total + c)
            if aborted:
                break
        used[node] = saved
        x[j] = 0

    dfs(0, 0)
    return _outcome("optimal", ctx.ids, best[2], ctx, started, exact=not aborted, nodes=nodes)


def allocate(scheme: str, plan: DeploymentPlan, g: AttackGraph, ctx: ObjectiveContext | None = None,
             seed: int = 0, limits: SearchLimits | None = None, fill_idle: bool = False) -> AllocationOutcome:
    """Run ``scheme`` by name."""
    if ctx is None:
        ctx = ObjectiveContext(compute_attack_paths(g))
    if scheme == "optimal":
        return solve_optimal(plan, ctx, limits)
    if scheme == "heuristic":
        return solve_heuristic(plan, ctx)
    if scheme == "linear":
        return solve_linear(plan, ctx, fill_idle=fill_idle)
    if scheme == "sidecar":
        return solve_sidecar(plan, g, ctx)
    if scheme == "random":
        return solve_random(plan, seed, ctx)
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
