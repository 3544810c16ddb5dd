"""Nodes, microservices, resource requests and decoy-allocation feasibility.

Resources are normalized reals (fractions of a reference node) for two
kinds, CPU and RAM. A decoy clones a microservice and is pinned to that
microservice's node, consuming the same request out of the node's decoy
budget ``delta * unused capacity``.
"""

from __future__ import annotations

import json
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

#: relative tolerance for every budget comparison
RTOL = 1e-9

RESOURCES = ("cpu", "ram")


class DeploymentError(ValueError):
    """A plan is structurally malformed (unresolvable or missing node ids)."""


@dataclass(frozen=True)
class Vulnerability:
    em: float
    ecm: float

    def __post_init__(self):
        if not (self.em > 0 and self.ecm > 0):
            raise ValueError(f"vulnerability metrics must be positive, got {self}")


@dataclass(frozen=True)
class ComputeNode:
    id: Any
    cpu_capacity: float
    ram_capacity: float


@dataclass(frozen=True)
class Microservice:
    id: Any
    cpu_request: float
    ram_request: float
    node: Any
    vulnerabilities: tuple[Vulnerability, ...] = ()

    @property
    def request(self) -> tuple[float, float]:
        return (self.cpu_request, self.ram_request)


@dataclass(frozen=True)
class DeploymentPlan:
    nodes: tuple[ComputeNode, ...]
    microservices: tuple[Microservice, ...]
    delta: float = 0.0
    #: virtualization vulnerabilities per node id, used for container-escape edges
    node_vulns: Mapping[Any, tuple[Vulnerability, ...]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "microservices", tuple(self.microservices))

    def node(self, node_id) -> ComputeNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(f"unknown node {node_id!r}")

    def microservice(self, ms_id) -> Microservice:
        for m in self.microservices:
            if m.id == ms_id:
                return m
        raise KeyError(f"unknown microservice {ms_id!r}")

    def with_delta(self, delta: float) -> DeploymentPlan:
        return DeploymentPlan(self.nodes, self.microservices, delta, self.node_vulns)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        nodes = []
        for n in self.nodes:
            entry = {"id": n.id, "cpu": n.cpu_capacity, "ram": n.ram_capacity}
            if self.node_vulns.get(n.id):
                entry["vulns"] = [{"em": v.em, "ecm": v.ecm} for v in self.node_vulns[n.id]]
            nodes.append(entry)
        return {
            "nodes": nodes,
            "microservices": [
                {
                    "id": m.id,
                    "cpu": m.cpu_request,
                    "ram": m.ram_request,
                    "node": m.node,
                    "vulns": [{"em": v.em, "ecm": v.ecm} for v in m.vulnerabilities],
                }
                for m in self.microservices
            ],
            "delta": self.delta,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> DeploymentPlan:
        nodes = []
        node_vulns = {}
        for n in doc["nodes"]:
            nodes.append(ComputeNode(n["id"], float(n["cpu"]), float(n["ram"])))
            if n.get("vulns"):
                node_vulns[n["id"]] = tuple(Vulnerability(v["em"], v["ecm"]) for v in n["vulns"])
        services = [
            Microservice(
                m["id"],
                float(m["cpu"]),
                float(m["ram"]),
                m.get("node"),
                tuple(Vulnerability(v["em"], v["ecm"]) for v in m.get("vulns", ())),
            )
            for m in doc["microservices"]
        ]
        return cls(tuple(nodes), tuple(services), float(doc.get("delta", 0.0)), node_vulns)

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> DeploymentPlan:
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class DecoyAllocation:
    """Number of decoys per microservice id; absent ids count as zero."""

    counts: Mapping[Any, int]

    def __post_init__(self):
        clean = {}
        for k, v in self.counts.items():
            if int(v) != v or v < 0:
                raise ValueError(f"decoy count for {k!r} must be a non-negative integer, got {v}")
            if v:
                clean[k] = int(v)
        object.__setattr__(self, "counts", clean)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def __getitem__(self, ms_id) -> int:
        return self.counts.get(ms_id, 0)

    def vector(self, ids) -> np.ndarray:
        return np.array([self.counts.get(i, 0) for i in ids], dtype=np.int64)

    @classmethod
    def from_vector(cls, ids, x) -> DecoyAllocation:
        return cls({i: int(v) for i, v in zip(ids, x) if v})

    @classmethod
    def zeros(cls) -> DecoyAllocation:
        return cls({})


def as_counts(x) -> Mapping:
    if isinstance(x, DecoyAllocation):
        return x.counts
    return x


# -- operations ---------------------------------------------------------


def validate_deployment(plan: DeploymentPlan) -> list[str]:
    """Check both deployment conditions for CPU and RAM.

    Returns a list of human-readable violations, empty when the plan is
    valid. Raises :class:`DeploymentError` when a microservice has no node or
    refers to a node that does not exist.
    """
    node_ids = [n.id for n in plan.nodes]
    if len(set(node_ids)) != len(node_ids):
        raise DeploymentError("duplicate node ids")
    ms_ids = [m.id for m in plan.microservices]
    if len(set(ms_ids)) != len(ms_ids):
        raise DeploymentError("duplicate microservice ids")
    known = set(node_ids)
    for m in plan.microservices:
        if m.node is None:
            raise DeploymentError(f"microservice {m.id!r} is not assigned to a node")
        if m.node not in known:
            raise DeploymentError(f"microservice {m.id!r} refers to unknown node {m.node!r}")

    violations = []
    for n in plan.nodes:
        if n.cpu_capacity <= 0 or n.ram_capacity <= 0:
            violations.append(f"node {n.id!r}: capacities must be positive")
    for m in plan.microservices:
        if m.cpu_request <= 0 or m.ram_request <= 0:
            violations.append(f"microservice {m.id!r}: requests must be positive")
    for n in plan.nodes:
        used = _used(plan, n.id)
        for k, kind in enumerate(RESOURCES):
            cap = (n.cpu_capacity, n.ram_capacity)[k]
            if used[k] > cap * (1 + RTOL):
                violations.append(f"node {n.id!r}: {kind} requests {used[k]:.6g} exceed capacity {cap:.6g}")
    if not 0.0 <= plan.delta <= 1.0:
        violations.append(f"delta {plan.delta} outside [0, 1]")
    return violations


def _used(plan: DeploymentPlan, node_id) -> tuple[float, float]:
    cpu = ram = 0.0
    for m in plan.microservices:
        if m.node == node_id:
            cpu += m.cpu_request
            ram += m.ram_request
    return cpu, ram


def available_resources(plan: DeploymentPlan, node_id) -> tuple[float, float]:
    """Unused (CPU, RAM) on a node after the production deployment."""
    n = plan.node(node_id)
    cpu, ram = _used(plan, node_id)
    return max(n.cpu_capacity - cpu, 0.0), max(n.ram_capacity - ram, 0.0)


def _fits(used: float, budget: float) -> bool:
    return used <= budget + RTOL * abs(budget)


def _max_count(used: float, request: float, budget: float) -> int:
    # largest k with used + k*request within budget
    limit = budget + RTOL * abs(budget)
    if used > limit:
        return 0
    k = math.floor((limit - used) / request)
    while k > 0 and used + k * request > limit:
        k -= 1
    while used + (k + 1) * request <= limit:
        k += 1
    return k


def decoy_budget(plan: DeploymentPlan, node_id) -> tuple[float, float]:
    cpu, ram = available_resources(plan, node_id)
    return plan.delta * cpu, plan.delta * ram


def max_deployable_decoys(plan: DeploymentPlan, ms_id) -> int:
    """How many clones of ``ms_id`` fit in its node's decoy budget, alone."""
    m = plan.microservice(ms_id)
    budget = decoy_budget(plan, m.node)
    return min(_max_count(0.0, r, b) for r, b in zip(m.request, budget))


def check_allocation_feasible(plan: DeploymentPlan, x) -> bool:
    counts = as_counts(x)
    by_id = {m.id: m for m in plan.microservices}
    used: dict[Any, list[float]] = {}
    for ms_id, k in counts.items():
        if ms_id not in by_id:
            raise KeyError(f"allocation references unknown microservice {ms_id!r}")
        if k < 0:
            return False
        if k == 0:
            continue
        m = by_id[ms_id]
        acc = used.setdefault(m.node, [0.0, 0.0])
        acc[0] += k * m.cpu_request
        acc[1] += k * m.ram_request
    for node_id, (cpu, ram) in used.items():
        b_cpu, b_ram = decoy_budget(plan, node_id)
        if not (_fits(cpu, b_cpu) and _fits(ram, b_ram)):
            return False
    return True


class ResourceView:
    """Array view of a plan's decoy budgets, indexed by a fixed microservice order.

    Allocators use this to track per-node consumption and recompute the
    number of deployable decoys for every microservice at once.
    """

    def __init__(self, plan: DeploymentPlan, ids):
        self.ids = list(ids)
        by_id = {m.id: m for m in plan.microservices}
        missing = [i for i in self.ids if i not in by_id]
        if missing:
            raise KeyError(f"microservices not in plan: {missing[:5]}")
        node_index = {n.id: k for k, n in enumerate(plan.nodes)}
        self.node_ids = [n.id for n in plan.nodes]
        self.node_of = np.array([node_index[by_id[i].node] for i in self.ids], dtype=np.int64)
        self.request = np.array([by_id[i].request for i in self.ids], dtype=float).reshape(-1, 2)
        self.budget = np.array([decoy_budget(plan, nid) for nid in self.node_ids], dtype=float).reshape(-1, 2)
        self.limit = self.budget + RTOL * np.abs(self.budget)

    def d_hat(self, used: np.ndarray) -> np.ndarray:
        """Deployable decoys per microservice given per-node consumption ``used``."""
        u = used[self.node_of]
        lim = self.limit[self.node_of]
        r = self.request
        k = np.floor(np.maximum(lim - u, 0.0) / r)
        k = np.where(u + k * r > lim, k - 1, k)
        k = np.where(u + (k + 1) * r <= lim, k + 1, k)
        k = np.where(u > lim, 0, np.maximum(k, 0))
        return k.min(axis=1).astype(np.int64)

    def usage(self, x: np.ndarray) -> np.ndarray:
        used = np.zeros_like(self.budget)
        # sequential accumulation keeps results independent of numpy's pairwise summation
        for j in np.flatnonzero(x):
            used[self.node_of[j]] += x[j] * self.request[j]
        return used

    def feasible(self, x: np.ndarray) -> bool:
        return bool(np.all(self.usage(x) <= self.limit))

    def fits_one_more(self, used: np.ndarray, j: int) -> bool:
        n = self.node_of[j]
        return bool(np.all(used[n] + self.request[j] <= self.limit[n]))
