"""Weighted attack graphs, canonical attack paths and betweenness.

Vertices are microservices (and, in augmented graphs, decoy clones). An
edge ``u -> v`` is a lateral movement from ``u`` into ``v``; its weight is
the ECM-weighted mean exploitability of ``v``'s vulnerabilities, so lower
weights mean easier moves. The attacker follows minimum-weight paths.
"""

from __future__ import annotations

import heapq
import json
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np

from . import kernels
from .model import DeploymentPlan, Vulnerability, validate_deployment

#: relative tolerance when comparing path weights for ties
TIE_RTOL = 1e-12


class CycleError(ValueError):
    """The graph has a directed cycle; ``cycle`` holds one as a vertex list."""

    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__(f"graph is not acyclic, cycle: {self.cycle}")


class PathCountOverflow(OverflowError):
    """Number of minimum-weight paths does not fit in 64 bits."""


def edge_weight(vulns: Iterable[Vulnerability]) -> float:
    """ECM-weighted mean of the EM scores of a vulnerability set."""
    vulns = list(vulns)
    if not vulns:
        raise ValueError("edge weight undefined for an empty vulnerability set")
    num = sum(v.em * v.ecm for v in vulns)
    den = sum(v.ecm for v in vulns)
    return num / den


@dataclass(frozen=True)
class AttackGraph:
    """Directed weighted graph over microservice (and decoy) ids.

    ``vertices`` is kept in index order: originals sorted by id, then decoys
    grouped by origin. ``origin`` maps decoy ids to the microservice they
    clone; originals map to themselves and may be omitted.
    """

    vertices: tuple
    edges: tuple  # of (u, v, w)
    origin: Mapping[Any, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))
        object.__setattr__(self, "edges", tuple((u, v, float(w)) for u, v, w in self.edges))
        if len(set(self.vertices)) != len(self.vertices):
            raise ValueError("duplicate vertex ids")

    @classmethod
    def from_edges(cls, vertices, edges, origin=None) -> AttackGraph:
        origin = dict(origin or {})
        originals = sorted(v for v in vertices if origin.get(v, v) == v)
        rank = {v: k for k, v in enumerate(originals)}
        decoys = sorted(
            (v for v in vertices if origin.get(v, v) != v),
            key=lambda d: (rank[origin[d]], str(d)),
        )
        return cls(tuple(originals) + tuple(decoys), tuple(edges), origin)

    def origin_of(self, v):
        return self.origin.get(v, v)

    def is_decoy(self, v) -> bool:
        return self.origin.get(v, v) != v

    @cached_property
    def index(self) -> dict:
        return {v: k for k, v in enumerate(self.vertices)}

    @cached_property
    def originals(self) -> tuple:
        return tuple(v for v in self.vertices if not self.is_decoy(v))

    @cached_property
    def weight(self) -> dict:
        return {(u, v): w for u, v, w in self.edges}

    def successors(self, v) -> list:
        return [b for a, b, _ in self.edges if a == v]

    @cached_property
    def _csr(self):
        n = len(self.vertices)
        idx = self.index
        for u, v, w in self.edges:
            if u not in idx or v not in idx:
                raise KeyError(f"edge ({u!r}, {v!r}) references an unknown vertex")
            if not w > 0:
                raise ValueError(f"edge ({u!r}, {v!r}) has non-positive weight {w}")
        # in-edges grouped by target, sources ascending for determinism
        order = sorted(range(len(self.edges)), key=lambda e: (idx[self.edges[e][1]], idx[self.edges[e][0]]))
        in_src = np.array([idx[self.edges[e][0]] for e in order], dtype=np.int32)
        in_w = np.array([self.edges[e][2] for e in order], dtype=np.float64)
        counts = np.bincount([idx[self.edges[e][1]] for e in order], minlength=n) if order else np.zeros(n, int)
        in_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=in_ptr[1:])
        return in_ptr, in_src, in_w

    @cached_property
    def topo_order(self) -> np.ndarray:
        """Topological order preferring the smallest vertex index first."""
        validate_dag(self)
        n = len(self.vertices)
        idx = self.index
        out: list[list[int]] = [[] for _ in range(n)]
        indeg = [0] * n
        for u, v, _ in self.edges:
            out[idx[u]].append(idx[v])
            indeg[idx[v]] += 1
        heap = [k for k in range(n) if indeg[k] == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            k = heapq.heappop(heap)
            order.append(k)
            for j in out[k]:
                indeg[j] -= 1
                if indeg[j] == 0:
                    heapq.heappush(heap, j)
        return np.array(order, dtype=np.int32)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        doc = {
            "vertices": list(self.vertices),
            "edges": [{"from": u, "to": v, "w": w} for u, v, w in self.edges],
        }
        decoys = {str(v): self.origin[v] for v in self.vertices if self.is_decoy(v)}
        if decoys:
            doc["origin"] = decoys
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping) -> AttackGraph:
        origin = dict(doc.get("origin", {}))
        edges = [(e["from"], e["to"], e["w"]) for e in doc["edges"]]
        return cls.from_edges(doc["vertices"], edges, origin)

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> AttackGraph:
        return cls.from_dict(json.loads(Path(path).read_text()))


def find_cycle(vertices: Sequence, edges: Iterable[tuple]) -> list | None:
    """Return one directed cycle as a vertex list, or None for a DAG."""
    adj: dict[Any, list] = {v: [] for v in vertices}
    for e in edges:
        u, v = e[0], e[1]
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, [])
    WHITE, GREY, BLACK = 0, 1, 2
    color = {v: WHITE for v in adj}
    for root in adj:
        if color[root] != WHITE:
            continue
        stack = [(root, iter(adj[root]))]
        path = [root]
        color[root] = GREY
        while stack:
            v, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[v] = BLACK
                stack.pop()
                path.pop()
                continue
            if color[nxt] == GREY:
                return path[path.index(nxt):]
            if color[nxt] == WHITE:
                color[nxt] = GREY
                path.append(nxt)
                stack.append((nxt, iter(adj[nxt])))
    return None


def validate_dag(g: AttackGraph) -> None:
    """Raise :class:`CycleError` with a witness cycle unless ``g`` is acyclic."""
    cycle = find_cycle(g.vertices, g.edges)
    if cycle is not None:
        raise CycleError(cycle)


def call_graph_order(vertices: Sequence, call_edges: Iterable[tuple]) -> list:
    """Lexicographic topological order of a call graph (smallest id first)."""
    vertices = sorted(vertices)
    call_edges = list(call_edges)
    cycle = find_cycle(vertices, call_edges)
    if cycle is not None:
        raise CycleError(cycle)
    rank = {v: k for k, v in enumerate(vertices)}
    out: dict[Any, list] = {v: [] for v in vertices}
    indeg = {v: 0 for v in vertices}
    for u, v in call_edges:
        out[u].append(v)
        indeg[v] += 1
    heap = [rank[v] for v in vertices if indeg[v] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        v = vertices[heapq.heappop(heap)]
        order.append(v)
        for w in out[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                heapq.heappush(heap, rank[w])
    return order


def build_attack_graph(call_graph: Iterable[tuple], plan: DeploymentPlan,
                       node_vulns: Mapping | None = None) -> AttackGraph:
    """Attack graph from the call graph plus same-node container-escape edges.

    Call edge ``i -> j`` gets the weight of ``j``'s vulnerabilities. Every
    co-located pair not already linked by a call edge gets an escape edge,
    oriented along the call graph's topological order so the result stays
    acyclic, weighted by ``j``'s vulnerabilities together with the node's
    virtualization vulnerabilities.
    """
    if node_vulns is None:
        node_vulns = plan.node_vulns
    problems = validate_deployment(plan)
    if problems:
        raise ValueError("invalid deployment: " + "; ".join(problems))
    services = {m.id: m for m in plan.microservices}
    call_edges = []
    seen = set()
    for u, v in call_graph:
        if u not in services or v not in services:
            raise KeyError(f"call edge ({u!r}, {v!r}) references an unknown microservice")
        if (u, v) not in seen:
            seen.add((u, v))
            call_edges.append((u, v))
    order = call_graph_order(services, call_edges)
    pos = {v: k for k, v in enumerate(order)}

    edges = [(u, v, edge_weight(services[v].vulnerabilities)) for u, v in call_edges]
    by_node: dict[Any, list] = {}
    for m in plan.microservices:
        by_node.setdefault(m.node, []).append(m.id)
    for node_id, members in by_node.items():
        members.sort(key=pos.__getitem__)
        extra = tuple(node_vulns.get(node_id, ()))
        for a_pos, a in enumerate(members):
            for b in members[a_pos + 1:]:
                if (a, b) in seen or (b, a) in seen:
                    continue
                edges.append((a, b, edge_weight(services[b].vulnerabilities + extra)))
    g = AttackGraph.from_edges(list(services), edges)
    validate_dag(g)
    return g


@dataclass(frozen=True, eq=False)
class ApIndex:
    """All-pairs canonical attack paths of a decoy-free attack graph.

    Pair ``p`` runs from ``src[p]`` to ``tgt[p]`` (vertex indices, ordered by
    source then target); its canonical path's interior vertices are
    ``int_nodes[int_ptr[p]:int_ptr[p+1]]``.
    """

    ids: tuple
    dist: np.ndarray
    sigma: np.ndarray
    pred: np.ndarray
    bc: np.ndarray
    src: np.ndarray
    tgt: np.ndarray
    int_ptr: np.ndarray
    int_nodes: np.ndarray

    @cached_property
    def index(self) -> dict:
        return {v: k for k, v in enumerate(self.ids)}

    @property
    def n_pairs(self) -> int:
        return len(self.src)

    @cached_property
    def int_pair(self) -> np.ndarray:
        """Pair id of every entry of ``int_nodes``."""
        return np.repeat(np.arange(self.n_pairs, dtype=np.int64), np.diff(self.int_ptr))

    @cached_property
    def through(self) -> list[np.ndarray]:
        """For each vertex, the pairs whose canonical path has it as interior."""
        order = np.argsort(self.int_nodes, kind="stable")
        bounds = np.searchsorted(self.int_nodes[order], np.arange(len(self.ids) + 1))
        pairs = self.int_pair[order]
        return [pairs[bounds[k]:bounds[k + 1]] for k in range(len(self.ids))]

    def pair_id(self, s, t) -> int:
        si, ti = self.index[s], self.index[t]
        row = np.flatnonzero(self.src == si)
        hit = row[self.tgt[row] == ti]
        if len(hit) == 0:
            raise KeyError(f"{t!r} is not reachable from {s!r}")
        return int(hit[0])

    def path(self, s, t) -> list:
        p = self.pair_id(s, t)
        inner = self.int_nodes[self.int_ptr[p]:self.int_ptr[p + 1]]
        return [s] + [self.ids[k] for k in inner] + [t]

    def multiplicity(self, s, t) -> int:
        return int(self.sigma[self.index[s], self.index[t]])

    def distance(self, s, t) -> float:
        return float(self.dist[self.index[s], self.index[t]])

    def membership(self, i, s, t) -> int:
        """1 when ``i`` is interior to the canonical path from ``s`` to ``t``."""
        try:
            return int(i in self.path(s, t)[1:-1])
        except KeyError:
            return 0

    def pairs_through(self, i) -> list[tuple]:
        return [(self.ids[self.src[p]], self.ids[self.tgt[p]]) for p in self.through[self.index[i]]]


def compute_attack_paths(g: AttackGraph, backend=None) -> ApIndex:
    """Canonical minimum-weight paths, multiplicities and betweenness for ``g``.

    Among equal-weight paths the canonical one has the lexicographically
    smallest vertex-id sequence.
    """
    impl = kernels.get_backend(backend)
    in_ptr, in_src, in_w = g._csr
    n = len(g.vertices)
    try:
        dist, sigma, pred, bc = impl.all_pairs_dag(n, g.topo_order, in_ptr, in_src, in_w, TIE_RTOL)
    except OverflowError as exc:
        raise PathCountOverflow(str(exc)) from None
    src, tgt, int_ptr, int_nodes = impl.extract_paths(pred, dist)
    return ApIndex(g.vertices, dist, sigma, pred, bc, src, tgt, int_ptr, int_nodes)


def betweenness(idx: ApIndex, v) -> float:
    """Sum over ordered pairs (s, t), both different from ``v``, of the share
    of minimum-weight s-t paths that pass through ``v``."""
    if v not in idx.index:
        raise KeyError(f"unknown vertex {v!r}")
    return float(idx.bc[idx.index[v]])
