"""Decoy-aware betweenness, the allocation objective and DAP metrics.

A decoy clones a microservice together with all of its attack-graph
edges, so every minimum-weight path through the original now also exists
through each clone. With ``x[i]`` clones of vertex ``i`` the canonical path
of a pair ``(s, t)`` is replicated ``(1 + x[s]) * (1 + x[t])`` times at its
endpoints, and a walk along it hits a decoy at interior vertex ``i`` with
probability ``x[i] / (1 + x[i])``. The objective sums these expectations.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from .attack_graph import TIE_RTOL, ApIndex, AttackGraph, PathCountOverflow
from .model import DecoyAllocation


class ObjectiveContext:
    """Pair lists of an :class:`ApIndex` restricted to paths with interior vertices.

    Everything the objective and its marginal gains need: per pair the
    endpoints and interior vertices, per vertex the pairs it is interior
    to, starts, or ends.
    """

    def __init__(self, idx: ApIndex):
        self.idx = idx
        self.ids = idx.ids
        self.index = idx.index
        self.n = len(self.ids)
        lengths = np.diff(idx.int_ptr)
        keep = np.flatnonzero(lengths > 0)
        self.src = idx.src[keep].astype(np.int64)
        self.tgt = idx.tgt[keep].astype(np.int64)
        lengths = lengths[keep]
        self.int_ptr = np.zeros(len(keep) + 1, dtype=np.int64)
        np.cumsum(lengths, out=self.int_ptr[1:])
        take = np.repeat(idx.int_ptr[keep], lengths) + (
            np.arange(self.int_ptr[-1]) - np.repeat(self.int_ptr[:-1], lengths)
        )
        self.int_nodes = idx.int_nodes[take].astype(np.int64)
        self.int_pair = np.repeat(np.arange(len(keep), dtype=np.int64), lengths)
        self.through = _group(self.int_nodes, self.int_pair, self.n)
        pair_ids = np.arange(len(keep), dtype=np.int64)
        self.as_src = _group(self.src, pair_ids, self.n)
        self.as_tgt = _group(self.tgt, pair_ids, self.n)
        #: decoy-free through-counts, the linear scheme's coefficients
        self.through_count = np.bincount(self.int_nodes, minlength=self.n).astype(np.int64)
        self.bc = idx.bc

    @property
    def n_pairs(self) -> int:
        return len(self.src)

    @cached_property
    def touches(self) -> np.ndarray:
        """Vertices that appear in at least one pair with interior vertices."""
        hit = np.zeros(self.n, dtype=bool)
        hit[self.src] = True
        hit[self.tgt] = True
        hit[self.int_nodes] = True
        return hit

    def vector(self, x) -> np.ndarray:
        if isinstance(x, np.ndarray):
            if x.shape != (self.n,):
                raise ValueError(f"allocation vector must have shape ({self.n},)")
            return x.astype(float)
        counts = x.counts if isinstance(x, DecoyAllocation) else x
        v = np.zeros(self.n)
        for k, c in counts.items():
            if k not in self.index:
                raise KeyError(f"unknown microservice {k!r}")
            v[self.index[k]] = c
        return v

    def pair_interior_sums(self, values: np.ndarray, pairs: np.ndarray) -> np.ndarray:
        """Sum of ``values`` over the interior of each listed pair."""
        if len(pairs) == 0:
            return np.zeros(0)
        starts = self.int_ptr[pairs]
        lengths = self.int_ptr[pairs + 1] - starts
        offsets = np.zeros(len(pairs), dtype=np.int64)
        np.cumsum(lengths[:-1], out=offsets[1:])
        take = np.repeat(starts - offsets, lengths) + np.arange(lengths.sum())
        return np.add.reduceat(values[self.int_nodes[take]], offsets)


def _group(keys: np.ndarray, values: np.ndarray, n: int) -> list[np.ndarray]:
    order = np.argsort(keys, kind="stable")
    bounds = np.searchsorted(keys[order], np.arange(n + 1))
    vals = values[order]
    return [vals[bounds[k]:bounds[k + 1]] for k in range(n)]


def decoy_share(xv: np.ndarray) -> np.ndarray:
    """Probability that a walk through a vertex with ``x`` clones hits a decoy."""
    return xv / (1.0 + xv)


def deceptive_betweenness(ctx: ObjectiveContext, x, i) -> float:
    xv = ctx.vector(x)
    k = ctx.index[i]
    pairs = ctx.through[k]
    ends = (1.0 + xv[ctx.src[pairs]]) * (1.0 + xv[ctx.tgt[pairs]])
    return float(ends.sum() / (1.0 + xv[k]))


def objective(ctx: ObjectiveContext, x) -> float:
    """Sum over microservices of ``x[m]`` times its decoy-aware betweenness.

    Evaluated in the per-pair factored form
    ``sum_p (1+x_s)(1+x_t) * sum_{i interior} x_i/(1+x_i)``.
    """
    xv = ctx.vector(x)
    if ctx.n_pairs == 0:
        return 0.0
    share = decoy_share(xv)
    inner = np.bincount(ctx.int_pair, weights=share[ctx.int_nodes], minlength=ctx.n_pairs)
    ends = (1.0 + xv[ctx.src]) * (1.0 + xv[ctx.tgt])
    return float(ends @ inner)


def marginal_gain(ctx: ObjectiveContext, x, i) -> float:
    """Objective increase from one more decoy on ``i``.

    Only pairs that have ``i`` as an interior vertex or as an endpoint are
    touched.
    """
    xv = ctx.vector(x)
    k = ctx.index[i]
    xi = xv[k]
    gain = 0.0
    pairs = ctx.through[k]
    if len(pairs):
        ends = (1.0 + xv[ctx.src[pairs]]) * (1.0 + xv[ctx.tgt[pairs]])
        gain += ends.sum() / ((1.0 + xi) * (2.0 + xi))
    share = decoy_share(xv)
    pairs = ctx.as_src[k]
    if len(pairs):
        gain += float((1.0 + xv[ctx.tgt[pairs]]) @ ctx.pair_interior_sums(share, pairs))
    pairs = ctx.as_tgt[k]
    if len(pairs):
        gain += float((1.0 + xv[ctx.src[pairs]]) @ ctx.pair_interior_sums(share, pairs))
    return float(gain)


def all_marginal_gains(ctx: ObjectiveContext, xv: np.ndarray) -> np.ndarray:
    """Vector of marginal gains for every vertex at allocation ``xv``."""
    if ctx.n_pairs == 0:
        return np.zeros(ctx.n)
    share = decoy_share(xv)
    inner = np.bincount(ctx.int_pair, weights=share[ctx.int_nodes], minlength=ctx.n_pairs)
    one_s = 1.0 + xv[ctx.src]
    one_t = 1.0 + xv[ctx.tgt]
    ends = one_s * one_t
    gain = np.bincount(ctx.int_nodes, weights=ends[ctx.int_pair], minlength=ctx.n)
    gain /= (1.0 + xv) * (2.0 + xv)
    gain += np.bincount(ctx.src, weights=one_t * inner, minlength=ctx.n)
    gain += np.bincount(ctx.tgt, weights=one_s * inner, minlength=ctx.n)
    return gain


# -- augmented graph and ground-truth metrics ----------------------------


def decoy_id(ms_id, j: int) -> str:
    return f"{ms_id}#d{j}"


def build_augmented_graph(g: AttackGraph, x) -> AttackGraph:
    """Attack graph with ``x[m]`` clones of every microservice ``m``.

    Each clone carries its origin's in- and out-edges with the same
    weights; edges between two cloned endpoints are replicated for every
    combination of copies. Clones of the same origin are not connected.
    """
    if any(g.is_decoy(v) for v in g.vertices):
        raise ValueError("graph already contains decoys")
    counts = x.counts if isinstance(x, DecoyAllocation) else dict(x)
    for m in counts:
        if m not in g.index:
            raise KeyError(f"unknown microservice {m!r}")
    copies = {v: [v] + [decoy_id(v, j) for j in range(1, int(counts.get(v, 0)) + 1)] for v in g.vertices}
    origin = {d: v for v, cs in copies.items() for d in cs[1:]}
    edges = [(a, b, w) for u, v, w in g.edges for a in copies[u] for b in copies[v]]
    vertices = [c for cs in copies.values() for c in cs]
    return AttackGraph.from_edges(vertices, edges, origin)


@dataclass(frozen=True)
class DapMetrics:
    total_aps: int
    total_daps: int
    dap_fraction: float
    decoys_per_dap: float
    decoy_visits: int = 0

    def to_dict(self) -> dict:
        return {
            "total_aps": self.total_aps,
            "total_daps": self.total_daps,
            "dap_fraction": self.dap_fraction,
            "decoys_per_dap": self.decoys_per_dap,
        }


def count_daps(g: AttackGraph, x, backend=None) -> DapMetrics:
    """Count attack paths and deceptive attack paths after placing ``x``.

    Counts every minimum-weight path of the augmented graph between
    ordered pairs of original microservices, with multiplicity. A path is
    deceptive when it visits at least one decoy.
    """
    aug = build_augmented_graph(g, x)
    impl = kernels.get_backend(backend)
    in_ptr, in_src, in_w = aug._csr
    n = len(aug.vertices)
    n_orig = len(g.vertices)
    is_decoy = np.zeros(n, dtype=np.uint8)
    is_decoy[n_orig:] = 1
    sources = np.arange(n_orig, dtype=np.int32)
    try:
        paths, clean, decoys = impl.count_augmented(
            n, aug.topo_order, in_ptr, in_src, in_w, is_decoy, sources, 1 - is_decoy, TIE_RTOL
        )
    except OverflowError as exc:
        raise PathCountOverflow(str(exc)) from None
    total = sum(int(v) for v in paths)
    plain = sum(int(v) for v in clean)
    visits = sum(int(v) for v in decoys)
    daps = total - plain
    return DapMetrics(
        total_aps=total,
        total_daps=daps,
        dap_fraction=daps / total if total else 0.0,
        decoys_per_dap=visits / daps if daps else 0.0,
        decoy_visits=visits,
    )


ORACLE_MAX_VERTICES = 12


def _enumerate_from(adj: Mapping, source) -> dict:
    """All paths leaving ``source``: target -> list of (weight, vertex tuple)."""
    found: dict = {}
    stack = [(source, 0.0, (source,))]
    while stack:
        v, w, path = stack.pop()
        for nxt, ew in adj[v]:
            nw = w + ew
            npath = path + (nxt,)
            found.setdefault(nxt, []).append((nw, npath))
            stack.append((nxt, nw, npath))
    return found


def expected_interceptions_oracle(g: AttackGraph, x, max_vertices: int = ORACLE_MAX_VERTICES) -> float:
    """Exhaustive check value for the objective on small graphs.

    Enumerates every path of the augmented graph between every ordered pair
    of vertices (originals and clones alike), keeps the minimum-weight ones
    and adds up, per pair, the mean number of interior decoys.
    """
    if len(g.vertices) > max_vertices:
        raise ValueError(f"oracle refuses graphs with more than {max_vertices} vertices")
    aug = build_augmented_graph(g, x)
    adj: dict = {v: [] for v in aug.vertices}
    for u, v, w in aug.edges:
        adj[u].append((v, w))
    total = 0.0
    for s in aug.vertices:
        for _t, paths in sorted(_enumerate_from(adj, s).items(), key=lambda kv: str(kv[0])):
            best = min(w for w, _ in paths)
            limit = best + TIE_RTOL * abs(best)
            hits = [sum(aug.is_decoy(v) for v in p[1:-1]) for w, p in paths if w <= limit]
            total += math.fsum(hits) / len(hits)
    return total


def enumerate_dap_metrics(g: AttackGraph, x, max_vertices: int = ORACLE_MAX_VERTICES) -> DapMetrics:
    """:func:`count_daps` by explicit path enumeration, for cross-checking."""
    if len(g.vertices) > max_vertices:
        raise ValueError(f"enumeration refuses graphs with more than {max_vertices} vertices")
    aug = build_augmented_graph(g, x)
    adj: dict = {v: [] for v in aug.vertices}
    for u, v, w in aug.edges:
        adj[u].append((v, w))
    total = daps = visits = 0
    for s in g.vertices:
        for t, paths in _enumerate_from(adj, s).items():
            if aug.is_decoy(t):
                continue
            best = min(w for w, _ in paths)
            limit = best + TIE_RTOL * abs(best)
            for w, p in paths:
                if w > limit:
                    continue
                total += 1
                k = sum(aug.is_decoy(v) for v in p)
                if k:
                    daps += 1
                    visits += k
    return DapMetrics(total, daps, daps / total if total else 0.0, visits / daps if daps else 0.0, visits)
