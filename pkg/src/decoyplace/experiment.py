"""Synthetic scenarios, sweeps and CSV output.

One scenario sample is: Barabasi-Albert call graph -> CVSS-style
vulnerabilities -> trace-driven resource requests packed onto unit nodes
-> attack graph -> every allocation scheme -> DAP metrics.

Randomness is split per sample and per stage with :func:`hash64`, so a
sample is reproducible on its own regardless of which other samples or
configs run next to it.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
import math
import time
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .allocators import SCHEMES, SearchLimits, allocate
from .attack_graph import AttackGraph, build_attack_graph, compute_attack_paths
from .model import ComputeNode, DeploymentPlan, Microservice, Vulnerability, check_allocation_feasible
from .objective import ObjectiveContext, count_daps

log = logging.getLogger(__name__)

#: CVSS v3 exploitability range and the temporal exploit-code-maturity levels
EM_RANGE = (0.1, 3.9)
ECM_LEVELS = (0.91, 0.94, 0.97, 1.0)
SYNTHETIC_REQUEST_RANGE = (0.01, 0.2)
SYNTHETIC_POOL_SIZE = 10_000

RAW_COLUMNS = (
    "config_id", "sample", "scheme", "m_count", "delta", "nodes", "decoys", "decoy_ratio",
    "total_aps", "total_daps", "dap_fraction", "decoys_per_dap", "objective", "exact", "wall_time_s",
)
SUMMARY_METRICS = ("dap_fraction", "decoys_per_dap", "decoys", "decoy_ratio", "objective", "wall_time_s")


def hash64(master_seed: int, sample_index: int, stage_tag: str) -> int:
    """Child seed: first 8 bytes (little endian) of BLAKE2b over ``"{master}:{sample}:{stage}"``."""
    digest = hashlib.blake2b(f"{master_seed}:{sample_index}:{stage_tag}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class ScenarioConfig:
    m_count: int
    attach: int = 2
    delta: float = 0.3
    pack_threshold: float = 0.7
    samples: int = 1
    master_seed: int = 0
    vuln_count_range: tuple[int, int] = (3, 5)
    trace_source: str = "synthetic"
    optimal_max_m: int = 30
    schemes: tuple[str, ...] = SCHEMES
    config_id: str = ""
    record_wall_time: bool = False

    def __post_init__(self):
        object.__setattr__(self, "vuln_count_range", tuple(self.vuln_count_range))
        object.__setattr__(self, "schemes", tuple(self.schemes))
        if self.m_count < 2:
            raise ValueError("m_count must be at least 2")
        if not 0 < self.pack_threshold <= 1:
            raise ValueError("pack_threshold must be in (0, 1]")
        if self.samples < 1:
            raise ValueError("samples must be at least 1")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown:
            raise ValueError(f"unknown schemes {sorted(unknown)}")
        if not self.config_id:
            object.__setattr__(self, "config_id", f"m{self.m_count}_d{self.delta:g}")

    @classmethod
    def from_dict(cls, doc: Mapping) -> ScenarioConfig:
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**doc)


# -- scenario generation -------------------------------------------------


def generate_topology(m_count: int, attach: int, seed: int) -> list[tuple[int, int]]:
    """Barabasi-Albert call graph, edges oriented from older to newer vertex.

    Vertices ``0..attach-1`` start unconnected; each later vertex links to
    ``attach`` distinct existing vertices drawn proportionally to degree.
    """
    if not (m_count > attach >= 1):
        raise ValueError(f"need m_count > attach >= 1, got m_count={m_count}, attach={attach}")
    rng = np.random.default_rng(seed)
    edges = []
    repeated: list[int] = []
    targets = list(range(attach))
    for new in range(attach, m_count):
        edges.extend((t, new) for t in targets)
        repeated.extend(targets)
        repeated.extend([new] * attach)
        chosen: set[int] = set()
        while len(chosen) < attach:
            chosen.add(repeated[rng.integers(len(repeated))])
        targets = sorted(chosen)
    return edges


def _sample_vulns(rng, count_range) -> tuple[Vulnerability, ...]:
    lo, hi = count_range
    k = int(rng.integers(lo, hi + 1))
    em = rng.uniform(*EM_RANGE, size=k)
    ecm = rng.choice(ECM_LEVELS, size=k)
    return tuple(Vulnerability(float(a), float(b)) for a, b in zip(em, ecm))


def sample_vulnerabilities(m_count: int, node_count: int, seed: int, count_range=(3, 5)):
    """Vulnerability sets per microservice and per node (virtualization layer)."""
    if m_count < 1 or node_count < 1:
        raise ValueError("counts must be positive")
    rng = np.random.default_rng(seed)
    per_ms = [_sample_vulns(rng, count_range) for _ in range(m_count)]
    per_node = [_sample_vulns(rng, count_range) for _ in range(node_count)]
    return per_ms, per_node


class TraceFormatError(ValueError):
    pass


def ingest_traces(path, seed: int | None = None, size: int = SYNTHETIC_POOL_SIZE) -> list[tuple[float, float]]:
    """Load a pool of normalized (cpu_request, ram_request) pairs.

    ``path`` is a CSV file with header ``container_id,cpu_request,ram_request``
    or the string ``"synthetic"``, which draws ``size`` log-uniform pairs in
    [0.01, 0.2] from ``seed``. Values above 1 are clamped to 1; non-positive
    values are rejected.
    """
    if str(path) == "synthetic":
        rng = np.random.default_rng(seed)
        lo, hi = np.log(SYNTHETIC_REQUEST_RANGE[0]), np.log(SYNTHETIC_REQUEST_RANGE[1])
        draws = np.exp(rng.uniform(lo, hi, size=(size, 2)))
        return [(float(c), float(r)) for c, r in draws]

    pool = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["container_id", "cpu_request", "ram_request"]:
            raise TraceFormatError(f"{path}: expected header container_id,cpu_request,ram_request")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise TraceFormatError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            try:
                cpu, ram = float(row[1]), float(row[2])
            except ValueError:
                raise TraceFormatError(f"{path}:{lineno}: non-numeric request") from None
            if not (cpu > 0 and ram > 0) or not (math.isfinite(cpu) and math.isfinite(ram)):
                raise TraceFormatError(f"{path}:{lineno}: requests must be positive and finite")
            pool.append((min(cpu, 1.0), min(ram, 1.0)))
    if not pool:
        raise TraceFormatError(f"{path}: no containers")
    return pool


def pack_nodes(pool: Sequence[tuple[float, float]], m_count: int, pack_threshold: float, seed: int,
               vulnerabilities: Sequence | None = None, node_vulns: Sequence | None = None,
               delta: float = 0.0) -> DeploymentPlan:
    """Sample ``m_count`` requests from ``pool`` and fill unit nodes in order.

    A new node is opened whenever the next microservice would push either
    resource of the current node above ``pack_threshold``.
    """
    if not pool:
        raise ValueError("empty resource pool")
    rng = np.random.default_rng(seed)
    picks = rng.integers(len(pool), size=m_count)
    requests = [pool[k] for k in picks]
    limit = pack_threshold * (1 + 1e-9)
    for k, (c, r) in enumerate(requests):
        if c > limit or r > limit:
            raise ValueError(f"request {k} ({c}, {r}) exceeds the packing threshold {pack_threshold}")

    assignment = []
    node = 0
    fill = [0.0, 0.0]
    for c, r in requests:
        if fill[0] + c > limit or fill[1] + r > limit:
            node += 1
            fill = [0.0, 0.0]
        fill[0] += c
        fill[1] += r
        assignment.append(node)
    nodes = tuple(ComputeNode(n, 1.0, 1.0) for n in range(node + 1))
    services = tuple(
        Microservice(m, c, r, assignment[m], tuple(vulnerabilities[m]) if vulnerabilities is not None else ())
        for m, (c, r) in enumerate(requests)
    )
    nv = {n: tuple(node_vulns[n]) for n in range(len(nodes))} if node_vulns is not None else {}
    return DeploymentPlan(nodes, services, delta, nv)


@dataclass
class Scenario:
    call_graph: list
    plan: DeploymentPlan
    graph: AttackGraph
    ctx: ObjectiveContext


_POOL_CACHE: dict = {}


def _pool_for(config: ScenarioConfig):
    key = (config.trace_source, config.master_seed)
    if key not in _POOL_CACHE:
        seed = hash64(config.master_seed, 0, "pool")
        _POOL_CACHE[key] = ingest_traces(config.trace_source, seed=seed)
    return _POOL_CACHE[key]


def make_plan(pool, m_count: int, pack_threshold: float, delta: float, master_seed: int, sample_index: int,
              vuln_count_range=(3, 5)) -> DeploymentPlan:
    """Packed plan with sampled vulnerabilities for one sample."""
    resources_seed = hash64(master_seed, sample_index, "resources")
    packed = pack_nodes(pool, m_count, pack_threshold, resources_seed)
    per_ms, per_node = sample_vulnerabilities(
        m_count, len(packed.nodes), hash64(master_seed, sample_index, "vulnerabilities"), vuln_count_range
    )
    services = tuple(replace(m, vulnerabilities=per_ms[k]) for k, m in enumerate(packed.microservices))
    node_vulns = {n.id: per_node[k] for k, n in enumerate(packed.nodes)}
    return DeploymentPlan(packed.nodes, services, delta, node_vulns)


def build_scenario(config: ScenarioConfig, sample_index: int) -> Scenario:
    seed = config.master_seed
    call_graph = generate_topology(config.m_count, config.attach, hash64(seed, sample_index, "topology"))
    plan = make_plan(_pool_for(config), config.m_count, config.pack_threshold, config.delta, seed, sample_index,
                     config.vuln_count_range)
    graph = build_attack_graph(call_graph, plan)
    ctx = ObjectiveContext(compute_attack_paths(graph))
    return Scenario(call_graph, plan, graph, ctx)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run_scenario(config: ScenarioConfig, sample_index: int, scenario: Scenario | None = None) -> list[dict]:
    """Run every configured scheme on one sample; one row per scheme.

    The optimal scheme is skipped (row left blank) above ``optimal_max_m``
    microservices. A failing scheme only blanks its own row.
    """
    sc = scenario or build_scenario(config, sample_index)
    base = {
        "config_id": config.config_id,
        "sample": sample_index,
        "m_count": config.m_count,
        "delta": config.delta,
        "nodes": len(sc.plan.nodes),
    }
    rows = []
    for scheme in config.schemes:
        row = dict(base, scheme=scheme)
        row.update({k: None for k in RAW_COLUMNS if k not in row})
        if scheme == "optimal" and config.m_count > config.optimal_max_m:
            rows.append(row)
            continue
        try:
            out = allocate(scheme, sc.plan, sc.graph, sc.ctx,
                           seed=hash64(config.master_seed, sample_index, "random"),
                           limits=SearchLimits(), fill_idle=True)
            if not check_allocation_feasible(sc.plan, out.x):
                raise RuntimeError(f"{scheme} produced an infeasible allocation")
            metrics = count_daps(sc.graph, out.x)
        except Exception:
            log.exception("scheme %s failed on %s sample %d", scheme, config.config_id, sample_index)
            rows.append(row)
            continue
        row.update(
            decoys=out.decoys,
            decoy_ratio=out.decoys / config.m_count,
            total_aps=metrics.total_aps,
            total_daps=metrics.total_daps,
            dap_fraction=metrics.dap_fraction,
            decoys_per_dap=metrics.decoys_per_dap,
            objective=out.objective_value,
            exact=out.exact,
            wall_time_s=out.wall_time,
        )
        row["_x"] = out.x
        rows.append(row)
    return rows


def mean_ci(values: Sequence[float]) -> tuple[float | None, float | None]:
    """Mean and 95% normal-approximation half-width (None with < 2 values)."""
    vals = [float(v) for v in values]
    if not vals:
        return None, None
    mean = math.fsum(vals) / len(vals)
    if len(vals) < 2:
        return mean, None
    var = math.fsum((v - mean) ** 2 for v in vals) / (len(vals) - 1)
    return mean, 1.96 * math.sqrt(var) / math.sqrt(len(vals))


def summarize(rows: Iterable[dict]) -> list[dict]:
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["config_id"], r["scheme"]), []).append(r)
    out = []
    for (cid, scheme), rs in groups.items():
        done = [r for r in rs if r["dap_fraction"] is not None]
        entry = {
            "config_id": cid,
            "scheme": scheme,
            "m_count": rs[0]["m_count"],
            "delta": rs[0]["delta"],
            "samples": len(done),
        }
        for metric in SUMMARY_METRICS:
            vals = [r[metric] for r in done if r[metric] is not None]
            entry[f"{metric}_mean"], entry[f"{metric}_ci95"] = mean_ci(vals)
        out.append(entry)
    return out


def _write_csv(path: Path, columns: Sequence[str], rows: Iterable[dict]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(r.get(c)) for c in columns])
    try:
        path.write_text(buf.getvalue())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def expand_sweep(doc: Mapping) -> list[ScenarioConfig]:
    """Configs from a sweep document.

    Keys: ``master_seed``, ``samples``, ``defaults`` (shared fields),
    ``configs`` (explicit list) and/or ``grid`` (field -> list of values,
    Cartesian product).
    """
    shared = dict(doc.get("defaults", {}))
    for key in ("master_seed", "samples"):
        if key in doc:
            shared[key] = doc[key]
    entries = [dict(shared, **c) for c in doc.get("configs", [])]
    grid = doc.get("grid")
    if grid:
        keys = sorted(grid)
        for combo in itertools.product(*(grid[k] for k in keys)):
            entries.append(dict(shared, **dict(zip(keys, combo))))
    if not entries:
        raise ValueError("sweep defines no configs")
    return [ScenarioConfig.from_dict(e) for e in entries]


def run_sweep(configs: Sequence[ScenarioConfig], out_dir) -> tuple[list[dict], list[dict]]:
    """Run all (config, sample) cells; write ``raw.csv``, ``summary.csv`` and ``timing.csv``.

    ``raw.csv`` is a pure function of the configs: its ``wall_time_s``
    column stays empty unless a config sets ``record_wall_time``. Measured
    times always go to ``timing.csv``.
    """
    if not configs:
        raise ValueError("no configs")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc}") from exc
    raw = []
    timing = []
    for config in configs:
        for sample in range(config.samples):
            t0 = time.perf_counter()
            rows = run_scenario(config, sample)
            log.info("%s sample %d done in %.2fs", config.config_id, sample, time.perf_counter() - t0)
            for r in rows:
                r.pop("_x", None)
                timing.append({k: r[k] for k in ("config_id", "sample", "scheme", "wall_time_s")})
                if not config.record_wall_time:
                    r = dict(r, wall_time_s=None)
                raw.append(r)
    summary = summarize(raw)
    _write_csv(out / "raw.csv", RAW_COLUMNS, raw)
    cols = ["config_id", "scheme", "m_count", "delta", "samples"]
    cols += [f"{m}_{s}" for m in SUMMARY_METRICS for s in ("mean", "ci95")]
    _write_csv(out / "summary.csv", cols, summary)
    _write_csv(out / "timing.csv", ("config_id", "sample", "scheme", "wall_time_s"), timing)
    return raw, summary


def load_sweep(path) -> list[ScenarioConfig]:
    return expand_sweep(json.loads(Path(path).read_text()))
