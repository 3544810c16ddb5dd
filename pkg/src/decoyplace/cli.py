"""Command line entry point: ``decoyplace <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .allocators import SCHEMES, AllocationOutcome, SearchLimits, allocate
from .attack_graph import AttackGraph, build_attack_graph
from .experiment import generate_topology, hash64, ingest_traces, load_sweep, make_plan, run_sweep
from .model import DeploymentPlan, check_allocation_feasible, validate_deployment
from .objective import count_daps
from .oracle import knapsack_suite, objective_oracle_suite, optimality_suite


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise SystemExit(f"error: cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise SystemExit(f"error: {path} is not valid JSON: {exc}") from None


def _write_json(path, doc) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _load_graph(path, plan: DeploymentPlan) -> AttackGraph:
    """A call-graph topology (``generate`` output) or an already weighted attack graph."""
    doc = _read_json(path)
    edges = doc.get("edges", [])
    if edges and isinstance(edges[0], dict):
        return AttackGraph.from_dict(doc)
    return build_attack_graph([tuple(e) for e in edges], plan)


def _load_plan(path) -> DeploymentPlan:
    plan = DeploymentPlan.from_dict(_read_json(path))
    problems = validate_deployment(plan)
    if problems:
        raise SystemExit("error: invalid plan: " + "; ".join(problems))
    return plan


def cmd_generate(args) -> int:
    edges = generate_topology(args.m, args.attach, args.seed)
    _write_json(args.out, {
        "m_count": args.m,
        "attach": args.attach,
        "seed": args.seed,
        "vertices": list(range(args.m)),
        "edges": [list(e) for e in edges],
    })
    if args.plan_out:
        pool = ingest_traces(args.traces, seed=hash64(args.seed, 0, "pool"))
        plan = make_plan(pool, args.m, args.pack_threshold, args.delta, args.seed, 0)
        plan.dump(args.plan_out)
    return 0


def cmd_allocate(args) -> int:
    plan = _load_plan(args.plan)
    g = _load_graph(args.graph, plan)
    limits = SearchLimits(time_limit=args.time_limit)
    out = allocate(args.scheme, plan, g, seed=args.seed, limits=limits, fill_idle=args.fill_idle)
    _write_json(args.out, out.to_dict())
    return 0


def cmd_evaluate(args) -> int:
    plan = _load_plan(args.plan)
    g = _load_graph(args.graph, plan)
    outcome = AllocationOutcome.from_dict(_read_json(args.alloc), ids=g.originals)
    if not check_allocation_feasible(plan, outcome.x):
        raise SystemExit("error: allocation exceeds the decoy budget")
    metrics = count_daps(g, outcome.x)
    _write_json(None, metrics.to_dict())
    return 0


def cmd_sweep(args) -> int:
    configs = load_sweep(args.config)
    _, summary = run_sweep(configs, args.out)
    print(f"wrote {len(summary)} summary rows to {Path(args.out) / 'summary.csv'}")
    return 0


def cmd_oracle_check(args) -> int:
    reports = [
        objective_oracle_suite(args.trials, args.seed, max_vertices=max(3, args.m_max)),
        optimality_suite(args.trials, args.seed + 1, max_ms=max(3, min(args.m_max, 8))),
        knapsack_suite(args.trials, args.seed + 2),
    ]
    _write_json(None, [r.to_dict() for r in reports])
    return 0 if all(r.ok for r in reports) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="decoyplace", description="Decoy placement over microservice attack graphs.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="Barabasi-Albert call graph (and optionally a packed plan)")
    g.add_argument("--m", type=int, required=True, help="number of microservices")
    g.add_argument("--attach", type=int, default=2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="topology JSON")
    g.add_argument("--plan-out", help="also write a packed deployment plan")
    g.add_argument("--delta", type=float, default=0.3)
    g.add_argument("--pack-threshold", type=float, default=0.7)
    g.add_argument("--traces", default="synthetic", help="trace CSV or 'synthetic'")
    g.set_defaults(func=cmd_generate)

    a = sub.add_parser("allocate", help="run one allocation scheme")
    a.add_argument("--plan", required=True)
    a.add_argument("--graph", required=True)
    a.add_argument("--scheme", choices=SCHEMES, required=True)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", default="-")
    a.add_argument("--time-limit", type=float, default=300.0, help="optimal only, seconds")
    a.add_argument("--fill-idle", action="store_true", help="linear only: fill leftover budget")
    a.set_defaults(func=cmd_allocate)

    e = sub.add_parser("evaluate", help="DAP metrics of an allocation")
    e.add_argument("--plan", required=True)
    e.add_argument("--graph", required=True)
    e.add_argument("--alloc", required=True)
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", help="run a sweep config, write raw.csv and summary.csv")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    o = sub.add_parser("oracle-check", help="exhaustive cross-checks on small random instances")
    o.add_argument("--m-max", type=int, default=8)
    o.add_argument("--trials", type=int, default=50)
    o.add_argument("--seed", type=int, default=0)
    o.set_defaults(func=cmd_oracle_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
