"""Resource-aware decoy placement over microservice attack graphs."""

from .allocators import (
    SCHEMES,
    AllocationOutcome,
    SearchLimits,
    allocate,
    solve_heuristic,
    solve_linear,
    solve_optimal,
    solve_random,
    solve_sidecar,
)
from .attack_graph import (
    ApIndex,
    AttackGraph,
    CycleError,
    PathCountOverflow,
    betweenness,
    build_attack_graph,
    compute_attack_paths,
)
from .experiment import (
    ScenarioConfig,
    generate_topology,
    hash64,
    ingest_traces,
    pack_nodes,
    run_scenario,
    run_sweep,
    sample_vulnerabilities,
)
from .kernels import BACKEND
from .model import (
    ComputeNode,
    DecoyAllocation,
    DeploymentError,
    DeploymentPlan,
    Microservice,
    Vulnerability,
    check_allocation_feasible,
    max_deployable_decoys,
    validate_deployment,
)
from .objective import (
    DapMetrics,
    ObjectiveContext,
    build_augmented_graph,
    count_daps,
    deceptive_betweenness,
    expected_interceptions_oracle,
    marginal_gain,
    objective,
)

__version__ = "0.1.0"
