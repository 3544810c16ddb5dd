import pytest

from decoyplace import AttackGraph, ComputeNode, DeploymentPlan, Microservice, ObjectiveContext, compute_attack_paths


def one_node_plan(ids, budget=(2.0, 2.0), request=(1.0, 1.0)):
    """Every microservice on one node with decoy budget ``budget`` (delta = 1)."""
    n = len(ids)
    node = ComputeNode("n0", n * request[0] + budget[0], n * request[1] + budget[1])
    services = [Microservice(i, request[0], request[1], "n0") for i in ids]
    return DeploymentPlan((node,), tuple(services), 1.0)


def unit_chain(ids=("s", "m", "t")):
    edges = [(a, b, 1.0) for a, b in zip(ids, ids[1:])]
    return AttackGraph.from_edges(list(ids), edges)


@pytest.fixture
def chain():
    return unit_chain()


@pytest.fixture
def chain_ctx(chain):
    return ObjectiveContext(compute_attack_paths(chain))


@pytest.fixture
def chain_plan():
    return one_node_plan(["s", "m", "t"])


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
