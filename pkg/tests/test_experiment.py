import csv

import numpy as np
import pytest

from decoyplace import experiment
from decoyplace.attack_graph import find_cycle
from decoyplace.experiment import (
    ECM_LEVELS,
    RAW_COLUMNS,
    ScenarioConfig,
    TraceFormatError,
    expand_sweep,
    generate_topology,
    hash64,
    ingest_traces,
    mean_ci,
    pack_nodes,
    run_scenario,
    run_sweep,
    sample_vulnerabilities,
)
from decoyplace.model import DecoyAllocation, check_allocation_feasible, validate_deployment


def test_hash64_vectors():
    # BLAKE2b, 8-byte digest, little endian, over "master:sample:stage"
    assert hash64(0, 0, "topology") == 1660826401995469063
    assert hash64(1, 2, "resources") == 17257102329263993703
    assert hash64(2**64 - 1, 99, "random") == 8106379371139276750


def test_topology_edge_count_and_orientation():
    edges = generate_topology(100, 2, seed=7)
    assert len(edges) == 2 * (100 - 2)
    assert all(u < v for u, v in edges)
    assert find_cycle(range(100), edges) is None
    indeg = np.bincount([v for _, v in edges], minlength=100)
    assert indeg[:2].tolist() == [0, 0]
    assert set(indeg[2:].tolist()) == {2}


def test_topology_tree_and_determinism():
    edges = generate_topology(50, 1, seed=3)
    assert len(edges) == 49 and len({v for _, v in edges}) == 49
    assert generate_topology(60, 3, seed=11) == generate_topology(60, 3, seed=11)
    assert generate_topology(60, 3, seed=11) != generate_topology(60, 3, seed=12)


def test_topology_is_scale_free_ish():
    edges = generate_topology(500, 2, seed=1)
    deg = np.bincount(np.ravel(edges), minlength=500)
    # a few hubs, many low-degree vertices
    assert deg.max() >= 8 * np.median(deg)


@pytest.mark.parametrize("m,attach", [(2, 2), (5, 0), (1, 1)])
def test_topology_parameter_errors(m, attach):
    with pytest.raises(ValueError):
        generate_topology(m, attach, seed=0)


def test_vulnerability_ranges():
    per_ms, per_node = sample_vulnerabilities(300, 10, seed=5)
    assert len(per_ms) == 300 and len(per_node) == 10
    sizes = {len(v) for v in per_ms + per_node}
    assert sizes == {3, 4, 5}
    for vs in per_ms + per_node:
        for v in vs:
            assert 0.1 <= v.em <= 3.9
            assert v.ecm in ECM_LEVELS


def test_ingest_in_declaration_order(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("container_id,cpu_request,ram_request\nc1,0.1,0.2\nc2,0.3,0.05\nc3,1.5,0.4\n")
    assert ingest_traces(p) == [(0.1, 0.2), (0.3, 0.05), (1.0, 0.4)]


def test_ingest_rejects_zero_with_line_number(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("container_id,cpu_request,ram_request\nc1,0.1,0.2\nc2,0,0.2\n")
    with pytest.raises(TraceFormatError, match=":3:"):
        ingest_traces(p)


@pytest.mark.parametrize("body", ["container_id,cpu_request,ram_request\n", "id,cpu,ram\nc1,0.1,0.1\n",
                                  "container_id,cpu_request,ram_request\nc1,abc,0.1\n"])
def test_ingest_errors(tmp_path, body):
    p = tmp_path / "t.csv"
    p.write_text(body)
    with pytest.raises(TraceFormatError):
        ingest_traces(p)


def test_synthetic_pool():
    a = ingest_traces("synthetic", seed=9, size=500)
    assert a == ingest_traces("synthetic", seed=9, size=500)
    arr = np.array(a)
    assert arr.min() >= 0.01 and arr.max() <= 0.2


def test_pack_uniform_requests():
    plan = pack_nodes([(0.1, 0.1)], 20, 0.7, seed=0)
    assert len(plan.nodes) == 3
    counts = np.bincount([m.node for m in plan.microservices])
    assert counts.tolist() == [7, 7, 6]
    assert validate_deployment(plan) == []


def test_pack_full_threshold():
    plan = pack_nodes([(0.5, 0.5)], 5, 1.0, seed=0)
    assert np.bincount([m.node for m in plan.microservices]).tolist() == [2, 2, 1]


def test_pack_either_resource_opens_a_node():
    plan = pack_nodes([(0.05, 0.3)], 4, 0.7, seed=0)
    assert len(plan.nodes) == 2


def test_pack_rejects_oversized_request():
    with pytest.raises(ValueError, match="exceeds"):
        pack_nodes([(0.8, 0.1)], 3, 0.7, seed=0)


def test_synthetic_node_count_scales():
    pool = ingest_traces("synthetic", seed=1)
    n100 = len(pack_nodes(pool, 100, 0.7, seed=2).nodes)
    n500 = len(pack_nodes(pool, 500, 0.7, seed=2).nodes)
    assert 3 * n100 < n500 < 7 * n100


def test_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(m_count=1)
    with pytest.raises(ValueError):
        ScenarioConfig(m_count=10, pack_threshold=0)
    with pytest.raises(ValueError):
        ScenarioConfig(m_count=10, samples=0)
    with pytest.raises(ValueError):
        ScenarioConfig.from_dict({"m_count": 10, "bogus": 1})
    assert ScenarioConfig(m_count=10, delta=0.3).config_id == "m10_d0.3"


def test_zero_delta_scenario():
    rows = run_scenario(ScenarioConfig(m_count=15, delta=0.0), 0)
    assert [r["scheme"] for r in rows] == ["optimal", "heuristic", "linear", "sidecar", "random"]
    for r in rows:
        assert r["decoys"] == 0 and r["dap_fraction"] == 0.0


def test_scenario_rows_are_reproducible():
    cfg = ScenarioConfig(m_count=25, delta=0.3, master_seed=4)
    strip = lambda rows: [{k: v for k, v in r.items() if k != "wall_time_s"} for r in rows]  # noqa: E731
    assert strip(run_scenario(cfg, 3)) == strip(run_scenario(cfg, 3))


def test_small_scenario_optimal_dominates():
    cfg = ScenarioConfig(m_count=10, delta=0.3, master_seed=2)
    for sample in range(3):
        rows = {r["scheme"]: r for r in run_scenario(cfg, sample)}
        assert rows["optimal"]["exact"] is True
        assert rows["optimal"]["objective"] >= rows["heuristic"]["objective"] - 1e-9


def test_optimal_absent_above_ceiling():
    rows = run_scenario(ScenarioConfig(m_count=40, delta=0.3, optimal_max_m=30), 0)
    opt = rows[0]
    assert opt["scheme"] == "optimal" and opt["decoys"] is None and opt["dap_fraction"] is None
    assert all(r["dap_fraction"] is not None for r in rows[1:])


def test_rows_are_feasible_and_bounded():
    cfg = ScenarioConfig(m_count=40, delta=0.4, master_seed=6)
    sc = experiment.build_scenario(cfg, 0)
    for r in run_scenario(cfg, 0, scenario=sc):
        if r["dap_fraction"] is None:
            continue
        assert 0.0 <= r["dap_fraction"] <= 1.0
        x = DecoyAllocation({k: v for k, v in r["_x"].counts.items()})
        assert check_allocation_feasible(sc.plan, x)


def test_failing_scheme_poisons_only_its_cell(monkeypatch):
    real = experiment.allocate

    def flaky(scheme, *args, **kwargs):
        if scheme == "sidecar":
            raise RuntimeError("boom")
        return real(scheme, *args, **kwargs)

    monkeypatch.setattr(experiment, "allocate", flaky)
    rows = {r["scheme"]: r for r in run_scenario(ScenarioConfig(m_count=12, delta=0.3), 0)}
    assert rows["sidecar"]["dap_fraction"] is None
    assert rows["heuristic"]["dap_fraction"] is not None


def test_mean_ci():
    assert mean_ci([]) == (None, None)
    assert mean_ci([2.0]) == (2.0, None)
    mean, half = mean_ci([1.0, 2.0, 3.0])
    assert mean == 2.0 and half == pytest.approx(1.96 * 1.0 / np.sqrt(3))


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_sweep_outputs(tmp_path):
    cfgs = [ScenarioConfig(m_count=12, delta=0.3, samples=1, master_seed=3)]
    run_sweep(cfgs, tmp_path)
    raw = _read(tmp_path / "raw.csv")
    assert tuple(raw[0].keys()) == RAW_COLUMNS
    assert len(raw) == 5
    summary = _read(tmp_path / "summary.csv")
    heur = next(r for r in summary if r["scheme"] == "heuristic")
    row = next(r for r in raw if r["scheme"] == "heuristic")
    assert heur["dap_fraction_ci95"] == ""
    assert float(heur["dap_fraction_mean"]) == float(row["dap_fraction"])
    assert (tmp_path / "timing.csv").exists()


def test_sweep_is_byte_identical(tmp_path):
    cfgs = [ScenarioConfig(m_count=m, delta=0.3, samples=2, master_seed=8) for m in (12, 30)]
    run_sweep(cfgs, tmp_path / "a")
    run_sweep(cfgs, tmp_path / "b")
    assert (tmp_path / "a" / "raw.csv").read_bytes() == (tmp_path / "b" / "raw.csv").read_bytes()
    assert (tmp_path / "a" / "summary.csv").read_bytes() == (tmp_path / "b" / "summary.csv").read_bytes()


def test_sweep_rows_per_cell(tmp_path):
    cfgs = [ScenarioConfig(m_count=m, delta=0.3, samples=2) for m in (12, 20)]
    raw, _ = run_sweep(cfgs, tmp_path)
    assert len(raw) == 2 * 2 * 5


def test_expand_sweep_grid():
    doc = {"master_seed": 1, "samples": 3, "defaults": {"attach": 2},
           "grid": {"delta": [0.2, 0.3, 0.4], "m_count": [500]}}
    cfgs = expand_sweep(doc)
    assert [c.delta for c in cfgs] == [0.2, 0.3, 0.4]
    assert all(c.samples == 3 and c.m_count == 500 and c.master_seed == 1 for c in cfgs)
    with pytest.raises(ValueError):
        expand_sweep({"samples": 1})


def test_sweep_io_error_has_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError, match="file"):
        run_sweep([ScenarioConfig(m_count=5)], blocker / "out")
