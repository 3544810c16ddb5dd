import json

import pytest

from decoyplace.cli import main


@pytest.fixture
def workspace(tmp_path):
    assert main(["generate", "--m", "15", "--seed", "4", "--out", str(tmp_path / "topo.json"),
                 "--plan-out", str(tmp_path / "plan.json")]) == 0
    return tmp_path


def test_generate_writes_topology(workspace):
    topo = json.loads((workspace / "topo.json").read_text())
    assert len(topo["vertices"]) == 15
    assert len(topo["edges"]) == 2 * 13
    plan = json.loads((workspace / "plan.json").read_text())
    assert len(plan["microservices"]) == 15 and plan["delta"] == 0.3


@pytest.mark.parametrize("scheme", ["optimal", "heuristic", "linear", "sidecar", "random"])
def test_allocate_then_evaluate(workspace, scheme, capsys):
    out = workspace / f"{scheme}.json"
    assert main(["allocate", "--plan", str(workspace / "plan.json"), "--graph", str(workspace / "topo.json"),
                 "--scheme", scheme, "--seed", "1", "--out", str(out)]) == 0
    alloc = json.loads(out.read_text())
    assert alloc["scheme"] == scheme
    assert set(alloc) == {"scheme", "x", "objective", "exact", "wall_time_s"}
    capsys.readouterr()
    assert main(["evaluate", "--plan", str(workspace / "plan.json"), "--graph", str(workspace / "topo.json"),
                 "--alloc", str(out)]) == 0
    metrics = json.loads(capsys.readouterr().out)
    assert set(metrics) == {"total_aps", "total_daps", "dap_fraction", "decoys_per_dap"}
    assert 0 <= metrics["dap_fraction"] <= 1


def test_evaluate_rejects_infeasible(workspace):
    bad = workspace / "bad.json"
    bad.write_text(json.dumps({"scheme": "x", "x": {"0": 10_000}}))
    with pytest.raises(SystemExit, match="budget"):
        main(["evaluate", "--plan", str(workspace / "plan.json"), "--graph", str(workspace / "topo.json"),
              "--alloc", str(bad)])


def test_sweep_command(tmp_path, capsys):
    cfg = tmp_path / "sweep.json"
    cfg.write_text(json.dumps({"master_seed": 2, "samples": 2, "configs": [{"m_count": 12, "delta": 0.3}]}))
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "res")]) == 0
    assert (tmp_path / "res" / "raw.csv").exists() and (tmp_path / "res" / "summary.csv").exists()


def test_oracle_check_command(capsys):
    assert main(["oracle-check", "--m-max", "6", "--trials", "5", "--seed", "3"]) == 0
    reports = json.loads(capsys.readouterr().out)
    assert [r["suite"] for r in reports] == ["objective-vs-oracle", "exhaustive-optimality", "linear-knapsack"]
    assert all(r["failures"] == 0 for r in reports)


def test_missing_file_is_reported(tmp_path):
    with pytest.raises(SystemExit, match="cannot read"):
        main(["evaluate", "--plan", str(tmp_path / "nope.json"), "--graph", "x", "--alloc", "y"])


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "sweep.json"
    cfg.write_text(json.dumps({"configs": [{"m_count": 1}]}))
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 2
    assert "error" in capsys.readouterr().err
