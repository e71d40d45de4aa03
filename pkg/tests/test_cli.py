"""Command-line surface: outputs, manifests and exit codes."""

from __future__ import annotations
import hashlib
import json

import pandas as pd
import pytest
from click.testing import CliRunner

from continuum_forge.cli import cli
from continuum_forge.latency import d_msa
from continuum_forge.models import Placement
from continuum_forge.presets import app_preset, topology_preset


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def edge_placement(tmp_path):
    path = tmp_path / "placement.json"
    path.write_text(json.dumps({"assignment": [[2], [2], [2], [2]]}))
    return path


@pytest.fixture
def tiny_topology(tmp_path):
    """One Edge-B node too small for any chain service."""
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps({
        "name": "tiny",
        "nodes": [{"id": 0, "type": "Edge-B", "cpu": 0.1, "mem": 64}],
        "latency_matrix": [[0.0]],
        "user_latency": [1.0],
        "profiles": {s: {"Edge-B": 10.0} for s in ("Front-End", "ml", "Back-End", "DB")},
    }))
    return path


def test_train_zero_steps_writes_run(runner, tmp_path):
    out = tmp_path / "run"
    result = runner.invoke(cli, ["train", "--agent", "ppo", "--steps", "0", "--s-max", "4", "--out", str(out)])
    assert result.exit_code == 0, result.output
    for name in ("checkpoint.npz", "curve.csv", "timing.csv", "stats.json", "manifest.json"):
        assert (out / name).exists()
    stats = json.loads((out / "stats.json").read_text())
    assert stats["steps"] == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "train"
    assert manifest["config_paths"] == {"topology": "testbed6", "app": "chain"}


def test_rerun_needs_force(runner, tmp_path):
    out = tmp_path / "run"
    args = ["train", "--agent", "dqn", "--steps", "0", "--s-max", "4", "--out", str(out)]
    assert runner.invoke(cli, args).exit_code == 0
    assert runner.invoke(cli, args).exit_code == 2
    assert runner.invoke(cli, [*args, "--force"]).exit_code == 0


def test_train_same_seed_same_hash(runner, tmp_path):
    hashes = []
    for name in ("a", "b"):
        out = tmp_path / name
        result = runner.invoke(cli, ["train", "--steps", "0", "--s-max", "4", "--seed", "3", "--out", str(out)])
        assert result.exit_code == 0, result.output
        hashes.append(json.loads((out / "manifest.json").read_text())["artifact_hash"])
    assert hashes[0] == hashes[1]


def test_unknown_agent_is_a_usage_error(runner, tmp_path):
    result = runner.invoke(cli, ["train", "--agent", "a2c", "--out", str(tmp_path / "x")])
    assert result.exit_code == 2
    assert not (tmp_path / "x").exists()


def test_explain_prints_breakdown(runner, tmp_path, edge_placement):
    out = tmp_path / "explain"
    result = runner.invoke(cli, ["explain", "--placement", str(edge_placement), "--out", str(out)])
    assert result.exit_code == 0, result.output
    report = json.loads(result.stdout)
    expected = d_msa(app_preset("chain"), Placement(assignment=[[2], [2], [2], [2]]), topology_preset("testbed6"))
    assert report["d_msa"] == pytest.approx(expected)
    assert set(report["t_e"]) == {"Front-End", "ml", "Back-End", "DB"}
    assert (out / "latency.json").exists()


def test_explain_rejects_dead_node(runner, edge_placement):
    result = runner.invoke(cli, ["explain", "--placement", str(edge_placement), "--kill", "2"])
    assert result.exit_code == 2


def test_explain_rejects_malformed_placement(runner, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("[[2], [2]")
    result = runner.invoke(cli, ["explain", "--placement", str(bad)])
    assert result.exit_code == 2


def test_oracle_beats_every_heuristic_placement(runner, edge_placement):
    result = runner.invoke(cli, ["oracle"])
    assert result.exit_code == 0, result.output
    best = json.loads(result.stdout)
    assert best["enumerated"] > 0
    explained = json.loads(runner.invoke(cli, ["explain", "--placement", str(edge_placement)]).stdout)
    assert best["optimal_d_msa"] <= explained["d_msa"] + 1e-9


def test_oracle_limit_and_infeasible_exit_codes(runner, tiny_topology):
    assert runner.invoke(cli, ["oracle", "--replicas", "5"]).exit_code == 2
    assert runner.invoke(cli, ["oracle", "--topology", str(tiny_topology)]).exit_code == 3


def test_compare_single_cell(runner, tmp_path):
    out = tmp_path / "cmp"
    result = runner.invoke(cli, [
        "compare", "--schedulers", "default", "--replicas", "1", "--trials", "2", "--out", str(out),
    ])
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(out / "comparison.csv")
    assert len(frame) == 1
    assert frame.loc[0, "pods"] == 4


def test_compare_rl_without_checkpoint(runner):
    result = runner.invoke(cli, ["compare", "--schedulers", "ppo", "--replicas", "1", "--trials", "1"])
    assert result.exit_code == 2


def test_compare_bad_replica_list(runner):
    result = runner.invoke(cli, ["compare", "--replicas", "one,two"])
    assert result.exit_code == 2


def test_export_plan_from_trained_checkpoint(runner, tmp_path):
    run = tmp_path / "run"
    assert runner.invoke(cli, ["train", "--steps", "0", "--s-max", "4", "--out", str(run)]).exit_code == 0
    out = tmp_path / "plan"
    result = runner.invoke(cli, [
        "export-plan", "--checkpoint", str(run / "checkpoint.npz"), "--max-steps", "5", "--out", str(out),
    ])
    assert result.exit_code == 0, result.output
    plan = json.loads((out / "plan.json").read_text())
    assert len(plan["d_msa_trajectory"]) == len(plan["moves"]) + 1
    assert len(plan["moves"]) <= 5


def test_scenario_writes_series(runner, tmp_path):
    out = tmp_path / "scen"
    result = runner.invoke(cli, ["scenario", "traffic-surge", "--noise-seed", "1", "--out", str(out)])
    assert result.exit_code == 0, result.output
    series = pd.read_csv(out / "traffic-surge" / "series.csv")
    assert len(series) > 0
    assert (out / "traffic-surge" / "summary.json").exists()
    assert json.loads((out / "manifest.json").read_text())["command"] == "scenario"


def test_periodic_checkpoints_are_part_of_the_run(runner, tmp_path):
    hyper = tmp_path / "ppo.json"
    hyper.write_text(json.dumps({"rollout_length": 8, "minibatch_size": 4, "epochs": 1, "checkpoint_every": 1}))
    out = tmp_path / "run"
    result = runner.invoke(cli, [
        "train", "--steps", "16", "--s-max", "4", "--max-steps", "5",
        "--hyperparams", str(hyper), "--out", str(out),
    ])
    assert result.exit_code == 0, result.output
    assert (out / "ppo-8.npz").exists() and (out / "ppo-16.npz").exists()

    digest = hashlib.sha256()
    for name in sorted(["checkpoint.npz", "curve.csv", "ppo-16.npz", "ppo-8.npz", "stats.json"]):
        digest.update(name.encode())
        digest.update(b"\0")
        digest.update((out / name).read_bytes())
    assert json.loads((out / "manifest.json").read_text())["artifact_hash"] == digest.hexdigest()
