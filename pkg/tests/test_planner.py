"""Plans: build, replay, verify, execute, files."""

from __future__ import annotations
import json

import numpy as np
import pytest

from continuum_forge.env import CEEnv
from continuum_forge.errors import ConfigError, PlacementError
from continuum_forge.models import EnvConfig, Placement
from continuum_forge.planner import Planner, export_plan, load_placement, load_plan
from continuum_forge.workbench import Workbench

from conftest import ScriptedAgent


@pytest.fixture
def planner(ab_app, hand_topology):
    return Planner(ab_app, hand_topology, EnvConfig(s_max=3, penalty_cost=0.0))


@pytest.fixture
def start():
    return Placement(assignment=[[0], [0, 1]])


def _one_move_plan(planner, start):
    env = CEEnv(planner.app, planner.topology, planner.env_config)
    return planner.plan(ScriptedAgent(env, [env.encode(2, 0)]), start)


def test_plan_does_not_touch_background(planner, start, hand_topology):
    plan = _one_move_plan(planner, start)
    assert len(plan.moves) == 1
    assert hand_topology.requested_cpu.sum() == 0.0


def test_idle_first_gives_empty_plan(planner, start):
    env = CEEnv(planner.app, planner.topology, planner.env_config)
    plan = planner.plan(ScriptedAgent(env, []), start)
    assert plan.moves == []
    assert plan.final_placement == start
    assert plan.idle_reached


def test_replay_and_verify(planner, start):
    plan = _one_move_plan(planner, start)
    replayed = planner.replay_plan(plan)
    assert replayed.final_placement == plan.final_placement
    assert replayed.final_d_msa == pytest.approx(plan.final_d_msa)
    ok, message = planner.verify(plan)
    assert ok, message


def test_tampered_plan_fails_verification(planner, start):
    plan = _one_move_plan(planner, start)
    bad_move = plan.moves[0].model_copy(update={"target": 1})
    tampered = plan.model_copy(update={"moves": [bad_move]})
    with pytest.raises(PlacementError, match="not applicable"):
        planner.replay_plan(tampered)
    ok, _ = planner.verify(tampered)
    assert not ok
    wrong_end = plan.model_copy(update={"final_d_msa": plan.final_d_msa + 1.0})
    assert not planner.verify(wrong_end)[0]


def test_execute_plan_moves_requests(planner, start, ab_app, hand_topology):
    plan = _one_move_plan(planner, start)
    cluster = hand_topology.clone()
    ab_app.apply_placement(start, cluster)
    seen = []
    ok, message = planner.execute_plan(plan, cluster, on_progress=lambda m, f: seen.append(f))
    assert ok, message
    assert cluster.requested_cpu.tolist() == [0.75, 0.0]
    assert seen == [1.0]


def test_execute_plan_stops_on_full_node(planner, start, ab_app, hand_topology):
    plan = _one_move_plan(planner, start)
    cluster = hand_topology.clone()
    ab_app.apply_placement(start, cluster)
    cluster.commit(0, 3.5, 0.0)
    ok, message = planner.execute_plan(plan, cluster)
    assert not ok
    assert "cannot host" in message


def test_rejected_plan_leaves_cluster_untouched(planner, start, ab_app, hand_topology):
    plan = _one_move_plan(planner, start)
    # the first move fits; the second targets a node that is down by then
    second = plan.moves[0].model_copy(update={"step": 2, "service": "A", "replica": 0, "source": 0, "target": 1})
    plan = plan.model_copy(update={"moves": [plan.moves[0], second]})
    cluster = hand_topology.clone()
    ab_app.apply_placement(start, cluster)
    cluster.kill(1)
    before = cluster.requested_cpu.copy()
    seen = []
    ok, message = planner.execute_plan(plan, cluster, on_progress=lambda m, f: seen.append(f))
    assert not ok
    assert message.startswith("step 2")
    np.testing.assert_array_equal(cluster.requested_cpu, before)
    assert seen == []


def test_plan_file_uses_from_to_keys(tmp_path, planner, start):
    plan = _one_move_plan(planner, start)
    path = export_plan(plan, Workbench(tmp_path))
    raw = json.loads(path.read_text())
    move = raw["moves"][0]
    assert move["instance"] == ["B", 1]
    assert (move["from"], move["to"]) == (1, 0)
    assert raw["d_msa_trajectory"] == [pytest.approx(85.0), pytest.approx(60.0)]
    assert load_plan(path) == plan


def test_load_plan_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_plan(tmp_path / "missing.json")
    bad = tmp_path / "plan.json"
    bad.write_text('{"app": "x"}')
    with pytest.raises(ConfigError, match="invalid plan"):
        load_plan(bad)


def test_load_placement_forms(tmp_path):
    wrapped = tmp_path / "a.json"
    wrapped.write_text('{"assignment": [[0], [1, 2]]}')
    bare = tmp_path / "b.json"
    bare.write_text("[[0], [1, 2]]")
    assert load_placement(wrapped) == load_placement(bare) == Placement(assignment=[[0], [1, 2]])
    broken = tmp_path / "c.json"
    broken.write_text("[[0], [1,")
    with pytest.raises(PlacementError, match="malformed"):
        load_placement(broken)
    with pytest.raises(ConfigError, match="not found"):
        load_placement(tmp_path / "none.json")
