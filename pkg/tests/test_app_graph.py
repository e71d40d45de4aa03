"""Application graph parsing, validation and replica resizing."""

from __future__ import annotations

import pytest

from continuum_forge.app_graph import (
    parse_app,
    resize_placement,
    set_all_replicas,
    set_replicas,
    total_instances,
)
from continuum_forge.errors import AppGraphError, CycleError, PlacementError
from continuum_forge.models import Placement
from continuum_forge.presets import app_preset

from conftest import build_chain


def test_chain_preset_is_linear(chain):
    assert chain.names == ["Front-End", "ml", "Back-End", "DB"]
    assert chain.gateway == 0
    assert [len(chain.groups_of(s)) for s in range(4)] == [1, 1, 1, 0]
    assert chain.evaluation_order() == [3, 2, 1, 0]


def test_parallel_preset_has_two_groups_on_front_end():
    app = app_preset("agg-par")
    assert len(app.groups_of(app.gateway)) == 2


def test_cycle_is_rejected():
    with pytest.raises(CycleError, match="cycle"):
        parse_app({
            "services": [{"name": "FE", "cpu": 1, "mem": 1}, {"name": "DB", "cpu": 1, "mem": 1}],
            "gateway": "FE",
            "groups": [{"caller": "FE", "members": ["DB"]}, {"caller": "DB", "members": ["FE"]}],
        })


def test_unreachable_service_is_rejected():
    with pytest.raises(AppGraphError, match="not reachable"):
        parse_app({
            "services": [{"name": "FE", "cpu": 1, "mem": 1}, {"name": "lost", "cpu": 1, "mem": 1}],
            "gateway": "FE",
        })


def test_unknown_gateway_and_duplicates():
    with pytest.raises(AppGraphError, match="gateway"):
        parse_app({"services": [{"name": "FE", "cpu": 1, "mem": 1}], "gateway": "nope"})
    with pytest.raises(AppGraphError, match="duplicate"):
        parse_app({
            "services": [{"name": "FE", "cpu": 1, "mem": 1}, {"name": "FE", "cpu": 1, "mem": 1}],
            "gateway": "FE",
        })


def test_set_all_replicas_to_three_gives_twelve_instances(chain):
    assert total_instances(set_all_replicas(chain, 3)) == 12
    assert total_instances(set_all_replicas(chain, 5)) == 20
    assert total_instances(chain) == 4


def test_set_replicas_identity_and_bounds(chain):
    assert set_replicas(chain, "ml", 1) is chain
    with pytest.raises(AppGraphError, match=r"\[1, 5\]"):
        set_replicas(chain, "ml", 6)
    with pytest.raises(AppGraphError):
        set_replicas(chain, "ml", 0)


def test_resize_returns_new_graph(chain):
    bigger = set_replicas(chain, 1, 3)
    assert bigger.services[1].replicas == 3
    assert chain.services[1].replicas == 1
    assert bigger.instance_slots()[1:4] == [(1, 0), (1, 1), (1, 2)]


def test_check_placement_shape_and_liveness(ab_app, hand_topology):
    ab_app.check_placement(Placement(assignment=[[0], [0, 1]]), hand_topology)
    with pytest.raises(PlacementError, match="replicas"):
        ab_app.check_placement(Placement(assignment=[[0], [0]]), hand_topology)
    with pytest.raises(PlacementError, match="unknown node"):
        ab_app.check_placement(Placement(assignment=[[0], [0, 7]]), hand_topology)
    hand_topology.kill(1)
    with pytest.raises(PlacementError, match="dead"):
        ab_app.check_placement(Placement(assignment=[[0], [0, 1]]), hand_topology)


def test_apply_placement_commits_and_checks_capacity(hand_topology):
    app = build_chain(["A", "B"], replicas=[1, 2], cpu=2.0)
    placement = Placement(assignment=[[0], [1, 1]])
    app.apply_placement(placement, hand_topology)
    assert hand_topology.requested_cpu.tolist() == [2.0, 4.0]
    app.release_placement(placement, hand_topology)
    with pytest.raises(PlacementError, match="capacity"):
        app.apply_placement(Placement(assignment=[[0], [0, 0]]), hand_topology)


def test_resize_placement_appends_and_drops(ab_app):
    placement = Placement(assignment=[[0], [1, 2]])
    grown = resize_placement(ab_app, placement, 1, nodes=[3])
    assert grown.assignment == ((0,), (1, 2, 3))
    assert resize_placement(ab_app, grown, 1, drop=2).assignment == ((0,), (1,))
