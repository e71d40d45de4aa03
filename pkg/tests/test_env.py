"""CEEnv: encoding, masks, rewards, truncation and determinism."""

from __future__ import annotations

import numpy as np
import pytest

from continuum_forge.app_graph import set_all_replicas
from continuum_forge.env import CEEnv, action_count, observation_size
from continuum_forge.errors import ActionError, ConfigError, InfeasibleError
from continuum_forge.models import EnvConfig, Placement

from conftest import build_chain, build_topology


@pytest.fixture
def ladder():
    """One service; moving it from node 0 → 1 → 2 takes D_msa 100 → 90 → 70. Node 3 is too small."""
    topo = build_topology(
        latency=np.zeros((4, 4)).tolist(),
        user_latency=[90.0, 80.0, 60.0, 0.0],
        profiles={"svc": {"Edge-A": 10.0}},
        cpu=[4.0, 4.0, 4.0, 0.1],
    )
    return build_chain(["svc"], cpu=0.5), topo


def ladder_env(ladder, **config):
    app, topo = ladder
    env = CEEnv(app, topo, EnvConfig(s_max=1, penalty_cost=5.0, **config))
    env.reset(options={"topology": topo, "placement": Placement(assignment=[[0]])})
    return env


def test_sizes_for_six_nodes_and_twenty_slots(chain, testbed):
    env = CEEnv(chain, testbed, EnvConfig(s_max=20))
    assert action_count(6, 20) == env.n_actions == 121
    assert env.idle_action == 120
    assert env.observation_space.shape == (observation_size(6, 20),)
    obs, info = env.reset(seed=0)
    assert obs.shape == (184,)
    assert obs.dtype == np.float32
    assert env.observation_space.contains(obs)
    assert info["action_mask"].shape == (121,)


def test_encode_decode(chain, testbed):
    env = CEEnv(chain, testbed)
    assert env.decode(env.encode(3, 5)) == (3, 5)
    assert env.decode(env.idle_action) is None


def test_worked_episode_rewards(ladder):
    env = ladder_env(ladder)
    assert env.d_msa == pytest.approx(100.0)
    _, reward, terminated, truncated, info = env.step(env.encode(0, 1))
    assert reward == pytest.approx(5.0)
    assert info["d_msa_after"] == pytest.approx(90.0)
    assert not terminated and not truncated
    _, reward, terminated, _, _ = env.step(env.encode(0, 2))
    assert reward == pytest.approx(15.0)
    assert not terminated
    _, reward, terminated, _, _ = env.step(env.idle_action)
    assert reward == 0.0
    assert terminated


def test_invalid_move_unmasked_costs_hundred_and_ends(ladder):
    env = ladder_env(ladder, masking=False)
    assert env.action_mask().all()
    _, reward, terminated, _, info = env.step(env.encode(0, 3))
    assert reward == -100.0
    assert terminated
    assert info["legal"] is False
    assert env.placement.assignment == ((0,),)


def test_masked_action_raises_in_masked_mode(ladder):
    env = ladder_env(ladder)
    with pytest.raises(ActionError, match="masked"):
        env.step(env.encode(0, 3))
    # rejected step does not consume the budget
    assert env.steps == 0


def test_idle_first_ends_with_zero_reward(ladder):
    env = ladder_env(ladder)
    result = env.transition(env.idle_action)
    assert result.reward == 0.0 and result.terminated and not result.truncated


def test_step_after_done_and_out_of_range(ladder):
    env = ladder_env(ladder)
    with pytest.raises(ActionError, match="outside"):
        env.step(99)
    env.step(env.idle_action)
    with pytest.raises(ActionError, match="reset"):
        env.step(env.idle_action)


def test_truncation_at_step_limit(ladder):
    env = ladder_env(ladder, max_steps=2)
    env.step(env.encode(0, 1))
    _, _, terminated, truncated, _ = env.step(env.encode(0, 2))
    assert truncated and not terminated
    assert env.done


def test_mask_forbids_full_node_own_node_and_padding(ladder):
    app, topo = ladder
    env = CEEnv(app, topo, EnvConfig(s_max=3))
    env.reset(options={"topology": topo, "placement": Placement(assignment=[[0]])})
    mask = env.legal_mask()
    assert not mask[env.encode(0, 0)]
    assert not mask[env.encode(0, 3)]
    assert mask[env.encode(0, 1)] and mask[env.encode(0, 2)]
    assert not mask[env.encode(1, 0): env.encode(2, 3) + 1].any()
    assert mask[env.idle_action]


def test_masked_steps_never_break_capacity(testbed):
    app = set_all_replicas(build_chain(["Front-End", "ml", "Back-End", "DB"], cpu=0.5, mem=512.0), 3)
    env = CEEnv(app, testbed, EnvConfig(s_max=20, max_steps=30))
    rng = np.random.default_rng(3)
    for seed in range(20):
        env.reset(seed=seed)
        while not env.done:
            mask = env.action_mask()
            env.step(int(rng.choice(np.flatnonzero(mask))))
            assert env.topology.satisfies_capacity()
            assert all(env.topology.alive[n] for row in env.rows for n in row)
            present = env.slot_node >= 0
            assert not env.legal_mask()[:-1].reshape(20, 6)[present, env.slot_node[present]].any()


def test_mask_is_exact_on_random_small_states(testbed):
    rng = np.random.default_rng(21)
    config = EnvConfig(s_max=8, max_steps=5)
    for trial in range(50):
        app = build_chain(["Front-End", "ml", "Back-End", "DB"], replicas=rng.integers(1, 3, 4).tolist(),
                          cpu=0.5, mem=512.0)
        topo = testbed.clone()
        topo.draw_background(rng, (0.0, 0.4))
        for node in rng.choice(testbed.n_nodes, int(rng.integers(0, 3)), replace=False):
            topo.kill(int(node))
        env = CEEnv(app, testbed, config)
        env.reset(seed=trial, options={"topology": topo})
        start = env.placement
        mask = env.legal_mask()
        for action in range(env.idle_action):
            slot, node = env.decode(action)
            if mask[action]:
                moved = CEEnv(app, testbed, config)
                moved.reset(options={"topology": topo, "placement": start})
                _, _, _, _, info = moved.step(action)
                assert info["legal"]
                assert moved.slot_node[slot] == node
                assert moved.topology.satisfies_capacity()
                continue
            if slot >= len(env.slots):
                continue
            spec = app.services[env.slots[slot][0]]
            assert (
                not env.topology.alive[node]
                or env.slot_node[slot] == node
                or not env.topology.can_host(node, spec.req_cpu, spec.req_mem)
            )


def test_same_seed_same_initial_observation(chain, testbed):
    a = CEEnv(chain, testbed, EnvConfig(seed=11))
    b = CEEnv(chain, testbed, EnvConfig(seed=11))
    obs_a, _ = a.reset()
    obs_b, _ = b.reset()
    np.testing.assert_array_equal(obs_a, obs_b)
    np.testing.assert_array_equal(a.reset(seed=4)[0], b.reset(seed=4)[0])


def test_replay_is_deterministic(chain, testbed):
    def trajectory(seed):
        env = CEEnv(chain, testbed)
        obs, info = env.reset(seed=seed)
        rng = np.random.default_rng(0)
        out = [obs]
        while not env.done:
            obs, reward, *_ = env.step(int(rng.choice(np.flatnonzero(env.action_mask()))))
            out.append(np.append(obs, reward))
        return out

    for x, y in zip(trajectory(5), trajectory(5)):
        np.testing.assert_array_equal(x, y)


def test_reset_with_given_state_does_not_touch_caller(ladder):
    app, topo = ladder
    env = CEEnv(app, topo, EnvConfig(s_max=1))
    env.reset(options={"topology": topo, "placement": Placement(assignment=[[0]])})
    env.step(env.encode(0, 1))
    assert topo.requested_cpu.sum() == 0.0


def test_constructor_and_reset_errors(chain, testbed):
    with pytest.raises(ConfigError, match="s_max"):
        CEEnv(set_all_replicas(chain, 5), testbed, EnvConfig(s_max=10))
    with pytest.raises(ConfigError, match="nodes"):
        CEEnv(chain, testbed, EnvConfig(n_nodes=18))
    tiny = build_topology([[0.0]], [0.0], {n: {"Edge-A": 1.0} for n in chain.names}, cpu=[0.5])
    with pytest.raises(InfeasibleError):
        CEEnv(chain, tiny, EnvConfig(max_reset_retries=5)).reset(seed=0)


def test_trajectory_log(tmp_path, ladder):
    app, topo = ladder
    path = tmp_path / "trajectory.jsonl"
    env = CEEnv(app, topo, EnvConfig(s_max=1), trajectory_path=path)
    env.reset(options={"topology": topo, "placement": Placement(assignment=[[0]])})
    env.step(env.encode(0, 1))
    env.step(env.idle_action)
    env.close()
    lines = path.read_text().splitlines()
    assert len(lines) == 3
    assert '"event": "reset"' in lines[0]
