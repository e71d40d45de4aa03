"""Masking, GAE, PPO/DQN updates, heuristics and the reschedule rollout."""

from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from continuum_forge.agents import (
    DqnAgent,
    PpoAgent,
    gae,
    heuristic_place,
    load_agent,
    place_instances,
    reschedule,
    run_episode,
    train_dqn,
    train_ppo,
)
from continuum_forge.agents.dqn import ReplayBuffer, linear_epsilon, q_targets
from continuum_forge.agents.heuristics import choose_node
from continuum_forge.agents.masking import masked_argmax, masked_probs, sample
from continuum_forge.agents.ppo import RolloutBatch, discount_cumsum, normalize_advantages
from continuum_forge.env import CEEnv
from continuum_forge.errors import CheckpointError, ConfigError, InfeasibleError
from continuum_forge.models import DqnConfig, EnvConfig, Placement, PpoConfig

from conftest import ScriptedAgent, build_topology


# ── Masking ──────────────────────────────────────────────────

def test_only_idle_allowed_means_idle_always():
    mask = np.zeros(7, dtype=bool)
    mask[-1] = True
    probs = masked_probs(np.random.default_rng(0).standard_normal(7), mask)
    assert probs[-1] == 1.0
    assert sample(probs, np.random.default_rng(1)) == 6


def test_uniform_logits_sample_uniformly_over_allowed():
    mask = np.array([True, False, True, True, False, True])
    probs = masked_probs(np.zeros(6), mask)
    rng = np.random.default_rng(2)
    draws = np.array([sample(probs, rng) for _ in range(10_000)])
    assert not np.isin(draws, [1, 4]).any()
    counts = np.bincount(draws, minlength=6)[mask]
    assert stats.chisquare(counts).pvalue > 0.001


def test_greedy_is_argmax_among_allowed():
    values = np.array([5.0, 1.0, 3.0, 4.0])
    assert masked_argmax(values, np.array([False, True, True, True])) == 3


def test_mask_with_nothing_allowed_is_an_error():
    with pytest.raises(ValueError):
        masked_probs(np.zeros(3), np.zeros(3, dtype=bool))


# ── GAE ──────────────────────────────────────────────────────

def test_discount_cumsum():
    np.testing.assert_allclose(discount_cumsum(np.array([1.0, 1.0, 1.0]), 0.5), [1.75, 1.5, 1.0])


def test_gae_lambda_zero_is_one_step_td():
    rewards = np.array([1.0, 2.0, 3.0])
    values = np.array([0.5, 0.4, 0.3])
    terminals = np.array([False, False, True])
    adv, _ = gae(rewards, values, terminals, gamma=0.9, lam=0.0)
    expected = [1.0 + 0.9 * 0.4 - 0.5, 2.0 + 0.9 * 0.3 - 0.4, 3.0 - 0.3]
    np.testing.assert_allclose(adv, expected)


def test_gae_lambda_one_gamma_one_is_reward_to_go():
    rewards = np.array([1.0, -2.0, 4.0])
    adv, returns = gae(rewards, np.zeros(3), np.array([False, False, True]), gamma=1.0, lam=1.0)
    np.testing.assert_allclose(adv, [3.0, 2.0, 4.0])
    np.testing.assert_allclose(returns, adv)


def test_gae_single_step_episode():
    adv, _ = gae(np.array([7.0]), np.array([2.0]), np.array([True]), gamma=0.99, lam=0.95)
    assert adv[0] == pytest.approx(5.0)


def test_gae_does_not_leak_across_episodes():
    rewards = np.array([1.0, 10.0])
    adv, _ = gae(rewards, np.zeros(2), np.array([True, True]), gamma=1.0, lam=1.0)
    np.testing.assert_allclose(adv, [1.0, 10.0])


# ── PPO ──────────────────────────────────────────────────────

def _batch(agent, n=32, seed=0, advantages=None):
    rng = np.random.default_rng(seed)
    obs = rng.random((n, agent.obs_size))
    masks = np.ones((n, agent.n_actions), dtype=bool)
    actions = rng.integers(0, agent.n_actions, n)
    probs = masked_probs(agent.policy.forward(obs), masks)
    logp = np.log(probs[np.arange(n), actions])
    adv = rng.standard_normal(n) if advantages is None else advantages
    return RolloutBatch(obs=obs, actions=actions, masks=masks, log_probs=logp,
                        advantages=adv, returns=rng.standard_normal(n))


def test_zero_lr_epochs_see_identical_losses():
    agent = PpoAgent(6, 4, PpoConfig(lr=0.0, epochs=3, minibatch_size=64))
    result = agent.update(_batch(agent))
    first, *rest = result["epochs"]
    for epoch in rest:
        assert epoch["policy_loss"] == pytest.approx(first["policy_loss"])
        assert epoch["value_loss"] == pytest.approx(first["value_loss"])


def test_ratio_one_gives_plain_policy_gradient_objective():
    agent = PpoAgent(6, 4, PpoConfig(lr=0.0))
    batch = _batch(agent)
    out = agent._minibatch_step(batch.obs, batch.actions, batch.masks, batch.log_probs,
                                batch.advantages, batch.returns)
    assert out["policy_loss"] == pytest.approx(-batch.advantages.mean())
    assert out["approx_kl"] == pytest.approx(0.0, abs=1e-12)
    assert out["clip_fraction"] == 0.0


def test_zero_advantage_means_zero_policy_loss():
    agent = PpoAgent(6, 4, PpoConfig(epochs=1))
    result = agent.update(_batch(agent, advantages=np.zeros(32)))
    assert result["policy_loss"] == 0.0


def test_update_moves_probability_toward_positive_advantage():
    agent = PpoAgent(3, 3, PpoConfig(lr=1e-2, epochs=20, minibatch_size=8, max_grad_norm=10.0))
    obs = np.tile([0.2, 0.5, 0.9], (8, 1))
    masks = np.ones((8, 3), dtype=bool)
    before = masked_probs(agent.policy.forward(obs[0]), masks[0])[1]
    actions = np.array([1, 1, 1, 1, 0, 0, 2, 2])
    adv = np.array([1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0])
    logp = np.log(masked_probs(agent.policy.forward(obs), masks)[np.arange(8), actions])
    agent.update(RolloutBatch(obs=obs, actions=actions, masks=masks, log_probs=logp,
                              advantages=adv, returns=np.zeros(8)))
    after = masked_probs(agent.policy.forward(obs[0]), masks[0])[1]
    assert after > before


def test_advantage_normalization():
    np.testing.assert_allclose(normalize_advantages(np.array([1.0, 3.0])), [-1.0, 1.0], atol=1e-6)
    np.testing.assert_array_equal(normalize_advantages(np.array([4.0])), [4.0])


def test_value_targets_do_not_change_the_policy_step():
    a = PpoAgent(6, 4, PpoConfig(epochs=2, minibatch_size=16), seed=3)
    b = PpoAgent(6, 4, PpoConfig(epochs=2, minibatch_size=16), seed=3)
    batch = _batch(a)
    a.update(batch)
    b.update(batch.model_copy(update={"returns": batch.returns * 1000.0}))
    for wa, wb in zip(a.policy.params(), b.policy.params()):
        np.testing.assert_allclose(wa, wb)


# ── DQN ──────────────────────────────────────────────────────

def test_q_targets_ignore_masked_actions_and_terminals():
    next_q = np.array([[1.0, 5.0, 3.0], [1.0, 5.0, 3.0]])
    masks = np.array([[True, False, True], [True, True, True]])
    targets = q_targets(np.array([1.0, 1.0]), next_q, masks, np.array([False, True]), gamma=0.5)
    np.testing.assert_allclose(targets, [1.0 + 0.5 * 3.0, 1.0])


def test_epsilon_schedule():
    cfg = DqnConfig(exploration_fraction=0.1, initial_eps=1.0, final_eps=0.0)
    assert linear_epsilon(0, 1000, cfg) == 1.0
    assert linear_epsilon(50, 1000, cfg) == pytest.approx(0.5)
    assert linear_epsilon(500, 1000, cfg) == 0.0


def test_full_exploration_is_uniform_over_allowed():
    agent = DqnAgent(4, 5)
    mask = np.array([True, True, False, True, False])
    draws = np.array([agent.act(np.zeros(4), mask, epsilon=1.0) for _ in range(6000)])
    counts = np.bincount(draws, minlength=5)
    assert counts[2] == counts[4] == 0
    assert stats.chisquare(counts[mask]).pvalue > 0.001


def test_replay_buffer_wraps():
    buf = ReplayBuffer(3, 2, 2)
    for i in range(5):
        buf.add(np.full(2, i), 0, float(i), np.zeros(2), np.ones(2, dtype=bool), False)
    assert len(buf) == 3
    assert sorted(buf.rewards.tolist()) == [2.0, 3.0, 4.0]


def test_dqn_update_reduces_loss_on_fixed_batch():
    agent = DqnAgent(3, 2, DqnConfig(lr=1e-2, batch_size=4, buffer_size=8))
    batch = {
        "obs": np.eye(3)[[0, 1, 2, 0]],
        "actions": np.array([0, 1, 0, 1]),
        "rewards": np.array([1.0, -1.0, 0.5, 0.0]),
        "next_obs": np.zeros((4, 3)),
        "next_masks": np.ones((4, 2), dtype=bool),
        "dones": np.ones(4, dtype=bool),
    }
    first = agent.update(batch)["loss"]
    for _ in range(200):
        last = agent.update(batch)["loss"]
    assert last < first


# ── Training loops (short) ───────────────────────────────────

@pytest.fixture
def small_env_factory(chain, testbed):
    return lambda: CEEnv(chain, testbed, EnvConfig(s_max=4, max_steps=10))


def test_zero_step_budget_returns_initial_agent(small_env_factory):
    agent, stats_ = train_ppo(small_env_factory, PpoConfig(total_steps=0))
    assert stats_.steps == 0 and stats_.episode_rewards == []
    assert agent.meta()["s_max"] == 4
    _, stats_ = train_dqn(small_env_factory, DqnConfig(total_steps=0))
    assert stats_.updates == 0


def test_dqn_warmup_means_no_updates(small_env_factory):
    _, stats_ = train_dqn(small_env_factory, DqnConfig(total_steps=40, batch_size=64, buffer_size=1000))
    assert stats_.steps == 40
    assert stats_.updates == 0


def test_short_ppo_run_is_reproducible(small_env_factory):
    cfg = PpoConfig(total_steps=128, rollout_length=64, epochs=2, minibatch_size=32)
    _, a = train_ppo(small_env_factory, cfg, seed=3)
    _, b = train_ppo(small_env_factory, cfg, seed=3)
    assert a.updates == 2
    assert a.episode_rewards == b.episode_rewards


def test_progress_callback_reaches_one(small_env_factory):
    seen = []
    train_dqn(small_env_factory, DqnConfig(total_steps=50, batch_size=8, buffer_size=1000, learning_starts=8),
              on_progress=lambda msg, frac: seen.append(frac))
    assert seen and seen[-1] == pytest.approx(1.0)


def test_checkpoint_round_trip_and_dispatch(tmp_path, small_env_factory):
    agent, _ = train_ppo(small_env_factory, PpoConfig(total_steps=0))
    path = agent.save(tmp_path / "ppo.npz")
    loaded = load_agent(path)
    assert isinstance(loaded, PpoAgent)
    obs = np.random.default_rng(0).random(agent.obs_size)
    mask = np.ones(agent.n_actions, dtype=bool)
    assert loaded.greedy(obs, mask) == agent.greedy(obs, mask)
    with pytest.raises(CheckpointError, match="not DQN"):
        DqnAgent.load(path)


def test_incompatible_checkpoint_is_rejected(chain, testbed, small_env_factory):
    agent, _ = train_ppo(small_env_factory, PpoConfig(total_steps=0))
    other = CEEnv(chain, testbed, EnvConfig(s_max=8))
    with pytest.raises(CheckpointError, match="trained with"):
        run_episode(agent, other, seed=0)


# ── Heuristics ───────────────────────────────────────────────

def test_latency_greedy_prefers_edge(chain, testbed, rng):
    placement = heuristic_place(chain, testbed, "latency_greedy", rng)
    assert all(testbed.nodes[n].tier == "edge" for _, _, n in placement.instances())
    assert {n for _, _, n in placement.instances()} == {2}


def test_cloud_first_spills_to_edge(chain, rng):
    topo = build_topology(
        [[0.0, 50.0], [50.0, 0.0]], [50.0, 0.5],
        {n: {"Cloud-A": 1.0, "Edge-A": 1.0} for n in chain.names},
        types=["Cloud-A", "Edge-A"], cpu=[0.5, 4.0],
    )
    placement = heuristic_place(chain, topo, "cloud_first", rng)
    assert placement.assignment == ((0,), (1,), (0,), (1,))


def test_default_with_one_feasible_node(rng):
    topo = build_topology([[0.0, 1.0], [1.0, 0.0]], [0.0, 0.0], {"svc": {"Edge-A": 1.0}}, cpu=[0.1, 4.0])
    for _ in range(10):
        assert choose_node("default", topo, 0.5, 1.0, rng) == 1


def test_unknown_scheduler_and_infeasible(chain, testbed, rng):
    with pytest.raises(ConfigError, match="unknown scheduler"):
        choose_node("round_robin", testbed, 0.1, 1.0, rng)
    tiny = build_topology([[0.0]], [0.0], {n: {"Edge-A": 1.0} for n in chain.names}, cpu=[0.5])
    with pytest.raises(InfeasibleError):
        heuristic_place(chain, tiny, "default", rng)


def test_failed_placement_releases_earlier_commits(chain, rng):
    # Front-End and ml fit in 0.75 cores, Back-End does not
    topo = build_topology([[0.0]], [0.0], {n: {"Edge-A": 1.0} for n in chain.names}, cpu=[0.75])
    with pytest.raises(InfeasibleError, match="Back-End") as failure:
        place_instances(chain, topo, "default", chain.instance_slots(), rng)
    assert failure.value.diagnostics["available_cpu"] == [0.0]
    assert topo.requested_cpu.tolist() == [0.0]
    assert topo.requested_mem.tolist() == [0.0]


# ── Reschedule ───────────────────────────────────────────────

def test_reschedule_records_ordered_moves(ab_app, hand_topology):
    env = CEEnv(ab_app, hand_topology, EnvConfig(s_max=3, penalty_cost=0.0))
    start = Placement(assignment=[[0], [0, 1]])
    agent = ScriptedAgent(env, [env.encode(2, 0)])
    plan = reschedule(agent, env, {"topology": hand_topology, "placement": start})
    assert plan.initial_d_msa == pytest.approx(85.0)
    assert plan.final_d_msa == pytest.approx(60.0)
    assert plan.final_placement.assignment == ((0,), (0, 0))
    assert len(plan.moves) == 1
    move = plan.moves[0]
    assert (move.service, move.replica, move.source, move.target) == ("B", 1, 1, 0)
    assert plan.d_msa_trajectory == [pytest.approx(85.0), pytest.approx(60.0)]
    assert plan.idle_reached and not plan.truncated


def test_reschedule_flags_truncation(ab_app, hand_topology):
    env = CEEnv(ab_app, hand_topology, EnvConfig(s_max=3, max_steps=2))
    agent = ScriptedAgent(env, [env.encode(2, 0), env.encode(2, 1), env.encode(2, 0)])
    plan = reschedule(agent, env, {"topology": hand_topology, "placement": Placement(assignment=[[0], [0, 1]])})
    assert plan.truncated and not plan.idle_reached
    assert len(plan.moves) == 2


# ── Learning (slow) ──────────────────────────────────────────

def _chain_env(chain, testbed):
    return lambda: CEEnv(chain, testbed, EnvConfig(s_max=4, max_steps=20))


@pytest.mark.slow
def test_ppo_learns_to_move_toward_the_user(chain, testbed):
    factory = _chain_env(chain, testbed)
    _, stats_ = train_ppo(factory, PpoConfig(total_steps=60_000, rollout_length=1024, lr=1e-3), seed=0)
    early = float(np.mean(stats_.episode_rewards[:100]))
    assert stats_.final_mean(100) > early


@pytest.mark.slow
def test_dqn_improves_on_its_start(chain, testbed):
    factory = _chain_env(chain, testbed)
    _, stats_ = train_dqn(factory, DqnConfig(total_steps=60_000, buffer_size=20_000), seed=0)
    early = float(np.mean(stats_.episode_rewards[:100]))
    assert stats_.final_mean(100) > early
