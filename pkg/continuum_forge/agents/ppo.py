"""
CONTINUUM-FORGE — PPO
Clipped-surrogate PPO with invalid-action masking, on the numpy MLPs.
"""

from __future__ import annotations
import logging
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import scipy.signal
from pydantic import BaseModel, ConfigDict

from ..env import CEEnv
from ..errors import CheckpointError, NumericalError
from ..models import PpoConfig, TrainStats
from ..nnet import Adam, Mlp, clip_by_global_norm, load_checkpoint, save_checkpoint
from .common import env_meta
from .masking import entropy, log_prob, masked_probs, sample

log = logging.getLogger(__name__)

ProgressFn = Callable[[str, float], None]


def discount_cumsum(x: np.ndarray, discount: float) -> np.ndarray:
    """[x0 + d·x1 + d²·x2 + …, x1 + d·x2 + …, …]"""
    return scipy.signal.lfilter([1], [1, float(-discount)], x[::-1], axis=0)[::-1]


def gae(
    rewards: np.ndarray,
    values: np.ndarray,
    terminals: np.ndarray,
    gamma: float,
    lam: float,
    next_values: Optional[np.ndarray] = None,
    episode_ends: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Generalized advantage estimates and returns (advantages + values), unnormalized.

    next_values[t] is V(s_{t+1}); it defaults to values shifted by one with 0 after the
    last step. Terminal steps never bootstrap. episode_ends (terminal or truncated)
    split the recursion; it defaults to terminals.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    terminals = np.asarray(terminals, dtype=bool)
    n = len(rewards)
    if len(values) != n or len(terminals) != n:
        raise ValueError(f"gae inputs differ in length: {n}, {len(values)}, {len(terminals)}")
    if next_values is None:
        next_values = np.append(values[1:], 0.0)
    ends = terminals if episode_ends is None else np.asarray(episode_ends, dtype=bool)
    deltas = rewards + gamma * np.asarray(next_values, dtype=float) * (~terminals) - values

    advantages = np.empty(n)
    start = 0
    for end in [*np.flatnonzero(ends[:-1]), n - 1]:
        advantages[start:end + 1] = discount_cumsum(deltas[start:end + 1], gamma * lam)
        start = end + 1
    return advantages, advantages + values


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    """Zero mean, unit std; a single entry is left as is."""
    if len(advantages) < 2:
        return advantages
    return (advantages - advantages.mean()) / (advantages.std() + 1e-8)


class RolloutBatch(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    obs: np.ndarray
    actions: np.ndarray
    masks: np.ndarray
    log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)


def ppo_act(
    policy: Mlp,
    value: Mlp,
    obs: np.ndarray,
    mask: np.ndarray,
    rng: np.random.Generator,
    greedy: bool = False,
) -> Tuple[int, float, float]:
    probs = masked_probs(policy.forward(obs), mask)
    action = int(np.argmax(probs)) if greedy else sample(probs, rng)
    return action, float(np.log(probs[action])), float(value.forward(obs)[0])


class PpoAgent:
    kind = "ppo"

    def __init__(
        self,
        obs_size: int,
        n_actions: int,
        config: Optional[PpoConfig] = None,
        seed: int = 0,
    ) -> None:
        self.config = config or PpoConfig()
        self.obs_size = obs_size
        self.n_actions = n_actions
        init_rng = np.random.default_rng(seed)
        h = self.config.hidden
        self.policy = Mlp([obs_size, h, h, n_actions], init_rng, out_gain=0.01)
        self.value = Mlp([obs_size, h, h, 1], init_rng, out_gain=1.0)
        self.rng = np.random.default_rng([seed, 1])
        self.env_info: Dict[str, Any] = {}
        self._reset_optimizer()

    def _reset_optimizer(self) -> None:
        self.optimizer = Adam(self.policy.params() + self.value.params(), lr=self.config.lr)

    # ── Acting ───────────────────────────────────────────────

    def act(self, obs: np.ndarray, mask: np.ndarray, greedy: bool = False) -> Tuple[int, float, float]:
        return ppo_act(self.policy, self.value, obs, mask, self.rng, greedy)

    def greedy(self, obs: np.ndarray, mask: np.ndarray) -> int:
        return int(np.argmax(masked_probs(self.policy.forward(obs), mask)))

    def value_of(self, obs: np.ndarray) -> float:
        return float(self.value.forward(obs)[0])

    # ── Learning ─────────────────────────────────────────────

    def update(self, batch: RolloutBatch) -> Dict[str, Any]:
        """Several epochs of shuffled minibatch steps on one rollout."""
        cfg = self.config
        n = len(batch)
        if n == 0:
            raise ValueError("empty rollout batch")
        order = np.arange(n)
        epochs: List[Dict[str, float]] = []
        for _ in range(cfg.epochs):
            self.rng.shuffle(order)
            parts = []
            for start in range(0, n, cfg.minibatch_size):
                idx = order[start:start + cfg.minibatch_size]
                parts.append(self._minibatch_step(
                    batch.obs[idx], batch.actions[idx], batch.masks[idx],
                    batch.log_probs[idx], normalize_advantages(batch.advantages[idx]), batch.returns[idx],
                ))
            weights = np.array([p.pop("size") for p in parts], dtype=float)
            epochs.append({
                k: float(np.average([p[k] for p in parts], weights=weights)) for k in parts[0]
            })
        return {**epochs[-1], "epochs": epochs}

    def _minibatch_step(
        self,
        obs: np.ndarray,
        actions: np.ndarray,
        masks: np.ndarray,
        old_log_probs: np.ndarray,
        advantages: np.ndarray,
        returns: np.ndarray,
    ) -> Dict[str, float]:
        cfg = self.config
        b = len(actions)
        rows = np.arange(b)

        probs = masked_probs(self.policy.forward(obs), masks)
        logp = log_prob(probs, actions)
        ratio = np.exp(logp - old_log_probs)
        surr1 = ratio * advantages
        surr2 = np.clip(ratio, 1.0 - cfg.clip_range, 1.0 + cfg.clip_range) * advantages
        policy_loss = -float(np.mean(np.minimum(surr1, surr2)))
        ent = entropy(probs)

        # d(-min(surr1, surr2))/d logp is -ratio·A where the unclipped branch is active
        d_logp = np.where(surr1 <= surr2, -surr1, 0.0) / b
        onehot = np.zeros_like(probs)
        onehot[rows, actions] = 1.0
        g_logits = d_logp[:, None] * (onehot - probs)
        if cfg.ent_coef:
            logp_all = np.log(np.where(probs > 0, probs, 1.0))
            d_ent = -probs * (logp_all + ent[:, None])
            g_logits -= cfg.ent_coef * d_ent / b
        g_logits = np.where(masks, g_logits, 0.0)
        pw, pb = self.policy.backward(g_logits)

        values = self.value.forward(obs)[:, 0]
        value_loss = float(np.mean((values - returns) ** 2))
        vw, vb = self.value.backward((2.0 * cfg.vf_coef * (values - returns) / b)[:, None])

        loss = policy_loss + cfg.vf_coef * value_loss - cfg.ent_coef * float(ent.mean())
        if not np.isfinite(loss):
            raise NumericalError(
                "PPO loss is not finite",
                diagnostics={"policy_loss": policy_loss, "value_loss": value_loss,
                             "max_ratio": float(np.max(ratio))},
            )
        # policy and value norms are clipped independently
        p_grads, norm = clip_by_global_norm([*pw, *pb], cfg.max_grad_norm)
        v_grads, v_norm = clip_by_global_norm([*vw, *vb], cfg.max_grad_norm)
        self.optimizer.step([*p_grads, *v_grads])
        self.policy.check_finite("policy network")
        self.value.check_finite("value network")
        return {
            "size": b,
            "policy_loss": policy_loss,
            "value_loss": value_loss,
            "entropy": float(ent.mean()),
            "approx_kl": float(np.mean(old_log_probs - logp)),
            "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip_range)),
            "grad_norm": norm,
            "value_grad_norm": v_norm,
        }

    # ── Checkpoints ──────────────────────────────────────────

    def meta(self) -> Dict[str, Any]:
        return {
            "agent": self.kind,
            "obs_size": self.obs_size,
            "n_actions": self.n_actions,
            "config": self.config.model_dump(),
            **self.env_info,
        }

    def save(self, path: Union[str, Path]) -> Path:
        return save_checkpoint(path, {"policy": self.policy, "value": self.value}, self.meta())

    @classmethod
    def from_checkpoint(cls, nets: Dict[str, Mlp], meta: Dict[str, Any]) -> "PpoAgent":
        if "policy" not in nets or "value" not in nets:
            raise CheckpointError("PPO checkpoint needs 'policy' and 'value' nets")
        agent = cls(meta["obs_size"], meta["n_actions"], PpoConfig.model_validate(meta.get("config", {})))
        agent.policy, agent.value = nets["policy"], nets["value"]
        agent.env_info = {k: meta[k] for k in ("s_max", "n_nodes", "app") if k in meta}
        agent._reset_optimizer()
        return agent

    @classmethod
    def load(cls, path: Union[str, Path]) -> "PpoAgent":
        nets, meta = load_checkpoint(path)
        if meta.get("agent") != cls.kind:
            raise CheckpointError(f"{path} holds a '{meta.get('agent')}' agent, not PPO")
        return cls.from_checkpoint(nets, meta)


# ── Training loop ────────────────────────────────────────────

def train_ppo(
    env_factory: Callable[[], CEEnv],
    config: Optional[PpoConfig] = None,
    seed: int = 0,
    on_progress: Optional[ProgressFn] = None,
    checkpoint_path: Optional[Callable[[str], Path]] = None,
) -> Tuple[PpoAgent, TrainStats]:
    """checkpoint_path maps a periodic checkpoint file name to where it is written."""
    cfg = config or PpoConfig()
    env = env_factory()
    obs_size = int(env.observation_space.shape[0])
    agent = PpoAgent(obs_size, env.n_actions, cfg, seed)
    agent.env_info = {**env_meta(env), "app": env.app.name}
    stats = TrainStats(agent="ppo")
    if cfg.total_steps == 0:
        return agent, stats

    obs, info = env.reset(seed=seed)
    ep_reward, ep_len = 0.0, 0
    started = time.perf_counter()
    step = 0
    while step < cfg.total_steps:
        n = min(cfg.rollout_length, cfg.total_steps - step)
        b_obs = np.zeros((n, obs_size))
        b_masks = np.zeros((n, env.n_actions), dtype=bool)
        b_actions = np.zeros(n, dtype=int)
        b_logp = np.zeros(n)
        b_values = np.zeros(n)
        b_rewards = np.zeros(n)
        b_terminal = np.zeros(n, dtype=bool)
        b_end = np.zeros(n, dtype=bool)
        final_values = np.zeros(n)

        for t in range(n):
            mask = info["action_mask"]
            action, logp, value = agent.act(obs, mask)
            next_obs, reward, terminated, truncated, info = env.step(action)
            b_obs[t], b_masks[t], b_actions[t] = obs, mask, action
            b_logp[t], b_values[t], b_rewards[t] = logp, value, reward
            b_terminal[t], b_end[t] = terminated, terminated or truncated
            step += 1
            ep_reward += reward
            ep_len += 1
            if terminated or truncated:
                if truncated:
                    final_values[t] = agent.value_of(next_obs)
                stats.record_episode(ep_reward, ep_len, step, time.perf_counter() - started)
                ep_reward, ep_len = 0.0, 0
                obs, info = env.reset()
            else:
                obs = next_obs

        next_values = np.append(b_values[1:], agent.value_of(obs))
        next_values[b_end] = final_values[b_end]
        advantages, returns = gae(
            b_rewards, b_values, b_terminal, cfg.gamma, cfg.gae_lambda, next_values, b_end
        )
        result = agent.update(RolloutBatch(
            obs=b_obs, actions=b_actions, masks=b_masks, log_probs=b_logp,
            advantages=advantages, returns=returns,
        ))
        stats.updates += 1
        stats.steps = step
        avg = stats.moving_average[-1] if stats.moving_average else float("nan")
        log.info(
            "ppo update %d  step %d  episodes %d  avg reward %.2f  pi %.4f  vf %.4f  kl %.5f",
            stats.updates, step, len(stats.episode_rewards), avg,
            result["policy_loss"], result["value_loss"], result["approx_kl"],
        )
        if on_progress:
            on_progress(f"step {step:,}  avg reward {avg:.2f}", step / cfg.total_steps)
        if checkpoint_path and cfg.checkpoint_every and stats.updates % cfg.checkpoint_every == 0:
            agent.save(checkpoint_path(f"ppo-{step}.npz"))
    return agent, stats
