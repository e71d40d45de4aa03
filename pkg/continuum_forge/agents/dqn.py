"""
CONTINUUM-FORGE — DQN
Replay-buffer deep Q-learning over the same masked action space.
"""

from __future__ import annotations
import logging
import time
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Union

import numpy as np

from ..env import CEEnv
from ..errors import CheckpointError, NumericalError
from ..models import DqnConfig, TrainStats
from ..nnet import Adam, Mlp, clip_by_global_norm, load_checkpoint, save_checkpoint
from .common import env_meta
from .masking import masked_argmax, masked_max, uniform_allowed

log = logging.getLogger(__name__)

ProgressFn = Callable[[str, float], None]


class ReplayBuffer:
    """Fixed-size ring buffer of (s, a, r, s', mask', done)."""

    def __init__(self, capacity: int, obs_size: int, n_actions: int) -> None:
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_size), dtype=np.float32)
        self.next_obs = np.zeros((capacity, obs_size), dtype=np.float32)
        self.next_masks = np.zeros((capacity, n_actions), dtype=bool)
        self.actions = np.zeros(capacity, dtype=int)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity, dtype=bool)
        self.size = 0
        self._pos = 0

    def __len__(self) -> int:
        return self.size

    def add(self, obs, action: int, reward: float, next_obs, next_mask, done: bool) -> None:
        i = self._pos
        self.obs[i], self.actions[i], self.rewards[i] = obs, action, reward
        self.next_obs[i], self.next_masks[i], self.dones[i] = next_obs, next_mask, done
        self._pos = (self._pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Dict[str, np.ndarray]:
        idx = rng.integers(0, self.size, size=batch_size)
        return {
            "obs": self.obs[idx],
            "actions": self.actions[idx],
            "rewards": self.rewards[idx],
            "next_obs": self.next_obs[idx],
            "next_masks": self.next_masks[idx],
            "dones": self.dones[idx],
        }


def q_targets(
    rewards: np.ndarray,
    next_q: np.ndarray,
    next_masks: np.ndarray,
    dones: np.ndarray,
    gamma: float,
) -> np.ndarray:
    """r + γ·max over unmasked a' of Q_target(s', a'), no bootstrap on terminal steps."""
    best = masked_max(next_q, next_masks)
    return rewards + gamma * np.where(dones, 0.0, best)


def linear_epsilon(step: int, total: int, cfg: DqnConfig) -> float:
    horizon = max(1, int(cfg.exploration_fraction * total))
    frac = min(1.0, step / horizon)
    return cfg.initial_eps + frac * (cfg.final_eps - cfg.initial_eps)


class DqnAgent:
    kind = "dqn"

    def __init__(
        self,
        obs_size: int,
        n_actions: int,
        config: Optional[DqnConfig] = None,
        seed: int = 0,
    ) -> None:
        self.config = config or DqnConfig()
        self.obs_size = obs_size
        self.n_actions = n_actions
        h = self.config.hidden
        self.q = Mlp([obs_size, h, h, h, n_actions], np.random.default_rng(seed), out_gain=1.0)
        self.target = self.q.copy()
        self.rng = np.random.default_rng([seed, 2])
        self.env_info: Dict[str, Any] = {}
        self.optimizer = Adam(self.q.params(), lr=self.config.lr)

    def act(self, obs: np.ndarray, mask: np.ndarray, epsilon: float) -> int:
        if self.rng.random() < epsilon:
            return uniform_allowed(mask, self.rng)
        return self.greedy(obs, mask)

    def greedy(self, obs: np.ndarray, mask: np.ndarray) -> int:
        return masked_argmax(self.q.forward(obs), mask)

    def update(self, batch: Dict[str, np.ndarray]) -> Dict[str, float]:
        """One Huber-loss gradient step on a replay minibatch."""
        cfg = self.config
        b = len(batch["actions"])
        rows = np.arange(b)
        targets = q_targets(
            batch["rewards"], self.target.forward(batch["next_obs"]),
            batch["next_masks"], batch["dones"], cfg.gamma,
        )
        q_all = self.q.forward(batch["obs"])
        diff = q_all[rows, batch["actions"]] - targets
        abs_diff = np.abs(diff)
        loss = float(np.mean(np.where(abs_diff <= 1.0, 0.5 * diff ** 2, abs_diff - 0.5)))
        if not np.isfinite(loss):
            raise NumericalError("DQN loss is not finite", diagnostics={"max_target": float(np.max(targets))})
        grad_q = np.zeros_like(q_all)
        grad_q[rows, batch["actions"]] = np.clip(diff, -1.0, 1.0) / b
        gw, gb = self.q.backward(grad_q)
        grads, norm = clip_by_global_norm([*gw, *gb], cfg.max_grad_norm)
        self.optimizer.step(grads)
        self.q.check_finite("Q network")
        return {"loss": loss, "grad_norm": norm, "mean_q": float(q_all.mean())}

    def sync_target(self) -> None:
        self.target.load_from(self.q, tau=self.config.tau)

    def meta(self) -> Dict[str, Any]:
        return {
            "agent": self.kind,
            "obs_size": self.obs_size,
            "n_actions": self.n_actions,
            "config": self.config.model_dump(),
            **self.env_info,
        }

    def save(self, path: Union[str, Path]) -> Path:
        return save_checkpoint(path, {"q": self.q}, self.meta())

    @classmethod
    def from_checkpoint(cls, nets: Dict[str, Mlp], meta: Dict[str, Any]) -> "DqnAgent":
        if "q" not in nets:
            raise CheckpointError("DQN checkpoint needs a 'q' net")
        agent = cls(meta["obs_size"], meta["n_actions"], DqnConfig.model_validate(meta.get("config", {})))
        agent.q = nets["q"]
        agent.target = agent.q.copy()
        agent.optimizer = Adam(agent.q.params(), lr=agent.config.lr)
        agent.env_info = {k: meta[k] for k in ("s_max", "n_nodes", "app") if k in meta}
        return agent

    @classmethod
    def load(cls, path: Union[str, Path]) -> "DqnAgent":
        nets, meta = load_checkpoint(path)
        if meta.get("agent") != cls.kind:
            raise CheckpointError(f"{path} holds a '{meta.get('agent')}' agent, not DQN")
        return cls.from_checkpoint(nets, meta)


def train_dqn(
    env_factory: Callable[[], CEEnv],
    config: Optional[DqnConfig] = None,
    seed: int = 0,
    on_progress: Optional[ProgressFn] = None,
    checkpoint_path: Optional[Callable[[str], Path]] = None,
) -> Tuple[DqnAgent, TrainStats]:
    """checkpoint_path maps a periodic checkpoint file name to where it is written."""
    cfg = config or DqnConfig()
    env = env_factory()
    obs_size = int(env.observation_space.shape[0])
    agent = DqnAgent(obs_size, env.n_actions, cfg, seed)
    agent.env_info = {**env_meta(env), "app": env.app.name}
    stats = TrainStats(agent="dqn")
    if cfg.total_steps == 0:
        return agent, stats

    buffer = ReplayBuffer(cfg.buffer_size, obs_size, env.n_actions)
    obs, info = env.reset(seed=seed)
    ep_reward, ep_len = 0.0, 0
    started = time.perf_counter()
    report_every = max(1, cfg.total_steps // 100)
    last_loss = float("nan")

    for step in range(1, cfg.total_steps + 1):
        eps = linear_epsilon(step - 1, cfg.total_steps, cfg)
        action = agent.act(obs, info["action_mask"], eps)
        next_obs, reward, terminated, truncated, info = env.step(action)
        buffer.add(obs, action, reward, next_obs, info["action_mask"], terminated)
        ep_reward += reward
        ep_len += 1
        if terminated or truncated:
            stats.record_episode(ep_reward, ep_len, step, time.perf_counter() - started)
            ep_reward, ep_len = 0.0, 0
            obs, info = env.reset()
        else:
            obs = next_obs

        if len(buffer) >= cfg.warmup and step % cfg.train_freq == 0:
            last_loss = agent.update(buffer.sample(cfg.batch_size, agent.rng))["loss"]
            stats.updates += 1
        if step % cfg.target_update_interval == 0:
            agent.sync_target()
        stats.steps = step

        if step % report_every == 0 or step == cfg.total_steps:
            avg = stats.moving_average[-1] if stats.moving_average else float("nan")
            log.info("dqn step %d  eps %.3f  episodes %d  avg reward %.2f  loss %.4f",
                     step, eps, len(stats.episode_rewards), avg, last_loss)
            if on_progress:
                on_progress(f"step {step:,}  avg reward {avg:.2f}", step / cfg.total_steps)
        if checkpoint_path and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
            agent.save(checkpoint_path(f"dqn-{step}.npz"))
    return agent, stats
