"""
CONTINUUM-FORGE — Action Masking
Masked categorical helpers shared by the PPO and DQN agents.
"""

from __future__ import annotations

import numpy as np

# Large-negative stand-in for −∞: exp() underflows to exactly 0 after the max shift.
MASKED_LOGIT = -1e9


def masked_logits(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any(axis=-1).all():
        raise ValueError("action mask has no allowed action")
    return np.where(mask, logits, MASKED_LOGIT)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def masked_probs(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    probs = softmax(masked_logits(logits, mask))
    return np.where(mask, probs, 0.0)


def log_prob(probs: np.ndarray, actions: np.ndarray) -> np.ndarray:
    picked = np.take_along_axis(np.atleast_2d(probs), np.atleast_1d(actions)[:, None], axis=-1)[:, 0]
    return np.log(np.maximum(picked, 1e-300))


def entropy(probs: np.ndarray) -> np.ndarray:
    logp = np.log(np.where(probs > 0, probs, 1.0))
    return -(probs * logp).sum(axis=-1)


def sample(probs: np.ndarray, rng: np.random.Generator) -> int:
    return int(rng.choice(probs.shape[-1], p=probs))


def masked_argmax(values: np.ndarray, mask: np.ndarray) -> int:
    """Lowest index among the best allowed entries."""
    return int(np.argmax(np.where(mask, values, -np.inf)))


def masked_max(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row-wise max over allowed entries."""
    return np.where(mask, values, -np.inf).max(axis=-1)


def uniform_allowed(mask: np.ndarray, rng: np.random.Generator) -> int:
    return int(rng.choice(np.flatnonzero(mask)))
