"""
CONTINUUM-FORGE — Neural Nets
Small tanh MLPs with hand-written backprop, Adam, and .npz checkpoints.
"""

from __future__ import annotations
import io
import json
import zipfile
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import CheckpointError, NumericalError

CHECKPOINT_VERSION = 1

Grads = Tuple[List[np.ndarray], List[np.ndarray]]


def orthogonal(shape: Tuple[int, int], gain: float, rng: np.random.Generator) -> np.ndarray:
    rows, cols = shape
    flat = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(flat)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class Mlp:
    """
    y = L_k(tanh(... tanh(L_1(x)))), with L(x) = x @ W + b.
    forward() caches activations for exactly one following backward().
    """

    def __init__(
        self,
        sizes: Sequence[int],
        rng: Optional[np.random.Generator] = None,
        out_gain: float = 1.0,
        hidden_gain: float = np.sqrt(2.0),
    ) -> None:
        if len(sizes) < 2:
            raise ValueError("an Mlp needs at least input and output sizes")
        self.sizes = [int(s) for s in sizes]
        rng = rng or np.random.default_rng(0)
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        last = len(self.sizes) - 2
        for k, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            gain = out_gain if k == last else hidden_gain
            self.weights.append(orthogonal((n_in, n_out), gain, rng))
            self.biases.append(np.zeros(n_out))
        self._cache: Optional[List[np.ndarray]] = None

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def params(self) -> List[np.ndarray]:
        return [*self.weights, *self.biases]

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(f"input width {x.shape[-1]} != {self.sizes[0]}")
        acts = [x]
        h = x
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if k < self.n_layers - 1:
                h = np.tanh(h)
            acts.append(h)
        self._cache = acts
        return h

    __call__ = forward

    def backward(self, grad_out: np.ndarray) -> Grads:
        """Gradients of sum(grad_out · y) w.r.t. every weight and bias."""
        if self._cache is None:
            raise RuntimeError("backward() called without a cached forward()")
        acts = self._cache
        grad = np.asarray(grad_out, dtype=float)
        if grad.shape != acts[-1].shape:
            raise ValueError(f"upstream gradient shape {grad.shape} != output shape {acts[-1].shape}")
        grads_w: List[np.ndarray] = [np.empty(0)] * self.n_layers
        grads_b: List[np.ndarray] = [np.empty(0)] * self.n_layers
        for k in reversed(range(self.n_layers)):
            if k < self.n_layers - 1:
                grad = grad * (1.0 - acts[k + 1] ** 2)
            inp = acts[k]
            if inp.ndim == 1:
                grads_w[k] = np.outer(inp, grad)
                grads_b[k] = grad.copy()
            else:
                grads_w[k] = inp.T @ grad
                grads_b[k] = grad.sum(axis=0)
            grad = grad @ self.weights[k].T
        return grads_w, grads_b

    def copy(self) -> "Mlp":
        other = Mlp.__new__(Mlp)
        other.sizes = list(self.sizes)
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        other._cache = None
        return other

    def load_from(self, other: "Mlp", tau: float = 1.0) -> None:
        """Polyak copy; tau=1 is a hard sync."""
        for mine, theirs in zip(self.params(), other.params()):
            mine *= 1.0 - tau
            mine += tau * theirs

    def check_finite(self, where: str) -> None:
        for k, p in enumerate(self.params()):
            if not np.all(np.isfinite(p)):
                raise NumericalError(
                    f"non-finite parameters in {where}",
                    diagnostics={"tensor": k, "shape": list(p.shape)},
                )

    def state(self, prefix: str) -> Dict[str, np.ndarray]:
        out = {}
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}/W{k}"] = w
            out[f"{prefix}/b{k}"] = b
        return out

    def load_state(self, arrays: Dict[str, np.ndarray], prefix: str) -> None:
        for k in range(self.n_layers):
            try:
                w = arrays[f"{prefix}/W{k}"]
                b = arrays[f"{prefix}/b{k}"]
            except KeyError as e:
                raise CheckpointError(f"checkpoint is missing {e.args[0]}") from e
            if w.shape != self.weights[k].shape or b.shape != self.biases[k].shape:
                raise CheckpointError(
                    f"{prefix} layer {k}: checkpoint shape {w.shape} does not match {self.weights[k].shape}"
                )
            self.weights[k] = np.array(w, dtype=float)
            self.biases[k] = np.array(b, dtype=float)


# ── Optimisation ─────────────────────────────────────────────

def global_norm(grads: Sequence[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_by_global_norm(grads: List[np.ndarray], max_norm: float) -> Tuple[List[np.ndarray], float]:
    norm = global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        grads = [g * scale for g in grads]
    return grads, norm


class Adam:
    """Adam over a fixed list of parameter arrays, updated in place."""

    def __init__(
        self,
        params: List[np.ndarray],
        lr: float = 3e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: Sequence[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValueError(f"{len(grads)} gradients for {len(self.params)} parameters")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_update(net: Mlp, grads: Grads, lr: float, optimizer: Optional[Adam] = None) -> Adam:
    """One Adam step on a single net. Pass the returned optimizer back in to keep moment state."""
    if optimizer is None:
        optimizer = Adam(net.params(), lr=lr)
    optimizer.lr = lr
    optimizer.step([*grads[0], *grads[1]])
    return optimizer


# ── Checkpoints ──────────────────────────────────────────────

def save_checkpoint(path: Union[str, Path], nets: Dict[str, Mlp], meta: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays: Dict[str, np.ndarray] = {}
    for name, net in nets.items():
        arrays.update(net.state(name))
    header = {"version": CHECKPOINT_VERSION, "nets": {k: v.sizes for k, v in nets.items()}, **meta}
    arrays["__meta__"] = np.array(json.dumps(header, sort_keys=True))
    # fixed zip timestamps: equal runs give byte-identical files
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for key in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arrays[key]), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"{key}.npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, Mlp], Dict[str, Any]]:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {k: data[k] for k in data.files}
    except FileNotFoundError as e:
        raise CheckpointError(f"checkpoint not found: {path}") from e
    except Exception as e:
        raise CheckpointError(f"{path}: not a readable checkpoint ({e})") from e
    try:
        meta = json.loads(str(arrays.pop("__meta__")))
    except (KeyError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: checkpoint header missing or corrupt") from e
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {meta.get('version')}")
    nets: Dict[str, Mlp] = {}
    for name, sizes in meta.get("nets", {}).items():
        net = Mlp(sizes)
        net.load_state(arrays, name)
        if not all(np.all(np.isfinite(p)) for p in net.params()):
            raise CheckpointError(f"{path}: net '{name}' holds non-finite parameters")
        nets[name] = net
    return nets, meta
