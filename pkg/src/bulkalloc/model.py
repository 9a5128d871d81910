"""Per-resource risk predictor: LSTM -> Dense(PReLU) -> Dense(sigmoid).

Pure numpy, float64.  :func:`forward` scores a stack of sequences with shared
weights and returns a cache; :func:`backward` runs full backpropagation
through time from per-sequence upstream gradients.

Gate layout in the fused LSTM kernels is ``[input, forget, candidate, output]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

ADAM_LR = 1e-3
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-7
PRELU_INIT = 0.25


class TrainingError(RuntimeError):
    pass


def param_shapes(hidden: int = 16, dense: int = 10, input_dim: int = 1) -> dict[str, tuple[int, ...]]:
    """Ordered parameter names and shapes; the order is the serialization order."""
    return {
        "lstm_Wx": (input_dim, 4 * hidden),
        "lstm_Wh": (hidden, 4 * hidden),
        "lstm_b": (4 * hidden,),
        "dense1_W": (hidden, dense),
        "dense1_b": (dense,),
        "prelu_alpha": (dense,),
        "dense2_W": (dense, 1),
        "dense2_b": (1,),
    }


@dataclass
class ModelWeights:
    params: dict[str, np.ndarray]
    hidden: int = 16
    dense: int = 10
    input_dim: int = 1

    def __post_init__(self):
        expected = param_shapes(self.hidden, self.dense, self.input_dim)
        if list(self.params) != list(expected):
            raise ValueError(f"parameter names {list(self.params)} do not match {list(expected)}")
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise ValueError(f"{name}: shape {self.params[name].shape}, expected {shape}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def copy(self) -> "ModelWeights":
        return ModelWeights({k: v.copy() for k, v in self.params.items()}, self.hidden, self.dense, self.input_dim)

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.params.values()])

    @property
    def size(self) -> int:
        return sum(v.size for v in self.params.values())


def _glorot(stream: np.random.Generator, shape) -> np.ndarray:
    fan_in, fan_out = shape[0], shape[1]
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return stream.uniform(-bound, bound, size=shape)


def init_weights(stream: np.random.Generator, hidden: int = 16, dense: int = 10, input_dim: int = 1) -> ModelWeights:
    """Glorot-uniform kernels, zero biases, forget-gate bias 1, PReLU slopes 0.25."""
    shapes = param_shapes(hidden, dense, input_dim)
    params = {}
    for name, shape in shapes.items():
        if len(shape) == 2:
            params[name] = _glorot(stream, shape)
        else:
            params[name] = np.zeros(shape)
    params["lstm_b"][hidden : 2 * hidden] = 1.0
    params["prelu_alpha"][:] = PRELU_INIT
    return ModelWeights(params, hidden, dense, input_dim)


@dataclass
class ForwardCache:
    x: np.ndarray  # (N, T, d)
    gates: np.ndarray  # (N, T, 4H) post-activation
    c: np.ndarray  # (N, T + 1, H)
    h: np.ndarray  # (N, T + 1, H)
    tanh_c: np.ndarray  # (N, T, H)
    a1: np.ndarray  # (N, dense) pre-PReLU
    z1: np.ndarray  # (N, dense)
    q: np.ndarray  # (N,)


def _as_sequences(x, input_dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim == 2:
        x = x[..., None]
    if x.ndim != 3 or x.shape[-1] != input_dim:
        raise ValueError(f"expected (N, T) or (N, T, {input_dim}) input, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input sequence contains non-finite values")
    return x


def forward(w: ModelWeights, x) -> tuple[np.ndarray, ForwardCache]:
    """Score ``N`` sequences; ``x`` is (N, T), (N, T, d) or a single (T,) sequence."""
    x = _as_sequences(x, w.input_dim)
    N, T, _ = x.shape
    H = w.hidden
    Wh, b = w["lstm_Wh"], w["lstm_b"]
    zx = x @ w["lstm_Wx"] + b  # (N, T, 4H)

    gates = np.empty((N, T, 4 * H))
    c = np.zeros((N, T + 1, H))
    h = np.zeros((N, T + 1, H))
    tanh_c = np.empty((N, T, H))
    for t in range(T):
        z = zx[:, t] + h[:, t] @ Wh
        act = gates[:, t]
        act[:, : 2 * H] = expit(z[:, : 2 * H])
        act[:, 2 * H : 3 * H] = np.tanh(z[:, 2 * H : 3 * H])
        act[:, 3 * H :] = expit(z[:, 3 * H :])
        c[:, t + 1] = act[:, H : 2 * H] * c[:, t] + act[:, :H] * act[:, 2 * H : 3 * H]
        tanh_c[:, t] = np.tanh(c[:, t + 1])
        h[:, t + 1] = act[:, 3 * H :] * tanh_c[:, t]

    a1 = h[:, T] @ w["dense1_W"] + w["dense1_b"]
    z1 = np.where(a1 > 0, a1, w["prelu_alpha"] * a1)
    q = expit(z1 @ w["dense2_W"] + w["dense2_b"])[:, 0]
    return q, ForwardCache(x, gates, c, h, tanh_c, a1, z1, q)


def predict(w: ModelWeights, x, chunk: int = 4096) -> np.ndarray:
    """Scores for an arbitrary leading shape ``(..., T)`` of sequences."""
    x = np.asarray(x, dtype=float)
    lead = x.shape[:-1]
    flat = x.reshape(-1, x.shape[-1])
    out = np.empty(flat.shape[0])
    for start in range(0, flat.shape[0], chunk):
        out[start : start + chunk] = forward(w, flat[start : start + chunk])[0]
    return out.reshape(lead)


def backward(w: ModelWeights, cache: ForwardCache, dq) -> dict[str, np.ndarray]:
    """Gradient of ``sum_n dq[n] * q[n]`` with respect to every parameter."""
    dq = np.asarray(dq, dtype=float).reshape(-1)
    x, gates, c, h, tanh_c = cache.x, cache.gates, cache.c, cache.h, cache.tanh_c
    N, T, _ = x.shape
    H = w.hidden
    if dq.shape[0] != N:
        raise ValueError(f"upstream gradient has {dq.shape[0]} entries for {N} sequences")
    grads = w.zeros_like()

    q = cache.q
    da2 = (dq * q * (1.0 - q))[:, None]  # (N, 1)
    grads["dense2_W"] = cache.z1.T @ da2
    grads["dense2_b"] = da2.sum(axis=0)
    dz1 = da2 @ w["dense2_W"].T
    neg = cache.a1 <= 0
    grads["prelu_alpha"] = np.sum(np.where(neg, dz1 * cache.a1, 0.0), axis=0)
    da1 = np.where(neg, w["prelu_alpha"] * dz1, dz1)
    grads["dense1_W"] = h[:, T].T @ da1
    grads["dense1_b"] = da1.sum(axis=0)

    Wh = w["lstm_Wh"]
    dWh = np.zeros_like(Wh)
    dz_all = np.empty((N, T, 4 * H))
    dh = da1 @ w["dense1_W"].T
    dc = np.zeros((N, H))
    for t in range(T - 1, -1, -1):
        act = gates[:, t]
        i, f, gg, o = act[:, :H], act[:, H : 2 * H], act[:, 2 * H : 3 * H], act[:, 3 * H :]
        tc = tanh_c[:, t]
        dc = dc + dh * o * (1.0 - tc * tc)
        dz = dz_all[:, t]
        dz[:, :H] = dc * gg * i * (1.0 - i)
        dz[:, H : 2 * H] = dc * c[:, t] * f * (1.0 - f)
        dz[:, 2 * H : 3 * H] = dc * i * (1.0 - gg * gg)
        dz[:, 3 * H :] = dh * tc * o * (1.0 - o)
        dWh += h[:, t].T @ dz
        dh = dz @ Wh.T
        dc = dc * f
    grads["lstm_Wh"] = dWh
    grads["lstm_Wx"] = np.einsum("ntd,ntg->dg", x, dz_all)
    grads["lstm_b"] = dz_all.sum(axis=(0, 1))
    return grads


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(np.sum(g * g) for g in grads.values())))


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return {k: v * scale for k, v in grads.items()}


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    lr: float = ADAM_LR
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def for_weights(cls, w: ModelWeights, **kw) -> "AdamState":
        return cls(m=w.zeros_like(), v=w.zeros_like(), **kw)

    def copy(self) -> "AdamState":
        return AdamState(
            {k: a.copy() for k, a in self.m.items()},
            {k: a.copy() for k, a in self.v.items()},
            self.step,
            self.lr,
            self.beta1,
            self.beta2,
            self.eps,
        )


def adam_step(w: ModelWeights, grads: dict[str, np.ndarray], state: AdamState) -> None:
    """In-place bias-corrected Adam update of ``w`` and ``state``."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for {name} at optimizer step {state.step + 1}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        w.params[name] -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
