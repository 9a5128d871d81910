"""Set-level ranking-aware bulk outage loss (RBOL) and pointwise baselines.

Every loss acts on one system: a score vector ``q`` of length R and outage
labels ``y``.  Each returns a :class:`LossEval` with the value and the
analytic gradient with respect to ``q``.

RBOL = softplus(D - G) + lambda_rank * omega * softplus(q_max_sel + m - q_min_unsel)
       + lambda_bce * BCE,

with ``G = sum_i sigmoid((q_th - q_i) / tau) * (1 - y_i)`` the soft count of
admitted good resources.  Set membership, omega and the arg-max/arg-min
achievers are held fixed during differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit as sigmoid


def softplus(x):
    """ln(1 + e^x) as max(x, 0) + ln(1 + e^-|x|)."""
    x = np.asarray(x, dtype=float)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return out if out.ndim else float(out)


def default_hyperparams(D: int) -> tuple[float, float]:
    """(tau, lambda_bce) for bulk size D."""
    if D < 1:
        raise ValueError(f"D must be >= 1, got {D}")
    if D <= 2:
        return 0.15, 0.2
    return max(0.08, 0.2 / D), 0.05


@dataclass(frozen=True)
class RbolConfig:
    q_th: float = 0.4
    D: int = 4
    tau: float | None = None
    lambda_rank: float = 8.0
    margin: float = 0.08
    lambda_bce: float | None = None
    eps_clip: float = 1e-7

    def __post_init__(self):
        tau, lam = default_hyperparams(self.D)
        if self.tau is None:
            object.__setattr__(self, "tau", tau)
        if self.lambda_bce is None:
            object.__setattr__(self, "lambda_bce", lam)
        if not self.tau > 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if not self.lambda_rank > 0:
            raise ValueError(f"lambda_rank must be > 0, got {self.lambda_rank}")
        if self.margin < 0 or self.lambda_bce < 0:
            raise ValueError("margin and lambda_bce must be >= 0")
        if not 0 < self.eps_clip < 0.5:
            raise ValueError(f"eps_clip must lie in (0, 0.5), got {self.eps_clip}")


@dataclass
class LossEval:
    total: float
    grad: np.ndarray
    shortfall_term: float = 0.0
    cut_term: float = 0.0
    bce_term: float = 0.0
    diagnostics: dict = field(default_factory=dict)


def soft_acceptance(q, q_th: float, tau: float):
    if not tau > 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    return sigmoid((q_th - np.asarray(q, dtype=float)) / tau)


def soft_good_count(q, y, q_th: float, tau: float) -> float:
    q, y = _pair(q, y)
    return float(np.sum(soft_acceptance(q, q_th, tau) * (1 - y)))


def shortfall_loss(G: float, D: float) -> float:
    return softplus(D - G)


def cutoff_sets(q, q_th: float, D: int):
    """Split resources at the top-D cutoff.

    Returns ``(selected, unselected, q_max_sel, q_min_unsel)``.  The selected
    set is the D lowest risks among admissible resources, or among all
    resources when fewer than D pass the gate.  ``q_min_unsel`` is ``None``
    when every resource is selected.
    """
    q = np.asarray(q, dtype=float)
    if D < 1 or D > q.size:
        raise ValueError(f"D={D} must lie in [1, R={q.size}]")
    adm = np.flatnonzero(q <= q_th)
    pool = adm if adm.size >= D else np.arange(q.size)
    ranked = pool[np.argsort(q[pool], kind="stable")]
    selected = np.sort(ranked[:D])
    unselected = np.setdiff1d(np.arange(q.size), selected)
    q_min = float(q[unselected].min()) if unselected.size else None
    return selected, unselected, float(q[selected].max()), q_min


def cutoff_weight(selected, unselected, g) -> float:
    """(good fraction outside the selection) * (bad fraction inside it)."""
    g = np.asarray(g, dtype=float)
    if len(selected) == 0 or len(unselected) == 0:
        return 0.0
    return float(g[unselected].mean() * (1.0 - g[selected].mean()))


def _argext(q, idx, largest: bool) -> int:
    vals = q[idx]
    target = vals.max() if largest else vals.min()
    return int(idx[np.flatnonzero(vals == target)[0]])


def _cutoff(q, g, cfg: RbolConfig):
    selected, unselected, q_max, q_min = cutoff_sets(q, cfg.q_th, cfg.D)
    grad = np.zeros_like(q)
    diag = {"q_max_sel": q_max, "q_min_unsel": q_min, "omega": 0.0}
    if not unselected.size:
        return 0.0, grad, diag
    omega = cutoff_weight(selected, unselected, g)
    diag["omega"] = omega
    violation = q_max + cfg.margin - q_min
    value = omega * softplus(violation)
    slope = omega * sigmoid(violation)
    grad[_argext(q, selected, largest=True)] += slope
    grad[_argext(q, unselected, largest=False)] -= slope
    return value, grad, diag


def cutoff_loss(q, g, cfg: RbolConfig) -> float:
    q = np.asarray(q, dtype=float)
    return _cutoff(q, np.asarray(g), cfg)[0]


def _bce(q, y, eps_clip):
    qc = np.clip(q, eps_clip, 1.0 - eps_clip)
    value = float(np.mean(-y * np.log(qc) - (1 - y) * np.log1p(-qc)))
    inside = (q > eps_clip) & (q < 1.0 - eps_clip)
    grad = np.where(inside, (-y / qc + (1 - y) / (1.0 - qc)) / q.size, 0.0)
    return value, grad


def bce_loss(q, y, eps_clip: float = 1e-7) -> float:
    q, y = _pair(q, y)
    return _bce(q, y, eps_clip)[0]


def _pair(q, y):
    q = np.asarray(q, dtype=float)
    y = np.asarray(y, dtype=float)
    if q.shape != y.shape or q.ndim != 1:
        raise ValueError(f"scores {q.shape} and labels {y.shape} must be equal-length vectors")
    if not np.all(np.isfinite(q)):
        raise ValueError("scores contain non-finite entries")
    return q, y


def rbol(q, y, cfg: RbolConfig) -> LossEval:
    q, y = _pair(q, y)
    g = 1.0 - y

    p = soft_acceptance(q, cfg.q_th, cfg.tau)
    G = float(np.sum(p * g))
    shortfall = softplus(cfg.D - G)
    # d softplus(D - G)/dq_i = sigmoid(D - G) * g_i * p_i (1 - p_i) / tau
    grad_short = sigmoid(cfg.D - G) * g * p * (1.0 - p) / cfg.tau

    cut, grad_cut, diag = _cutoff(q, g, cfg)
    bce, grad_bce = _bce(q, y, cfg.eps_clip)

    total = shortfall + cfg.lambda_rank * cut + cfg.lambda_bce * bce
    grad = grad_short + cfg.lambda_rank * grad_cut + cfg.lambda_bce * grad_bce
    diag.update(p=p, G=G, shortfall=cfg.D - G)
    return LossEval(
        total=total,
        grad=grad,
        shortfall_term=shortfall,
        cut_term=cut,
        bce_term=bce,
        diagnostics=diag,
    )


def baseline_loss(kind: str, q, y, eps_clip: float = 1e-7) -> LossEval:
    q, y = _pair(q, y)
    R = q.size
    if kind == "MAE":
        return LossEval(total=float(np.mean(np.abs(q - y))), grad=np.sign(q - y) / R)
    if kind == "MSE":
        return LossEval(total=float(np.mean((q - y) ** 2)), grad=2.0 * (q - y) / R)
    if kind == "BCE":
        value, grad = _bce(q, y, eps_clip)
        return LossEval(total=value, grad=grad, bce_term=value)
    raise ValueError(f"unknown baseline loss {kind!r}")


LossFn = Callable[[np.ndarray, np.ndarray, int, float], LossEval]

_REGISTRY: dict[str, LossFn] = {
    "RBOL": lambda q, y, D, q_th: rbol(q, y, RbolConfig(q_th=q_th, D=D)),
    "BCE": lambda q, y, D, q_th: baseline_loss("BCE", q, y),
    "MSE": lambda q, y, D, q_th: baseline_loss("MSE", q, y),
    "MAE": lambda q, y, D, q_th: baseline_loss("MAE", q, y),
}

# Losses whose value depends on D / q_th; others can share one model across D.
SET_LEVEL = {"RBOL"}


def register_loss(name: str, fn: LossFn, set_level: bool = True) -> None:
    """Add a training objective, e.g. an outage-analytic baseline."""
    if name in _REGISTRY:
        raise ValueError(f"loss {name!r} already registered")
    _REGISTRY[name] = fn
    if set_level:
        SET_LEVEL.add(name)


def loss_kinds() -> list[str]:
    return list(_REGISTRY)


def evaluate_loss(kind: str, q, y, D: int, q_th: float = 0.4) -> LossEval:
    try:
        fn = _REGISTRY[kind]
    except KeyError:
        raise ValueError(f"unknown loss {kind!r}; known: {sorted(_REGISTRY)}") from None
    return fn(q, y, D, q_th)
