"""Gate + top-D allocation: admit by threshold, then take the D lowest risks."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class Outcome(enum.IntEnum):
    SUCCESS = 0
    GATE_FAILURE = 1
    SELECTION_FAILURE = 2


@dataclass(frozen=True)
class GtbaConfig:
    q_th: float = 0.4
    D: int = 4

    def __post_init__(self):
        if not 0.0 < self.q_th < 1.0:
            raise ValueError(f"q_th must lie in (0, 1), got {self.q_th}")
        if int(self.D) != self.D or self.D < 1:
            raise ValueError(f"D must be a positive integer, got {self.D}")


@dataclass
class GtbaDecision:
    admissible: np.ndarray
    ranked: np.ndarray
    selected: np.ndarray | None
    outcome: Outcome | None = None
    good_selected_count: int | None = None

    @property
    def bulk_outage(self) -> bool:
        if self.outcome is None:
            raise ValueError("decision has not been classified yet")
        return self.outcome != Outcome.SUCCESS


def _check_scores(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.ndim != 1:
        raise ValueError("risk vector must be one-dimensional")
    if not np.all(np.isfinite(q)) or np.any(q < 0.0) or np.any(q > 1.0):
        raise ValueError("risk scores must be finite and lie in [0, 1]")
    return q


def admissible_set(q, q_th: float) -> np.ndarray:
    """Indices with ``q_i <= q_th`` (inclusive), ascending."""
    q = _check_scores(q)
    return np.flatnonzero(q <= q_th)


def nar(q, q_th: float) -> int:
    """Number of resources admitted by the gate."""
    return int(admissible_set(q, q_th).size)


def select_top_d(q, cfg: GtbaConfig) -> GtbaDecision:
    q = _check_scores(q)
    adm = np.flatnonzero(q <= cfg.q_th)
    # stable sort on ascending indices: equal scores keep the lower index first
    ranked = adm[np.argsort(q[adm], kind="stable")]
    if adm.size < cfg.D:
        return GtbaDecision(admissible=adm, ranked=ranked, selected=None, outcome=Outcome.GATE_FAILURE)
    return GtbaDecision(admissible=adm, ranked=ranked, selected=np.sort(ranked[: cfg.D]))


def classify_outcome(decision: GtbaDecision, g, cfg: GtbaConfig, q=None) -> GtbaDecision:
    """Fill in the outcome of a decision given the true reliability labels.

    Pass ``q`` to have its length checked against ``g``.
    """
    g = np.asarray(g)
    if q is not None and len(q) != len(g):
        raise ValueError(f"score vector has length {len(q)} but label vector has length {len(g)}")
    if decision.outcome == Outcome.GATE_FAILURE:
        return decision
    if decision.selected is None:
        raise ValueError("decision carries no selected set")
    if decision.selected.size and decision.selected.max() >= g.size:
        raise ValueError("selected index out of range for label vector")
    good = int(g[decision.selected].sum())
    decision.good_selected_count = good
    decision.outcome = Outcome.SUCCESS if good >= cfg.D else Outcome.SELECTION_FAILURE
    return decision


def allocate(q, g, cfg: GtbaConfig) -> GtbaDecision:
    return classify_outcome(select_top_d(q, cfg), g, cfg, q=q)


@dataclass
class BatchOutcomes:
    """Per-realization GTBA results for a stack of score vectors."""

    outcome: np.ndarray  # (n,) Outcome codes
    nar: np.ndarray  # (n,)
    good_selected: np.ndarray  # (n,), -1 on gate failure
    oracle_outage: np.ndarray = field(default=None)  # (n,) bool


def gtba_batch(q: np.ndarray, g: np.ndarray, cfg: GtbaConfig) -> BatchOutcomes:
    """Vectorised GTBA over ``n`` realizations; agrees with :func:`allocate` row by row."""
    q = np.asarray(q, dtype=float)
    g = np.asarray(g)
    if q.shape != g.shape or q.ndim != 2:
        raise ValueError(f"scores {q.shape} and labels {g.shape} must be matching (n, R) arrays")
    n, R = q.shape
    if cfg.D > R:
        raise ValueError(f"D={cfg.D} exceeds pool size R={R}")
    admitted = q <= cfg.q_th
    counts = admitted.sum(axis=1)
    # Admissible resources form the lowest-score prefix of a stable ascending
    # sort, so the top-D admissible are the first D of the full ordering.
    order = np.argsort(q, axis=1, kind="stable")[:, : cfg.D]
    good_sel = np.take_along_axis(g, order, axis=1).sum(axis=1)
    gate_fail = counts < cfg.D
    outcome = np.where(
        gate_fail,
        Outcome.GATE_FAILURE,
        np.where(good_sel >= cfg.D, Outcome.SUCCESS, Outcome.SELECTION_FAILURE),
    ).astype(np.int8)
    good_sel = np.where(gate_fail, -1, good_sel)
    oracle = g.sum(axis=1) < cfg.D
    return BatchOutcomes(outcome=outcome, nar=counts, good_selected=good_sel, oracle_outage=oracle)
