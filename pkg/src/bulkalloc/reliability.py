"""Monte Carlo reliability estimates for GTBA and the exact oracle bound.

A :class:`ReliabilityReport` tallies, over ``n`` realizations, gate failures,
selection failures (counted only when the gate passes), bulk outages, oracle
outages and the admitted-set size.  Estimates are plain proportions with
normal-approximation standard errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .channel_sim import RealizationSet
from .gtba import GtbaConfig, Outcome, gtba_batch


def oracle_outage(g, D: int) -> bool:
    """True iff fewer than D resources are physically good."""
    return int(np.sum(g)) < D


def _se(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n) if n else float("nan")


@dataclass
class ReliabilityReport:
    n: int
    R: int
    D: int
    q_th: float
    gate_failures: int
    selection_failures: int
    bulk_outages: int
    oracle_outages: int
    nar_sum: int
    # per-realization detail, kept for audits; not serialized
    outcome: np.ndarray | None = field(default=None, repr=False)
    bulk: np.ndarray | None = field(default=None, repr=False)
    oracle: np.ndarray | None = field(default=None, repr=False)

    def _rate(self, count: int) -> float:
        return count / self.n if self.n else float("nan")

    @property
    def gfp(self) -> float:
        return self._rate(self.gate_failures)

    @property
    def bop(self) -> float:
        return self._rate(self.bulk_outages)

    @property
    def obop(self) -> float:
        return self._rate(self.oracle_outages)

    @property
    def anar(self) -> float:
        return self._rate(self.nar_sum)

    @property
    def sel_fail_rate(self) -> float:
        """Joint probability of passing the gate and failing selection."""
        return self._rate(self.selection_failures)

    @property
    def sel_fail_given_gate_pass(self) -> float:
        passed = self.n - self.gate_failures
        return self.selection_failures / passed if passed else float("nan")

    @property
    def gfp_se(self) -> float:
        return _se(self.gfp, self.n)

    @property
    def bop_se(self) -> float:
        return _se(self.bop, self.n)

    @property
    def obop_se(self) -> float:
        return _se(self.obop, self.n)

    @property
    def sel_fail_se(self) -> float:
        return _se(self.sel_fail_rate, self.n)

    def summary(self) -> dict:
        return {
            "n": self.n,
            "gfp": self.gfp,
            "gfp_se": self.gfp_se,
            "bop": self.bop,
            "bop_se": self.bop_se,
            "obop": self.obop,
            "anar": self.anar,
            "sel_fail_rate": self.sel_fail_rate,
            "sel_fail_given_gate_pass": self.sel_fail_given_gate_pass,
        }


def evaluate_scores(q: np.ndarray, g: np.ndarray, cfg: GtbaConfig) -> ReliabilityReport:
    """Run GTBA on every row of ``q`` against labels ``g`` and tally outcomes."""
    res = gtba_batch(q, g, cfg)
    n, R = np.shape(q)
    # bulk outage from its definition, independent of the outcome codes
    bulk = (res.nar < cfg.D) | (np.where(res.good_selected < 0, 0, res.good_selected) < cfg.D)
    return ReliabilityReport(
        n=n,
        R=R,
        D=cfg.D,
        q_th=cfg.q_th,
        gate_failures=int(np.sum(res.outcome == Outcome.GATE_FAILURE)),
        selection_failures=int(np.sum(res.outcome == Outcome.SELECTION_FAILURE)),
        bulk_outages=int(bulk.sum()),
        oracle_outages=int(res.oracle_outage.sum()),
        nar_sum=int(res.nar.sum()),
        outcome=res.outcome,
        bulk=bulk,
        oracle=res.oracle_outage,
    )


Scorer = Callable[[RealizationSet], np.ndarray]


def score(model, test: RealizationSet) -> np.ndarray:
    """Scores (n, R) from a checkpoint, bare weights, or a scorer callable."""
    from .checkpoint import Checkpoint
    from .model import ModelWeights, predict

    if isinstance(model, Checkpoint):
        R = model.metadata.get("sim", {}).get("R")
        if R is not None and R != test.past.shape[1]:
            raise ValueError(f"checkpoint was trained with R={R}, test set has R={test.past.shape[1]}")
        model = model.weights
    if isinstance(model, ModelWeights):
        return predict(model, test.features())
    if callable(model):
        q = np.asarray(model(test), dtype=float)
        if q.shape != test.g.shape:
            raise ValueError(f"scorer returned shape {q.shape}, expected {test.g.shape}")
        return q
    raise TypeError(f"cannot score with {type(model).__name__}")


def evaluate(model, test: RealizationSet, cfg: GtbaConfig) -> ReliabilityReport:
    return evaluate_scores(score(model, test), test.g, cfg)


def cheating_scorer(test: RealizationSet) -> np.ndarray:
    """Scores equal to the true outage labels."""
    return test.y.astype(float)


def binomial_obop(R: int, p_g: float, D: int) -> float:
    """Pr(Binomial(R, p_g) < D), summed in log space with compensated addition."""
    if not 0.0 <= p_g <= 1.0:
        raise ValueError(f"p_g must lie in [0, 1], got {p_g}")
    if R < 0 or D < 0:
        raise ValueError("R and D must be non-negative")
    if D <= 0:
        return 0.0
    if D > R:
        return 1.0
    if p_g == 0.0:
        return 1.0
    if p_g == 1.0:
        return 0.0
    log_p, log_q = math.log(p_g), math.log1p(-p_g)
    log_norm = math.lgamma(R + 1)
    terms = [
        math.exp(log_norm - math.lgamma(j + 1) - math.lgamma(R - j + 1) + j * log_p + (R - j) * log_q)
        for j in range(D)
    ]
    return min(1.0, math.fsum(terms))


def asymptotic_check(p_g: float, D: int, R_values) -> list[tuple[int, float]]:
    """Oracle outage probability for each pool size at fixed D."""
    if not p_g > 0:
        raise ValueError("p_g must be > 0")
    return [(int(R), binomial_obop(int(R), p_g, D)) for R in R_values]


def monte_carlo_obop(R: int, p_g: float, D: int, n: int, stream: np.random.Generator) -> tuple[float, float]:
    """Empirical oracle outage rate and its standard error under iid Bernoulli labels."""
    g = stream.random((n, R)) < p_g
    p = float(np.mean(g.sum(axis=1) < D))
    return p, _se(p, n)


@dataclass
class AuditResult:
    passed: bool
    discrepancy: int = 0
    first_violation: int | None = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.passed


def decomposition_audit(report: ReliabilityReport) -> AuditResult:
    """Check bulk = gate + (gate pass and selection fail) and oracle => bulk."""
    discrepancy = report.gate_failures + report.selection_failures - report.bulk_outages
    if discrepancy:
        return AuditResult(
            False,
            discrepancy,
            detail=(
                f"bulk outages {report.bulk_outages} != gate failures {report.gate_failures}"
                f" + selection failures {report.selection_failures}"
            ),
        )
    if report.oracle_outages > report.bulk_outages:
        return AuditResult(
            False,
            detail=f"oracle outages {report.oracle_outages} exceed bulk outages {report.bulk_outages}",
        )
    if report.outcome is None:
        return AuditResult(True, detail="count identities hold (no per-sample data)")

    code_bulk = report.outcome != Outcome.SUCCESS
    bad = np.flatnonzero((code_bulk != report.bulk) | (report.oracle & ~report.bulk))
    if bad.size:
        i = int(bad[0])
        return AuditResult(
            False,
            first_violation=i,
            detail=f"realization {i}: outcome {Outcome(report.outcome[i]).name}, "
            f"bulk {bool(report.bulk[i])}, oracle {bool(report.oracle[i])}",
        )
    recount = (
        int(np.sum(report.outcome == Outcome.GATE_FAILURE)),
        int(np.sum(report.outcome == Outcome.SELECTION_FAILURE)),
        int(report.bulk.sum()),
        int(report.oracle.sum()),
    )
    if recount != (report.gate_failures, report.selection_failures, report.bulk_outages, report.oracle_outages):
        return AuditResult(False, detail=f"per-sample recount {recount} disagrees with report counts")
    return AuditResult(True, detail=f"{report.n} realizations audited")
