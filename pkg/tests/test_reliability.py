import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from bulkalloc.channel_sim import derive_stream
from bulkalloc.gtba import GtbaConfig
from bulkalloc.model import init_weights
from bulkalloc.reliability import (
    ReliabilityReport,
    asymptotic_check,
    binomial_obop,
    cheating_scorer,
    decomposition_audit,
    evaluate,
    evaluate_scores,
    monte_carlo_obop,
    oracle_outage,
    score,
)


def enumerate_obop(R, p, D):
    """Exhaustive sum over all 2^R label vectors."""
    total = 0.0
    for bits in itertools.product((0, 1), repeat=R):
        k = sum(bits)
        if k < D:
            total += p**k * (1 - p) ** (R - k)
    return total


def report(gate, sel, bulk, oracle=0):
    return ReliabilityReport(
        n=10, R=16, D=4, q_th=0.4, gate_failures=gate, selection_failures=sel,
        bulk_outages=bulk, oracle_outages=oracle, nar_sum=0,
    )


class TestOracle:
    def test_boundary(self):
        assert not oracle_outage([1, 1, 0, 0], 2)
        assert oracle_outage([1, 0, 0, 0], 2)

    def test_vacuous(self):
        assert not oracle_outage([0, 0, 0], 0)


class TestBinomial:
    def test_edges(self):
        assert binomial_obop(16, 0.3, 0) == 0.0
        assert binomial_obop(1, 0.0, 1) == 1.0
        assert binomial_obop(5, 1.0, 5) == 0.0

    def test_exact_fraction(self):
        assert binomial_obop(16, 0.5, 4) == pytest.approx(697 / 65536, abs=1e-15)

    @pytest.mark.parametrize("p", [0.5, 0.2727, 0.9])
    def test_enumeration(self, p):
        assert abs(binomial_obop(16, p, 4) - enumerate_obop(16, p, 4)) < 1e-12

    @given(st.integers(1, 200), st.floats(0.001, 0.999), st.data())
    @settings(max_examples=200)
    def test_matches_scipy(self, R, p, data):
        D = data.draw(st.integers(0, R))
        assert binomial_obop(R, p, D) == pytest.approx(stats.binom.cdf(D - 1, R, p), rel=1e-9, abs=1e-300)

    def test_invalid(self):
        with pytest.raises(ValueError):
            binomial_obop(16, 1.5, 4)


class TestAsymptotic:
    def test_decreasing_and_small(self):
        table = asymptotic_check(0.3, 4, [8, 16, 32, 64])
        vals = [v for _, v in table]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 1e-6

    def test_all_good(self):
        assert all(v == 0.0 for _, v in asymptotic_check(1.0, 4, [4, 8, 16]))

    def test_monte_carlo_agrees(self):
        within = 0
        for t in range(100):
            p, se = monte_carlo_obop(16, 0.2727, 4, 3000, derive_stream(t, "mc-obop"))
            within += abs(p - binomial_obop(16, 0.2727, 4)) <= 3 * se
        assert within >= 99


class TestEvaluate:
    def test_cheating_scorer_matches_oracle(self, test_set):
        for D in (1, 4, 6, 10, 16):
            rep = evaluate(cheating_scorer, test_set, GtbaConfig(0.4, D))
            np.testing.assert_array_equal(rep.bulk, rep.oracle)
            assert rep.bop == rep.obop

    def test_rejecting_scorer(self, test_set):
        rep = evaluate(lambda t: np.full(t.g.shape, 0.9), test_set, GtbaConfig(0.4, 1))
        assert rep.gfp == rep.bop == 1.0
        assert rep.anar == 0.0

    def test_model_scores(self, test_set):
        w = init_weights(derive_stream(0, "init"))
        q = score(w, test_set)
        assert q.shape == test_set.g.shape and np.all((q > 0) & (q < 1))
        rep = evaluate(w, test_set, GtbaConfig(0.4, 4))
        assert decomposition_audit(rep)
        assert 0 <= rep.anar <= 16

    def test_bad_scorer_shape(self, test_set):
        with pytest.raises(ValueError):
            score(lambda t: np.zeros(3), test_set)

    def test_not_a_model(self, test_set):
        with pytest.raises(TypeError):
            score(42, test_set)

    def test_estimates_and_errors(self):
        gen = np.random.default_rng(0)
        q = gen.uniform(0, 1, (4000, 16))
        g = gen.integers(0, 2, (4000, 16))
        rep = evaluate_scores(q, g, GtbaConfig(0.4, 4))
        assert rep.bop == pytest.approx(rep.gfp + rep.sel_fail_rate)
        assert rep.sel_fail_given_gate_pass == pytest.approx(rep.selection_failures / (4000 - rep.gate_failures))
        assert rep.gfp_se == pytest.approx(np.sqrt(rep.gfp * (1 - rep.gfp) / 4000))
        assert set(rep.summary()) >= {"gfp", "bop", "obop", "anar", "sel_fail_rate"}

    def test_gfp_monotone_in_d(self):
        gen = np.random.default_rng(1)
        q = gen.uniform(0, 1, (2000, 16))
        g = gen.integers(0, 2, (2000, 16))
        gfp = [evaluate_scores(q, g, GtbaConfig(0.4, D)).gfp for D in range(1, 17)]
        assert all(a <= b for a, b in zip(gfp, gfp[1:]))

    def test_anar_monotone_in_threshold(self):
        gen = np.random.default_rng(2)
        q = gen.uniform(0, 1, (2000, 16))
        g = gen.integers(0, 2, (2000, 16))
        anar = [evaluate_scores(q, g, GtbaConfig(t, 4)).anar for t in np.linspace(0.1, 0.9, 9)]
        assert all(a <= b for a, b in zip(anar, anar[1:]))


class TestAudit:
    def test_well_formed(self):
        gen = np.random.default_rng(3)
        rep = evaluate_scores(gen.uniform(0, 1, (500, 16)), gen.integers(0, 2, (500, 16)), GtbaConfig(0.4, 4))
        result = decomposition_audit(rep)
        assert result.passed and result.discrepancy == 0

    def test_hand_built_discrepancy(self):
        result = decomposition_audit(report(gate=2, sel=3, bulk=4))
        assert not result and result.discrepancy == 1

    def test_oracle_exceeding_bulk(self):
        assert not decomposition_audit(report(gate=1, sel=1, bulk=2, oracle=3))

    def test_counts_only(self):
        assert decomposition_audit(report(gate=1, sel=1, bulk=2, oracle=1))

    def test_first_violation_reported(self):
        gen = np.random.default_rng(4)
        rep = evaluate_scores(gen.uniform(0, 1, (50, 16)), gen.integers(0, 2, (50, 16)), GtbaConfig(0.4, 4))
        i = int(np.flatnonzero(~rep.bulk)[0])
        rep.oracle = rep.oracle.copy()
        rep.oracle[i] = True
        result = decomposition_audit(rep)
        assert not result and result.first_violation == i
