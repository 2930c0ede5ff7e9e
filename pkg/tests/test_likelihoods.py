import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diagmeta.data import CorrectionPolicy, MetaDataset, StudyRecord, transform_estimates
from diagmeta.errors import ValidationError
from diagmeta.likelihoods import (
    AccuracyParams,
    ModelKind,
    approx_inputs,
    approx_terms,
    from_unconstrained,
    loglik_approx,
    loglik_mtm_accuracy,
    loglik_mtm_fixed,
    loglik_mtm_full,
    loglik_mtm_prevalence,
    mtm_accuracy_terms,
    per_study_loglik,
    to_unconstrained,
)
from diagmeta.links import Link, link_inverse
from diagmeta.quadrature import gauss_hermite_rule

from helpers import random_theta, random_toy_counts
from oracles import binomial_logpmf, bivariate_normal_logpdf, mtm_study_integral

LINKS = list(Link)
RULE21 = gauss_hermite_rule(21)
RULE100 = gauss_hermite_rule(100)


def dataset_from(counts):
    return MetaDataset(tuple(
        StudyRecord(f"s{i}", *map(int, row)) for i, row in enumerate(counts)
    ))


def theta_from(arr):
    return AccuracyParams(*map(float, arr))


class TestParams:
    @pytest.mark.parametrize("bad", [(0, 0, 0.0, 1, 0), (0, 0, 1, -1, 0), (0, 0, 1, 1, 1.0)])
    def test_invalid(self, bad):
        with pytest.raises(ValidationError):
            AccuracyParams(*bad)

    @given(st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(-3, 3), st.floats(-3, 3), st.floats(-5, 5)))
    def test_unconstrained_bijection(self, u):
        theta = from_unconstrained(u)
        np.testing.assert_allclose(to_unconstrained(theta), u, rtol=1e-9, atol=1e-9)

    def test_model_kind(self):
        assert ModelKind.parse("MTM-fixed") is ModelKind.MTM_FIXED


class TestApprox:
    def test_standard_density_at_mean(self):
        inputs = (np.array([0.3]), np.array([-0.1]), np.array([1.0]), np.array([1.0]))
        val = approx_terms(np.array([0.3, -0.1, 1e-12, 1e-12, 0.0]), inputs)[0]
        assert val == pytest.approx(-math.log(2 * math.pi), abs=1e-10)

    def test_explicit_formula_oracle(self, toy):
        theta = AccuracyParams(0.4, 0.9, 0.7, 0.5, -0.3)
        for link in LINKS:
            expected = 0.0
            for s in list(toy)[:2]:
                e, x, ve, vx = transform_estimates(s, link, CorrectionPolicy.HALF_CELL)
                c = theta.rho * math.sqrt(theta.var_eta * theta.var_xi)
                cov = [[theta.var_eta + ve, c], [c, theta.var_xi + vx]]
                expected += bivariate_normal_logpdf((e, x), (theta.eta_bar, theta.xi_bar), cov)
            got = loglik_approx(theta, toy.subset([0, 1]), link)
            assert got == pytest.approx(expected, abs=1e-12)

    def test_permutation(self, delirium):
        theta = AccuracyParams(1.3, 3.2, 1.0, 1.0, -0.3)
        perm = delirium.subset(np.random.default_rng(1).permutation(len(delirium)))
        assert loglik_approx(theta, perm) == pytest.approx(loglik_approx(theta, delirium), abs=1e-10)

    def test_block_diagonal_reduction(self, delirium):
        eta, xi, ve, vx = approx_inputs(delirium, Link.LOGIT)
        m1, m2 = 1.2, 3.0
        got = np.sum(approx_terms(np.array([m1, m2, 0.0, 0.0, 0.0]), (eta, xi, ve, vx)))

        def norm_logpdf(x, m, v):
            return -0.5 * np.log(2 * np.pi * v) - 0.5 * (x - m) ** 2 / v

        expected = np.sum(norm_logpdf(eta, m1, ve) + norm_logpdf(xi, m2, vx))
        assert got == pytest.approx(expected, abs=1e-10)


class TestMtmAccuracy:
    def test_degenerate_limit(self, toy):
        theta = AccuracyParams(0.5, 1.0, 1e-12, 1e-12, 0.2)
        for link in LINKS:
            s, c = link_inverse(link, 0.5), link_inverse(link, 1.0)
            expected = sum(
                st.tp * math.log(s) + st.fn * math.log(1 - s) + st.fp * math.log(1 - c) + st.tn * math.log(c)
                for st in toy
            )
            assert loglik_mtm_accuracy(theta, toy, link) == pytest.approx(expected, abs=1e-4)

    def test_spec_example_against_simpson(self, toy):
        theta = AccuracyParams(0.5, 1.0, 0.3, 0.3, 0.2)
        expected = sum(
            mtm_study_integral(row, (0.5, 1.0), 0.3, 0.3, 0.2, "logit") for row in toy.counts()
        )
        assert loglik_mtm_accuracy(theta, toy, Link.LOGIT, RULE21) == pytest.approx(expected, abs=1e-6)

    @pytest.mark.parametrize("link", LINKS)
    def test_implementation_against_simpson(self, link):
        # a large rule isolates implementation errors from quadrature error
        rng = np.random.default_rng(7 + LINKS.index(link))
        counts = random_toy_counts(rng, 2)
        theta = random_theta(rng)
        got = mtm_accuracy_terms(theta, counts, link, RULE100)
        expected = [mtm_study_integral(row, theta[:2], *theta[2:], link.value) for row in counts]
        np.testing.assert_allclose(got, expected, atol=1e-8)

    def test_zero_cells_handled(self):
        counts = np.array([[5.0, 0.0, 0.0, 7.0]])
        val = mtm_accuracy_terms(np.array([2.0, 2.0, 0.5, 0.5, 0.0]), counts, Link.PROBIT, RULE21)
        assert np.isfinite(val).all() and val[0] < 0

    def test_extreme_counts_are_finite_or_minus_inf(self):
        counts = np.array([[5000.0, 0.0, 0.0, 5000.0]])
        val = mtm_accuracy_terms(np.array([-6.0, -6.0, 0.01, 0.01, 0.0]), counts, Link.CLOGLOG, RULE21)
        assert not np.isnan(val).any()

    def test_permutation(self, toy):
        theta = AccuracyParams(0.5, 1.0, 0.3, 0.6, -0.4)
        perm = toy.subset([2, 0, 1])
        assert loglik_mtm_accuracy(theta, perm) == pytest.approx(loglik_mtm_accuracy(theta, toy), abs=1e-12)

    def test_quadrature_equivalence_small_variance(self, toy):
        # m vs 2m - 1 nodes, |rho| <= 0.8, variances where the kernel is smooth
        theta = AccuracyParams(0.5, 1.0, 0.2, 0.2, 0.8)
        a = loglik_mtm_accuracy(theta, toy, Link.LOGIT, RULE21)
        b = loglik_mtm_accuracy(theta, toy, Link.LOGIT, gauss_hermite_rule(41))
        assert abs(a - b) < 1e-6


class TestPrevalenceAndSeparability:
    def test_single_study(self):
        d = MetaDataset((StudyRecord("a", 1, 1, 0, 0), StudyRecord("b", 1, 1, 0, 0)))
        assert loglik_mtm_prevalence([0.5, 0.5], d) == pytest.approx(2 * math.log(0.25), abs=1e-14)

    def test_invalid_prevalence(self, toy):
        with pytest.raises(ValidationError):
            loglik_mtm_prevalence([0.5, 1.0, 0.2], toy)
        with pytest.raises(ValidationError):
            loglik_mtm_prevalence([0.5, 0.5], toy)

    @pytest.mark.parametrize("seed", range(10))
    def test_separability(self, seed):
        rng = np.random.default_rng(seed)
        counts = random_toy_counts(rng, int(rng.integers(2, 6)), max_cell=30)
        d = dataset_from(counts)
        theta = theta_from(random_theta(rng))
        pi = rng.uniform(0.05, 0.95, len(d))
        link = LINKS[seed % 3]
        full = loglik_mtm_full(theta, pi, d, link)
        parts = loglik_mtm_prevalence(pi, d) + loglik_mtm_accuracy(theta, d, link)
        assert abs(full - parts) <= 1e-12 * max(1.0, abs(full))


class TestFixed:
    @given(st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
    def test_tree_partition(self, pi, se, sp):
        one = np.eye(4)
        d = np.exp([loglik_mtm_fixed(se, sp, [pi], one[i:i + 1]) for i in range(4)])
        assert d.sum() == pytest.approx(1.0, abs=1e-14)

    def test_single_study_mle_by_grid(self):
        s = StudyRecord("a", 7, 3, 2, 11)
        d = [[s.tp, s.fp, s.fn, s.tn]]
        grid = np.linspace(0.01, 0.99, 99)
        vals = np.array([[loglik_mtm_fixed(a, b, [s.positives / s.total], d) for b in grid] for a in grid])
        i, j = np.unravel_index(np.argmax(vals), vals.shape)
        assert abs(grid[i] - 7 / 9) <= 0.01 and abs(grid[j] - 11 / 14) <= 0.01
        pis = np.array([loglik_mtm_fixed(7 / 9, 11 / 14, [p], d) for p in grid])
        assert abs(grid[np.argmax(pis)] - 9 / 23) <= 0.01

    def test_invalid(self, toy):
        with pytest.raises(ValidationError):
            loglik_mtm_fixed(1.0, 0.5, [0.5] * 3, toy)


class TestPerStudy:
    @pytest.mark.parametrize("kind", list(ModelKind))
    def test_sum_and_additivity(self, kind, toy):
        theta = (0.6, 0.7) if kind is ModelKind.MTM_FIXED else AccuracyParams(0.5, 1.0, 0.3, 0.6, -0.4)
        parts = [per_study_loglik(kind, theta, s, Link.PROBIT) for s in toy]
        if kind is ModelKind.APPROX:
            total = loglik_approx(theta, toy, Link.PROBIT)
            dropped = loglik_approx(theta, toy.subset([0, 2]), Link.PROBIT)
        elif kind is ModelKind.MTM:
            total = loglik_mtm_accuracy(theta, toy, Link.PROBIT)
            dropped = loglik_mtm_accuracy(theta, toy.subset([0, 2]), Link.PROBIT)
        else:
            pis = [s.positives / s.total for s in toy]
            total = loglik_mtm_fixed(*theta, pis, toy)
            dropped = loglik_mtm_fixed(*theta, pis[::2], toy.subset([0, 2]))
        assert math.fsum(parts) == pytest.approx(total, abs=1e-12)
        assert total - dropped == pytest.approx(parts[1], abs=1e-12)

    def test_degenerate_matches_binomial(self, toy):
        theta = AccuracyParams(0.5, 1.0, 1e-12, 1e-12, 0.0)
        s, c = link_inverse(Link.LOGIT, 0.5), link_inverse(Link.LOGIT, 1.0)
        for st_ in toy:
            got = per_study_loglik(ModelKind.MTM, theta, st_)
            full = binomial_logpmf(st_.tp, st_.positives, s) + binomial_logpmf(st_.tn, st_.negatives, c)
            const = math.log(math.comb(st_.positives, st_.tp)) + math.log(math.comb(st_.negatives, st_.tn))
            assert got == pytest.approx(full - const, abs=1e-4)


class TestGradients:
    @pytest.mark.parametrize("kind", [ModelKind.APPROX, ModelKind.MTM])
    @pytest.mark.parametrize("link", LINKS)
    def test_half_step(self, kind, link, delirium):
        rng = np.random.default_rng(3)
        inputs = approx_inputs(delirium, link)
        counts = delirium.counts()

        def f(u):
            p = from_unconstrained(u).as_array()
            if kind is ModelKind.APPROX:
                return float(np.sum(approx_terms(p, inputs)))
            return float(np.sum(mtm_accuracy_terms(p, counts, link, RULE21)))

        for _ in range(3):
            u = np.array([rng.uniform(0, 2), rng.uniform(1, 3), rng.uniform(-1, 0.5),
                          rng.uniform(-1, 0.5), rng.uniform(-1, 1)])
            grads = []
            for h in (1e-5, 5e-6):
                e = np.eye(5) * h
                grads.append(np.array([(f(u + e[k]) - f(u - e[k])) / (2 * h) for k in range(5)]))
            assert np.isfinite(grads[0]).all()
            np.testing.assert_allclose(grads[0], grads[1], rtol=1e-3, atol=1e-3 * np.abs(grads[1]).max())
