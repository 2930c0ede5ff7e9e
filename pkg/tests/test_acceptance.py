"""Acceptance criteria, one test and one printed PASS/FAIL line each.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines are also
collected in the "acceptance criteria" section of the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from diagmeta.data import MetaDataset, StudyRecord, estimate_prevalences, load_delirium
from diagmeta.inference import fit_model, pooled_accuracy
from diagmeta.likelihoods import (
    AccuracyParams,
    approx_inputs,
    approx_terms,
    from_unconstrained,
    loglik_mtm_accuracy,
    loglik_mtm_full,
    loglik_mtm_prevalence,
    mtm_accuracy_terms,
)
from diagmeta.links import Link, link_apply, link_inverse, normal_cdf, normal_quantile
from diagmeta.optim import Status, bfgs, nelder_mead, numeric_hessian
from diagmeta.quadrature import gauss_hermite_rule
from diagmeta.simulate import Scenario, generate_meta, run_scenario, summaries_to_csv

from helpers import random_theta, random_toy_counts
from oracles import gamma_moment, mtm_study_integral

LINKS = list(Link)


def _fmt(values):
    return "(" + ", ".join(f"{v:.3f}" for v in values) + ")"


class TestApplication:
    TARGETS = {
        "mtm": ((1.44, 3.67, 1.17, 1.45, -0.10), (0.81, 0.98)),
        "approx": ((1.38, 3.25, 1.06, 1.06, -0.21), (0.80, 0.96)),
    }

    def test_delirium_reproduction(self, delirium, criterion):
        ok = True
        details = []
        for model, (theta, pooled) in self.TARGETS.items():
            t0 = time.perf_counter()
            fit = fit_model(delirium, model, "logit", gh_nodes=21)
            elapsed = time.perf_counter() - t0
            se, _, sp, _ = pooled_accuracy(fit)
            good = (
                fit.converged
                and np.all(np.abs(fit.estimates - theta) <= 0.05)
                and abs(se - pooled[0]) <= 0.01
                and abs(sp - pooled[1]) <= 0.01
                and elapsed < 10
            )
            ok &= bool(good)
            details.append(f"{model}: theta={_fmt(fit.estimates)} target={_fmt(theta)} "
                           f"pooled=({se:.3f}, {sp:.3f}) target={pooled} {elapsed:.1f}s")
        criterion("application reproduction", ok, "; ".join(details))
        assert ok


class TestAicSelection:
    def test_logit_selected(self, delirium_fit, criterion):
        ok = True
        details = []
        for model in ("approx", "mtm"):
            aic = {link: delirium_fit(model, link).aic for link in ("logit", "probit", "cloglog")}
            ok &= aic["logit"] < aic["probit"] and aic["logit"] < aic["cloglog"]
            details.append(f"{model}: " + ", ".join(f"{k}={v:.2f}" for k, v in aic.items()))
        criterion("AIC link selection", ok, "; ".join(details))
        assert ok


class TestSimulationPattern:
    def test_pi_020_high_accuracy(self, criterion):
        sc = Scenario(n=10, prevalence=0.20, se_true=0.9, sp_true=0.85, rho=0.2, link="logit")
        t0 = time.perf_counter()
        out = run_scenario(sc, 500, methods=("approx", "mtm"), seed=2024)
        elapsed = time.perf_counter() - t0
        a, m = out["approx"], out["mtm"]
        gap = m.coverage["eta_bar"] - a.coverage["eta_bar"]
        gap_se = math.hypot(m.coverage_se["eta_bar"], a.coverage_se["eta_bar"])
        ok = (
            a.bias["eta_bar"] < 0 and abs(a.bias["eta_bar"]) > 0.3
            and abs(m.bias["eta_bar"]) < 0.1
            and gap >= 0.10
            and elapsed < 15 * 60
        )
        criterion(
            "simulation pattern",
            ok,
            f"approx bias={a.bias['eta_bar']:.3f} cov={a.coverage['eta_bar']:.3f} used={a.replicates_used}; "
            f"mtm bias={m.bias['eta_bar']:.3f} cov={m.coverage['eta_bar']:.3f} used={m.replicates_used}; "
            f"coverage gap={gap:.3f} (MC se {gap_se:.3f}, need >= 0.10); "
            f"truth var=({sc.var_eta_true}, {sc.var_xi_true}); {elapsed:.0f}s",
        )
        assert ok


class TestOracleEquivalence:
    def test_adaptive_simpson(self, criterion):
        rule = gauss_hermite_rule(21)
        worst = {}
        for link in LINKS:
            rng = np.random.default_rng([2024, LINKS.index(link)])
            errs = []
            for _ in range(20):
                counts = random_toy_counts(rng, int(rng.integers(1, 4)))
                theta = random_theta(rng)
                got = float(np.sum(mtm_accuracy_terms(theta, counts, link, rule)))
                ref = math.fsum(
                    mtm_study_integral(row, theta[:2], *theta[2:], link.value) for row in counts
                )
                errs.append(abs(got - ref))
            worst[link.value] = (max(errs), sum(e > 1e-6 for e in errs))
        ok = all(w[0] <= 1e-6 for w in worst.values())
        criterion(
            "oracle equivalence (m=21)",
            ok,
            "; ".join(f"{k}: max err {v[0]:.2e}, {v[1]}/20 points above 1e-6" for k, v in worst.items()),
        )
        assert ok


class TestQuadratureExactness:
    def test_monomials(self, criterion):
        r = gauss_hermite_rule(21)
        worst = 0.0
        for k in range(42):
            got = math.fsum(r.weights * r.nodes**k)
            exact = gamma_moment(k)
            scale = exact if exact else math.gamma((k + 1) / 2 + 0.5)
            worst = max(worst, abs(got - exact) / scale)
        ok = worst < 1e-9
        criterion("quadrature monomials (m=21, degree <= 41)", ok, f"max relative error {worst:.2e}")
        assert ok

    def test_node_convergence_at_optimum(self, delirium_fit, delirium, criterion):
        fit = delirium_fit("mtm", "logit")
        theta = from_unconstrained(fit.u)
        l21 = loglik_mtm_accuracy(theta, delirium, Link.LOGIT, gauss_hermite_rule(21))
        l41 = loglik_mtm_accuracy(theta, delirium, Link.LOGIT, gauss_hermite_rule(41))
        ok = abs(l21 - l41) < 1e-4
        criterion("quadrature convergence 21 -> 41 at delirium optimum", ok,
                  f"loglik21={l21:.6f} loglik41={l41:.6f} change={abs(l21 - l41):.3e}")
        assert ok


class TestSeparability:
    def test_random_datasets(self, criterion):
        rng = np.random.default_rng(99)
        worst, exact = 0.0, True
        for i in range(100):
            n = int(rng.integers(2, 8))
            counts = random_toy_counts(rng, n, max_cell=int(rng.integers(5, 60)))
            d = MetaDataset(tuple(StudyRecord(str(j), *map(int, row)) for j, row in enumerate(counts)))
            link = LINKS[i % 3]
            theta = AccuracyParams(*random_theta(rng))
            pi = rng.uniform(0.02, 0.98, n)
            full = loglik_mtm_full(theta, pi, d, link)
            parts = loglik_mtm_prevalence(pi, d) + loglik_mtm_accuracy(theta, d, link)
            worst = max(worst, abs(full - parts) / max(1.0, abs(full)))
            pis = [p for p, _ in estimate_prevalences(d)]
            exact &= all(p == s.positives / s.total for p, s in zip(pis, d))
        ok = worst <= 1e-12 and exact
        criterion("separability on 100 datasets", ok,
                  f"max relative gap {worst:.2e}; prevalence MLE == P/n exactly: {exact}")
        assert ok


class TestModuleInvariants:
    def test_links_optimizer_hessian_determinism(self, criterion):
        t0 = time.perf_counter()
        checks = {}

        grid = np.linspace(0.001, 0.999, 9999)
        checks["link round trip"] = all(
            np.max(np.abs(link_inverse(l, link_apply(l, grid)) - grid)) < 1e-10 for l in LINKS
        )
        checks["link monotone"] = all(
            np.all(np.diff(link_apply(l, grid)) > 0)
            and np.all(np.diff(link_inverse(l, np.linspace(-3, 3, 999))) > 0)
            for l in LINKS
        )
        p = np.linspace(0.001, 0.999, 999)
        from diagmeta.links import link_derivative
        checks["link derivative"] = all(
            np.max(np.abs(link_derivative(l, p) * 2e-7 * np.minimum(p, 1 - p)
                          / (link_apply(l, p + 1e-7 * np.minimum(p, 1 - p))
                             - link_apply(l, p - 1e-7 * np.minimum(p, 1 - p))) - 1)) < 1e-6
            for l in LINKS
        )
        q = np.concatenate([np.logspace(-8, -1, 100), 1 - np.logspace(-8, -1, 100)])
        checks["normal quantile round trip"] = np.max(np.abs(normal_cdf(normal_quantile(q)) - q)) <= 1e-12

        nm_bowl = nelder_mead(lambda x: (x[0] - 1) ** 2 + (x[1] - 2) ** 2, [0, 0])
        checks["NM bowl"] = nm_bowl.status is Status.CONVERGED and np.max(np.abs(nm_bowl.x - [1, 2])) < 1e-6

        def rosen(x):
            return 100 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2

        nm_r = nelder_mead(rosen, [-1.2, 1])
        bf_r = bfgs(rosen, [-1.2, 1])
        checks["NM Rosenbrock"] = np.max(np.abs(nm_r.x - 1)) < 1e-4
        checks["BFGS Rosenbrock"] = np.max(np.abs(bf_r.x - nm_r.x)) < 1e-4
        c = np.array([2.5, -1.5])
        shifted = nelder_mead(lambda x: rosen(x + c), np.array([-1.2, 1]) - c)
        checks["NM translation"] = np.max(np.abs(shifted.x + c - nm_r.x)) < 1e-6
        A = np.array([[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]])
        b = np.array([1.0, -2.0, 0.5])
        bq = bfgs(lambda x: 0.5 * x @ A @ x - b @ x, np.zeros(3), grad=lambda x: A @ x - b)
        checks["BFGS quadratic"] = bq.iterations <= 5 and np.max(np.abs(bq.x - np.linalg.solve(A, b))) < 1e-8

        H = numeric_hessian(lambda x: 0.5 * x @ A @ x, np.array([0.3, -0.2, 1.0]))
        checks["Hessian quadratic"] = np.max(np.abs(H - A) / np.abs(A)) < 1e-5
        inputs = approx_inputs(load_delirium())

        def ll(u):
            return float(np.sum(approx_terms(from_unconstrained(u).as_array(), inputs)))

        u = np.array([1.3, 3.2, -0.01, 0.03, -0.35])
        H1, H2 = numeric_hessian(ll, u, 1e-4), numeric_hessian(ll, u, 5e-5)
        checks["Hessian step halving"] = np.max(np.abs(H1 - H2)) / np.max(np.abs(H1)) < 1e-3

        sc = Scenario(n=5, size_range=(40, 80))
        d1 = generate_meta(sc, np.random.default_rng([7, 0]))
        d2 = generate_meta(sc, np.random.default_rng([7, 0]))
        r1 = summaries_to_csv(run_scenario(sc, 3, methods=("approx",), seed=7).values())
        r2 = summaries_to_csv(run_scenario(sc, 3, methods=("approx",), seed=7).values())
        checks["simulate determinism"] = d1 == d2 and r1 == r2

        elapsed = time.perf_counter() - t0
        ok = all(checks.values()) and elapsed < 120
        failed = [k for k, v in checks.items() if not v]
        criterion("links, optimizers, Hessian, simulate determinism", ok,
                  f"{len(checks) - len(failed)}/{len(checks)} checks passed"
                  + (f" (failed: {', '.join(failed)})" if failed else "") + f"; {elapsed:.1f}s")
        assert ok
