"""Log-likelihoods for the approximate bivariate model and the MTM family.

Binomial coefficients are dropped everywhere: they do not depend on the
parameters, so log-likelihood values are only comparable within this package.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .data import CorrectionPolicy, empirical_accuracy, transform_estimates
from .errors import DecompositionError, ValidationError
from .links import Link, link_derivative, log_inverse_pair
from .quadrature import BivariateNormalSpec, gauss_hermite_rule, tensor_nodes

__all__ = [
    "ModelKind",
    "AccuracyParams",
    "U_MAX",
    "to_unconstrained",
    "from_unconstrained",
    "approx_inputs",
    "approx_terms",
    "mtm_accuracy_terms",
    "loglik_approx",
    "loglik_mtm_accuracy",
    "loglik_mtm_prevalence",
    "loglik_mtm_full",
    "loglik_mtm_fixed",
    "per_study_loglik",
    "approx_log_jacobian",
]

U_MAX = 6.0
_LOG_FLOOR = -1e300  # stands in for -inf so that 0 * log(0) stays 0
_LOG_2PI = math.log(2.0 * math.pi)


class ModelKind(str, enum.Enum):
    APPROX = "approx"
    MTM = "mtm"
    MTM_FIXED = "mtm-fixed"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValidationError(
                f"unknown model {value!r}; expected approx, mtm or mtm-fixed"
            ) from None


@dataclass(frozen=True)
class AccuracyParams:
    """Between-study mean, variances and correlation on the link scale."""

    eta_bar: float
    xi_bar: float
    var_eta: float
    var_xi: float
    rho: float

    def __post_init__(self):
        if not (self.var_eta > 0 and self.var_xi > 0):
            raise ValidationError("between-study variances must be positive")
        if not -1.0 < self.rho < 1.0:
            raise ValidationError("correlation must lie in (-1, 1)")

    def as_array(self):
        return np.array([self.eta_bar, self.xi_bar, self.var_eta, self.var_xi, self.rho])

    def between_study(self):
        return BivariateNormalSpec.from_params(*self.as_array())


def to_unconstrained(theta):
    """(eta, xi, log sigma_eta, log sigma_xi, atanh rho)."""
    return np.array([
        theta.eta_bar,
        theta.xi_bar,
        0.5 * math.log(theta.var_eta),
        0.5 * math.log(theta.var_xi),
        math.atanh(theta.rho),
    ])


def from_unconstrained(u):
    u = np.asarray(u, dtype=float)
    return AccuracyParams(
        float(u[0]), float(u[1]), math.exp(2 * u[2]), math.exp(2 * u[3]), math.tanh(u[4])
    )


# ---------------------------------------------------------------------------
# approximate normal-normal model


def approx_inputs(dataset, link=Link.LOGIT, correction=CorrectionPolicy.HALF_CELL):
    """Arrays (eta_hat, xi_hat, var_eta, var_xi), one entry per study."""
    rows = [transform_estimates(s, link, correction) for s in dataset]
    return tuple(np.array(col) for col in zip(*rows))


def approx_terms(params, inputs):
    """Per-study bivariate normal log-densities of the link-scale estimates.

    ``params`` is a 5-vector on the natural scale.
    """
    eta_hat, xi_hat, v_eta, v_xi = inputs
    m1, m2, s11, s22, rho = params
    cov = rho * math.sqrt(s11 * s22)
    a = s11 + v_eta
    d = s22 + v_xi
    det = a * d - cov * cov
    if np.any(det <= 0):
        raise DecompositionError("Gamma_i + Sigma is not positive definite")
    e1 = eta_hat - m1
    e2 = xi_hat - m2
    quad = (d * e1 * e1 - 2.0 * cov * e1 * e2 + a * e2 * e2) / det
    return -_LOG_2PI - 0.5 * np.log(det) - 0.5 * quad


def loglik_approx(theta, dataset, link=Link.LOGIT, correction=CorrectionPolicy.HALF_CELL):
    return float(np.sum(approx_terms(theta.as_array(), approx_inputs(dataset, link, correction))))


def approx_log_jacobian(dataset, link=Link.LOGIT, correction=CorrectionPolicy.HALF_CELL):
    """sum_i log|g'(se_i)| + log|g'(sp_i)| for the corrected empirical rates.

    Adding this to the approximate log-likelihood expresses it as a density of
    the observed proportions, which makes values comparable across links.
    """
    total = 0.0
    for s in dataset:
        se, sp = empirical_accuracy(s, correction)
        total += math.log(link_derivative(link, se)) + math.log(link_derivative(link, sp))
    return total


# ---------------------------------------------------------------------------
# multinomial processing tree likelihoods


def _counts(dataset):
    if hasattr(dataset, "counts"):
        return dataset.counts()
    return np.atleast_2d(np.asarray(dataset, dtype=float))


def _node_logs(link, eta, xi):
    """Rows aligned with count columns (tp, fp, fn, tn)."""
    log_s, log_1ms = log_inverse_pair(link, eta)
    log_c, log_1mc = log_inverse_pair(link, xi)
    return np.maximum(np.vstack([log_s, log_1mc, log_1ms, log_c]), _LOG_FLOOR)


def _finish(vals):
    return np.where(vals < -1e290, -np.inf, vals)


def mtm_accuracy_terms(params, counts, link, rule, prevalence=None):
    """Per-study log of the integrated binomial kernel.

    ``params`` is a 5-vector on the natural scale and ``counts`` an (n, 4)
    array of (tp, fp, fn, tn). When ``prevalence`` is given the factor
    pi^P (1 - pi)^N is folded into the integrand.
    """
    spec = BivariateNormalSpec.from_params(*params)
    eta, xi, log_w = tensor_nodes(spec, rule)
    kernel = counts @ _node_logs(link, eta, xi) + log_w
    if prevalence is not None:
        pos = counts[:, 0] + counts[:, 2]
        neg = counts[:, 1] + counts[:, 3]
        kernel = kernel + (special.xlogy(pos, prevalence) + special.xlog1py(neg, -prevalence))[:, None]
    return _finish(special.logsumexp(kernel, axis=1))


def loglik_mtm_accuracy(theta, dataset, link=Link.LOGIT, rule=None):
    rule = rule or gauss_hermite_rule(21)
    return float(np.sum(mtm_accuracy_terms(theta.as_array(), _counts(dataset), Link.parse(link), rule)))


def _prevalence_terms(pi, counts):
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (len(counts),):
        raise ValidationError("one prevalence per study is required")
    if not np.all((pi > 0) & (pi < 1)):
        raise ValidationError("prevalences must lie in (0, 1)")
    pos = counts[:, 0] + counts[:, 2]
    neg = counts[:, 1] + counts[:, 3]
    return special.xlogy(pos, pi) + special.xlog1py(neg, -pi)


def loglik_mtm_prevalence(pi, dataset):
    return float(np.sum(_prevalence_terms(pi, _counts(dataset))))


def loglik_mtm_full(theta, pi, dataset, link=Link.LOGIT, rule=None):
    """Full hierarchical MTM log-likelihood with the prevalence factor
    evaluated inside the integrand."""
    rule = rule or gauss_hermite_rule(21)
    counts = _counts(dataset)
    _prevalence_terms(pi, counts)  # validation
    terms = mtm_accuracy_terms(theta.as_array(), counts, Link.parse(link), rule, np.asarray(pi, float))
    return float(np.sum(terms))


def fixed_terms(se, sp, pi, counts):
    """Per-study fixed-effects MTM log-likelihood."""
    tp, fp, fn, tn = counts.T
    pi = np.asarray(pi, dtype=float)
    return (
        special.xlogy(tp, pi * se)
        + special.xlogy(fn, pi * (1.0 - se))
        + special.xlogy(fp, (1.0 - pi) * (1.0 - sp))
        + special.xlogy(tn, (1.0 - pi) * sp)
    )


def loglik_mtm_fixed(se, sp, pi, dataset):
    if not (0 < se < 1 and 0 < sp < 1):
        raise ValidationError("sensitivity and specificity must lie in (0, 1)")
    counts = _counts(dataset)
    _prevalence_terms(pi, counts)
    return float(np.sum(fixed_terms(se, sp, pi, counts)))


def per_study_loglik(kind, theta, study, link=Link.LOGIT, rule=None,
                     correction=CorrectionPolicy.HALF_CELL):
    """The summand of the model's total log-likelihood for one study.

    For ``mtm-fixed``, ``theta`` is the pair (se, sp) and the study's
    prevalence is profiled at P/n.
    """
    kind = ModelKind.parse(kind)
    link = Link.parse(link)
    counts = np.array([[study.tp, study.fp, study.fn, study.tn]], dtype=float)
    if kind is ModelKind.APPROX:
        inputs = tuple(np.array([v]) for v in transform_estimates(study, link, correction))
        return float(approx_terms(theta.as_array(), inputs)[0])
    if kind is ModelKind.MTM:
        rule = rule or gauss_hermite_rule(21)
        return float(mtm_accuracy_terms(theta.as_array(), counts, link, rule)[0])
    se, sp = theta
    return float(fixed_terms(se, sp, [study.positives / study.total], counts)[0])
