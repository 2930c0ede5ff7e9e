"""Gauss-Hermite rules and bivariate-normal expectations.

Rules use the physicists' kernel exp(-z**2). A tensor-product rule is mapped
onto N(mu, Sigma) through the lower Cholesky factor of Sigma and the sqrt(2)
rescaling, so that

    E[f(eta, xi)] ~= sum_jk (w_j w_k / pi) f(mu + sqrt(2) L (z_j, z_k)).
"""

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy import linalg, special

from .errors import DecompositionError, QuadratureError

__all__ = [
    "QuadratureRule",
    "BivariateNormalSpec",
    "gauss_hermite_rule",
    "tensor_nodes",
    "bivariate_expectation_log",
    "bivariate_expectation",
]

MAX_NODES = 100


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def size(self):
        return len(self.nodes)

    @cached_property
    def grid(self):
        """Flattened tensor nodes (z1, z2) and normalized log-weights."""
        z1, z2 = np.meshgrid(self.nodes, self.nodes, indexing="ij")
        log_w = np.log(self.weights)
        log_w = (log_w[:, None] + log_w[None, :]).ravel() - math.log(math.pi)
        return z1.ravel(), z2.ravel(), log_w


@dataclass(frozen=True, eq=False)
class BivariateNormalSpec:
    mu: tuple
    sigma: np.ndarray

    @classmethod
    def from_params(cls, eta_bar, xi_bar, var_eta, var_xi, rho):
        cov = rho * math.sqrt(var_eta * var_xi)
        return cls((eta_bar, xi_bar), np.array([[var_eta, cov], [cov, var_xi]], dtype=float))

    def cholesky(self):
        s = np.asarray(self.sigma, dtype=float)
        if s.shape != (2, 2) or not np.allclose(s, s.T, rtol=0, atol=1e-12 * np.abs(s).max()):
            raise DecompositionError("sigma must be a symmetric 2x2 matrix")
        a, c, d = s[0, 0], s[1, 0], s[1, 1]
        if not (np.isfinite(s).all() and a > 0):
            raise DecompositionError("sigma is not positive definite")
        l11 = math.sqrt(a)
        l21 = c / l11
        schur = d - l21 * l21
        if not schur > 0:
            raise DecompositionError("sigma is not positive definite")
        return np.array([[l11, 0.0], [l21, math.sqrt(schur)]])


def _orthonormal_hermite(x, m):
    """Values of the orthonormal Hermite polynomials p_0..p_{m-1} at x."""
    p = np.empty((m, len(x)))
    p[0] = math.pi ** -0.25
    if m > 1:
        p[1] = math.sqrt(2.0) * x * p[0]
    for k in range(1, m - 1):
        p[k + 1] = math.sqrt(2.0 / (k + 1)) * x * p[k] - math.sqrt(k / (k + 1)) * p[k - 1]
    return p


@lru_cache(maxsize=None)
def _rule(m):
    if m == 1:
        return np.array([0.0]), np.array([math.sqrt(math.pi)])
    # Golub-Welsch: eigenvalues of the Jacobi matrix of the Hermite recurrence
    off = np.sqrt(np.arange(1, m) / 2.0)
    x = linalg.eigh_tridiagonal(np.zeros(m), off, eigvals_only=True)
    # polish roots with Newton steps on the orthonormal recurrence, where
    # p_m' = sqrt(2m) p_{m-1}
    for _ in range(3):
        p = _orthonormal_hermite(x, m + 1)
        x = x - p[m] / (math.sqrt(2.0 * m) * p[m - 1])
    x = 0.5 * (x - x[::-1])  # exact symmetry
    # Christoffel numbers: w_j = 1 / sum_k p_k(x_j)^2, accurate in relative terms
    p = _orthonormal_hermite(x, m)
    w = 1.0 / np.sum(p * p, axis=0)
    w = 0.5 * (w + w[::-1])
    return x, w


def gauss_hermite_rule(m):
    """m-node Gauss-Hermite rule for the weight exp(-z**2), 1 <= m <= 100."""
    if isinstance(m, bool) or int(m) != m or not 1 <= m <= MAX_NODES:
        raise QuadratureError(f"number of nodes must be an integer in [1, {MAX_NODES}], got {m!r}")
    return _cached_rule(int(m))


@lru_cache(maxsize=None)
def _cached_rule(m):
    x, w = (a.copy() for a in _rule(m))
    x.flags.writeable = False
    w.flags.writeable = False
    return QuadratureRule(x, w)


def tensor_nodes(spec, rule):
    """Mapped tensor nodes and log-weights.

    Returns ``(eta, xi, log_w)``, each of length m**2; ``exp(log_w)`` sums to 1.
    """
    L = spec.cholesky()
    z1, z2, log_w = rule.grid
    eta = spec.mu[0] + math.sqrt(2.0) * L[0, 0] * z1
    xi = spec.mu[1] + math.sqrt(2.0) * (L[1, 0] * z1 + L[1, 1] * z2)
    return eta, xi, log_w


def bivariate_expectation_log(log_f, spec, rule):
    """log E[f(eta, xi)] under N(mu, Sigma), combined by log-sum-exp.

    ``log_f(eta, xi)`` receives flat node arrays and may return an array with
    extra leading axes (for instance one row per study); the reduction is over
    the last axis. Entries equal to -inf contribute nothing.
    """
    eta, xi, log_w = tensor_nodes(spec, rule)
    vals = np.asarray(log_f(eta, xi), dtype=float)
    vals = np.where(np.isnan(vals), -np.inf, vals) if np.isnan(vals).any() else vals
    out = special.logsumexp(vals + log_w, axis=-1)
    return out[()] if np.ndim(out) == 0 else out


def bivariate_expectation(f, spec, rule):
    """Signed variant of :func:`bivariate_expectation_log` for general integrands."""
    eta, xi, log_w = tensor_nodes(spec, rule)
    return float(np.sum(np.exp(log_w) * f(eta, xi)))
