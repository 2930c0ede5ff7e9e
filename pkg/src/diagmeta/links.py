"""Link functions mapping probabilities in (0, 1) to the real line.

All functions accept scalars or numpy arrays and return the same shape.
"""

import enum
import math

import numpy as np
from scipy import special

from .errors import DomainError

__all__ = [
    "Link",
    "link_apply",
    "link_inverse",
    "link_derivative",
    "inverse_derivative",
    "log_inverse_pair",
    "normal_cdf",
    "normal_pdf",
    "normal_quantile",
    "CLAMP_EPS",
]

CLAMP_EPS = 1e-15
_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class Link(str, enum.Enum):
    LOGIT = "logit"
    PROBIT = "probit"
    CLOGLOG = "cloglog"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise DomainError(f"unknown link {value!r}; expected one of {choices}") from None

    def __call__(self, p):
        return link_apply(self, p)

    def inverse(self, x):
        return link_inverse(self, x)


# ---------------------------------------------------------------------------
# standard normal primitives

# Acklam's rational approximation, relative error ~1.2e-9 before refinement.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_cdf(x):
    """Standard normal CDF, 0.5 * erfc(-x / sqrt(2))."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * special.erfc(-x / _SQRT2)
    return out[()] if out.ndim == 0 else out


def normal_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x - _LOG_SQRT_2PI)
    return out[()] if out.ndim == 0 else out


def _poly(coef, t):
    acc = np.zeros_like(t) + coef[0]
    for c in coef[1:]:
        acc = acc * t + c
    return acc


def normal_quantile(p):
    """Inverse of the standard normal CDF.

    Rational approximation followed by one Newton step on ``normal_cdf``.
    Raises DomainError unless every ``p`` is strictly inside (0, 1).
    """
    p = np.asarray(p, dtype=float)
    if not np.all((p > 0.0) & (p < 1.0)):
        raise DomainError("normal_quantile requires 0 < p < 1")
    x = np.empty_like(p)

    low = p < _P_LOW
    high = p > 1.0 - _P_LOW
    mid = ~(low | high)

    if np.any(low):
        q = np.sqrt(-2.0 * np.log(p[low]))
        x[low] = _poly(_C, q) / (_poly(_D + (1.0,), q))
    if np.any(high):
        q = np.sqrt(-2.0 * np.log1p(-p[high]))
        x[high] = -_poly(_C, q) / (_poly(_D + (1.0,), q))
    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        x[mid] = _poly(_A, r) * q / _poly(_B + (1.0,), r)

    # Newton refinement; the upper tail is refined through the symmetric
    # lower-tail residual to avoid cancellation near 1.
    upper = x > 0
    resid = np.where(upper, (1.0 - p) - normal_cdf(-x), normal_cdf(x) - p)
    x = x - resid / normal_pdf(x)
    return x[()] if x.ndim == 0 else x


# ---------------------------------------------------------------------------
# links


def _check_open_unit(p):
    p = np.asarray(p, dtype=float)
    if not np.all((p > 0.0) & (p < 1.0)):
        raise DomainError("link argument must lie strictly inside (0, 1)")
    return p


def _check_finite(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("inverse link requires finite arguments")
    return x


def _scalar(out):
    return out[()] if out.ndim == 0 else out


def link_apply(link, p):
    """g(p) for the given link."""
    link = Link.parse(link)
    p = _check_open_unit(p)
    if link is Link.LOGIT:
        out = np.log(p) - np.log1p(-p)
    elif link is Link.PROBIT:
        out = np.asarray(normal_quantile(p))
    else:
        out = np.log(-np.log1p(-p))
    return _scalar(out)


def link_inverse(link, x):
    """g^{-1}(x), clamped to [CLAMP_EPS, 1 - CLAMP_EPS]."""
    link = Link.parse(link)
    x = _check_finite(x)
    if link is Link.LOGIT:
        out = special.expit(x)
    elif link is Link.PROBIT:
        out = np.asarray(normal_cdf(x))
    else:
        out = -np.expm1(-np.exp(x))
    return _scalar(np.clip(out, CLAMP_EPS, 1.0 - CLAMP_EPS))


def link_derivative(link, p):
    """dg/dp evaluated at p."""
    link = Link.parse(link)
    p = _check_open_unit(p)
    if link is Link.LOGIT:
        out = 1.0 / (p * (1.0 - p))
    elif link is Link.PROBIT:
        out = 1.0 / np.asarray(normal_pdf(normal_quantile(p)))
    else:
        out = -1.0 / ((1.0 - p) * np.log1p(-p))
    return _scalar(out)


def inverse_derivative(link, x):
    """d g^{-1}/dx evaluated at x (unclamped)."""
    link = Link.parse(link)
    x = _check_finite(x)
    if link is Link.LOGIT:
        s = special.expit(x)
        out = s * (1.0 - s)
    elif link is Link.PROBIT:
        out = np.asarray(normal_pdf(x))
    else:
        out = np.exp(x - np.exp(x))
    return _scalar(out)


def log_inverse_pair(link, x):
    """Return (log g^{-1}(x), log(1 - g^{-1}(x))) without clamping.

    Used by the exact likelihoods, where clamping would bias tail nodes.
    Values may be -inf where the probability underflows; never NaN for
    finite input.
    """
    link = Link.parse(link)
    x = np.asarray(x, dtype=float)
    if link is Link.LOGIT:
        return -np.logaddexp(0.0, -x), -np.logaddexp(0.0, x)
    if link is Link.PROBIT:
        return special.log_ndtr(x), special.log_ndtr(-x)
    with np.errstate(over="ignore", divide="ignore"):
        ex = np.exp(x)
        log_s = np.log(-np.expm1(-ex))
    return log_s, -ex
