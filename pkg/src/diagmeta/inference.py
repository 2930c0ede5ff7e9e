"""Model fitting, failure classification and derived inference.

Random-effects models are optimized over the unconstrained vector
``u = (eta_bar, xi_bar, log sigma_eta, log sigma_xi, atanh rho)``; the
fixed-effects MTM over ``(g(se), g(sp))``. Covariances are computed in
``u`` and mapped to the natural scale with the analytic Jacobian.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .data import CorrectionPolicy, estimate_prevalences
from .errors import DecompositionError, DomainError, OptimizationError, RegionError
from .likelihoods import (
    U_MAX,
    AccuracyParams,
    ModelKind,
    approx_inputs,
    approx_log_jacobian,
    approx_terms,
    fixed_terms,
    from_unconstrained,
    loglik_mtm_prevalence,
    mtm_accuracy_terms,
    to_unconstrained,
)
from .links import Link, inverse_derivative, link_apply, link_inverse, normal_quantile
from .optim import OptResult, Status, bfgs, nelder_mead, numeric_hessian, numeric_jacobian
from .quadrature import gauss_hermite_rule

__all__ = [
    "FailureKind",
    "FailureReason",
    "FitOptions",
    "FitResult",
    "fit_model",
    "sandwich_covariance",
    "model_covariance",
    "wald_ci",
    "pooled_accuracy",
    "sroc_curve",
    "confidence_ellipse",
    "confidence_region",
    "chi2_2_quantile",
    "RANDOM_NAMES",
    "FIXED_NAMES",
]

RANDOM_NAMES = ("eta_bar", "xi_bar", "var_eta", "var_xi", "rho")
FIXED_NAMES = ("eta_bar", "xi_bar")
LOG_SIGMA_BOUNDS = (-12.0, 6.0)
_CHI2_2_95 = 5.991464547


class FailureKind(str, enum.Enum):
    NON_CONVERGENCE = "non-convergence"
    BOUNDARY_CORRELATION = "boundary-correlation"
    NON_PD_COVARIANCE = "non-pd-covariance"


@dataclass(frozen=True)
class FailureReason:
    kind: FailureKind
    detail: str = ""


@dataclass(frozen=True)
class FitOptions:
    """Tuning knobs for :func:`fit_model`.

    With ``multistart`` the jittered restarts always run and the best
    interior optimum wins; otherwise they are tried only after the base
    start fails.
    """

    gh_nodes: int = 21
    correction: CorrectionPolicy = CorrectionPolicy.HALF_CELL
    seed: int = 0
    restarts: int = 5
    jitter: float = 0.5
    multistart: bool = True
    rho_threshold: float = 0.999
    sigma_threshold: float = 1e-5
    start: AccuracyParams = None
    compute_covariance: bool = True

    def __post_init__(self):
        object.__setattr__(self, "correction", CorrectionPolicy.parse(self.correction))


@dataclass
class FitResult:
    model: ModelKind
    link: Link
    names: tuple
    estimates: np.ndarray
    u: np.ndarray
    cov_model: np.ndarray
    cov_sandwich: np.ndarray
    loglik: float
    loglik_link_scale: float
    aic: float
    n_params: int
    n_studies: int
    prevalences: list = None
    failure: FailureReason = None
    opt: OptResult = None
    options: FitOptions = field(default_factory=FitOptions)

    @property
    def converged(self):
        return self.failure is None

    @property
    def theta(self):
        """AccuracyParams for random-effects fits, otherwise None."""
        if self.model is ModelKind.MTM_FIXED:
            return None
        return from_unconstrained(self.u)

    @property
    def headline(self):
        return "model" if self.model is ModelKind.APPROX else "sandwich"

    @property
    def cov(self):
        return self.cov_model if self.headline == "model" else self.cov_sandwich

    @property
    def se(self):
        return _se(self.cov, len(self.estimates))

    def as_dict(self):
        return dict(zip(self.names, (float(v) for v in self.estimates)))


def _se(cov, k):
    if cov is None:
        return np.full(k, np.nan)
    d = np.diag(cov)
    return np.sqrt(np.where(d >= 0, d, np.nan))


# ---------------------------------------------------------------------------
# problem setup


@dataclass
class _Problem:
    kind: ModelKind
    link: Link
    terms: object  # u -> per-study log-likelihood contributions
    u0: np.ndarray
    names: tuple

    def objective(self, u):
        u = np.asarray(u, dtype=float)
        if not _inside(self.kind, u):
            return np.inf
        try:
            v = -float(np.sum(self.terms(u)))
        except (DecompositionError, DomainError, ArithmeticError, ValueError):
            return np.inf
        return v if np.isfinite(v) else np.inf

    def natural(self, u):
        if self.kind is ModelKind.MTM_FIXED:
            return np.array(u, dtype=float)
        return from_unconstrained(u).as_array()

    def jacobian(self, u):
        """d(natural)/du, diagonal."""
        if self.kind is ModelKind.MTM_FIXED:
            return np.eye(2)
        return np.diag([1.0, 1.0, 2 * math.exp(2 * u[2]), 2 * math.exp(2 * u[3]),
                        1.0 - math.tanh(u[4]) ** 2])


def _inside(kind, u):
    if not np.all(np.isfinite(u)):
        return False
    if kind is ModelKind.MTM_FIXED:
        return True
    lo, hi = LOG_SIGMA_BOUNDS
    return abs(u[4]) <= U_MAX and lo <= u[2] <= hi and lo <= u[3] <= hi


def _pooled_start(dataset, link, correction):
    cells = np.array([s.cells(correction) for s in dataset]).sum(axis=0)
    if np.any(cells == 0):
        cells = cells + 0.5
    tp, fp, fn, tn = cells
    return float(link_apply(link, tp / (tp + fn))), float(link_apply(link, tn / (tn + fp)))


def _problem(dataset, kind, link, opts):
    eta0, xi0 = _pooled_start(dataset, link, opts.correction)
    if kind is ModelKind.MTM_FIXED:
        counts = dataset.counts()
        pi = (counts[:, 0] + counts[:, 2]) / counts.sum(axis=1)

        def terms(u):
            se = link_inverse(link, u[0])
            sp = link_inverse(link, u[1])
            return fixed_terms(se, sp, pi, counts)

        return _Problem(kind, link, terms, np.array([eta0, xi0]), FIXED_NAMES)

    if opts.start is not None:
        u0 = to_unconstrained(opts.start)
    else:
        u0 = np.array([eta0, xi0, math.log(0.5), math.log(0.5), 0.0])
    if kind is ModelKind.APPROX:
        inputs = approx_inputs(dataset, link, opts.correction)

        def terms(u):
            return approx_terms(from_unconstrained(u).as_array(), inputs)
    else:
        counts = dataset.counts()
        rule = gauss_hermite_rule(opts.gh_nodes)

        def terms(u):
            return mtm_accuracy_terms(from_unconstrained(u).as_array(), counts, link, rule)

    return _Problem(kind, link, terms, u0, RANDOM_NAMES)


# ---------------------------------------------------------------------------
# optimization


def _run_start(problem, x0):
    f = problem.objective
    if not np.isfinite(f(x0)):
        return None
    try:
        res = nelder_mead(f, x0)
    except OptimizationError:
        return None
    if not res.converged:
        try:
            alt = bfgs(f, res.x)
        except OptimizationError:
            alt = None
        if alt is not None and alt.converged and alt.fun <= res.fun + 1e-8:
            alt.evals += res.evals
            res = alt
    return res


def _interior(kind, u):
    return kind is ModelKind.MTM_FIXED or abs(u[4]) < U_MAX - 0.01


def _better(a, b):
    """Order candidates: converged interior first, then converged, then value."""
    def key(r):
        return (not r.converged, not r.interior, r.fun)
    return key(a) < key(b)


def _optimize(problem, opts, extra_starts=()):
    rng = np.random.default_rng(opts.seed)
    jitters = [rng.uniform(-opts.jitter, opts.jitter, len(problem.u0)) for _ in range(opts.restarts)]
    starts = [problem.u0, *extra_starts] + [problem.u0 + j for j in jitters]
    n_base = 1 + len(extra_starts)

    best = None
    evals = 0
    for i, x0 in enumerate(starts):
        if i >= n_base and not opts.multistart and best is not None and best.converged and best.interior:
            break
        res = _run_start(problem, np.asarray(x0, dtype=float))
        if res is None:
            continue
        evals += res.evals
        res.interior = _interior(problem.kind, res.x)
        res.restarts = max(0, i - n_base + 1)
        if best is None or _better(res, best):
            best = res
    if best is None:
        return None
    best.evals = evals
    if best.converged and not best.interior:
        best.status = Status.BOUNDARY
    return best


# ---------------------------------------------------------------------------
# covariances


def _inverse_pd(A):
    if not np.all(np.isfinite(A)):
        raise DecompositionError("information matrix has non-finite entries")
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise DecompositionError("information matrix is not positive definite") from None
    Linv = np.linalg.inv(L)
    inv = Linv.T @ Linv
    return 0.5 * (inv + inv.T)


def _covariances(problem, u):
    A = numeric_hessian(problem.objective, u)
    A_inv = _inverse_pd(A)
    scores = numeric_jacobian(problem.terms, u)
    B = scores.T @ scores
    J = problem.jacobian(u)
    model = J @ A_inv @ J.T
    sandwich = J @ (A_inv @ B @ A_inv) @ J.T
    return 0.5 * (model + model.T), 0.5 * (sandwich + sandwich.T)


def _options_for(opts, **changes):
    kw = dict(opts.__dict__)
    kw.update(changes)
    return FitOptions(**kw)


def model_covariance(fit, dataset):
    """Inverse observed information, mapped to the natural scale."""
    problem = _problem(dataset, fit.model, fit.link, fit.options)
    return _covariances(problem, fit.u)[0]


def sandwich_covariance(fit, dataset, link=None, rule=None):
    """A^-1 B A^-1 from per-study numeric scores, on the natural scale.

    ``A`` is the observed information of the total log-likelihood and ``B``
    the sum of outer products of the per-study scores, both at ``fit.u``.
    Raises DecompositionError when ``A`` is not positive definite.
    """
    opts = fit.options
    if rule is not None:
        opts = _options_for(opts, gh_nodes=rule.size)
    problem = _problem(dataset, fit.model, Link.parse(link or fit.link), opts)
    return _covariances(problem, fit.u)[1]


# ---------------------------------------------------------------------------
# fitting


def _classify(kind, res, estimates, opts):
    if not res.converged and res.status is not Status.BOUNDARY:
        return FailureReason(FailureKind.NON_CONVERGENCE, f"optimizer stopped with status {res.status.value}")
    if kind is ModelKind.MTM_FIXED:
        return None
    # a vanishing variance leaves rho unidentified, so it is checked first
    sig = np.sqrt(estimates[2:4])
    if np.any(sig < opts.sigma_threshold):
        res.status = Status.DEGENERATE
        return FailureReason(
            FailureKind.NON_PD_COVARIANCE,
            f"between-study standard deviation below {opts.sigma_threshold:g}",
        )
    rho = estimates[4]
    if res.status is Status.BOUNDARY or abs(rho) > opts.rho_threshold:
        return FailureReason(FailureKind.BOUNDARY_CORRELATION, f"rho estimate {rho:.6f} on the boundary")
    return None


def fit_model(dataset, model=ModelKind.MTM, link=Link.LOGIT, options=None, **overrides):
    """Maximum-likelihood fit of one model to a meta-analytic dataset.

    Keyword ``overrides`` replace fields of ``options`` (for example
    ``gh_nodes=41`` or ``seed=3``). A failed fit still returns a FitResult,
    with ``failure`` set.
    """
    kind = ModelKind.parse(model)
    link = Link.parse(link)
    opts = options or FitOptions()
    if overrides:
        opts = _options_for(opts, **overrides)
    gauss_hermite_rule(opts.gh_nodes)  # validates the node count early

    problem = _problem(dataset, kind, link, opts)
    extra = ()
    if kind is ModelKind.MTM and opts.multistart and opts.start is None:
        guide = fit_model(dataset, ModelKind.APPROX, link, opts, compute_covariance=False)
        if guide.converged:
            extra = (guide.u,)

    res = _optimize(problem, opts, extra)
    n = len(dataset)
    k = {ModelKind.APPROX: 5, ModelKind.MTM: 5 + n, ModelKind.MTM_FIXED: 2 + n}[kind]
    if res is None:
        u = problem.u0
        res = OptResult(u, np.inf, Status.MAX_ITER, 0, 0)
    u = res.x
    estimates = problem.natural(u)
    ll_link = -res.fun

    if kind is ModelKind.APPROX:
        loglik = ll_link + approx_log_jacobian(dataset, link, opts.correction)
        prevalences = None
    else:
        counts = dataset.counts()
        pi_hat = (counts[:, 0] + counts[:, 2]) / counts.sum(axis=1)
        prev_part = 0.0 if kind is ModelKind.MTM_FIXED else loglik_mtm_prevalence(pi_hat, counts)
        loglik = ll_link + prev_part
        prevalences = estimate_prevalences(dataset)

    failure = _classify(kind, res, estimates, opts)
    cov_m = cov_s = None
    if opts.compute_covariance and np.isfinite(res.fun):
        try:
            cov_m, cov_s = _covariances(problem, u)
        except DecompositionError as exc:
            if failure is None:
                failure = FailureReason(FailureKind.NON_PD_COVARIANCE, str(exc))
        if failure is None and np.any(np.diag(cov_s) < 0):
            failure = FailureReason(FailureKind.NON_PD_COVARIANCE, "negative sandwich variance")

    return FitResult(
        model=kind,
        link=link,
        names=problem.names,
        estimates=estimates,
        u=np.asarray(u, dtype=float),
        cov_model=cov_m,
        cov_sandwich=cov_s,
        loglik=float(loglik),
        loglik_link_scale=float(ll_link),
        aic=float(-2.0 * loglik + 2.0 * k),
        n_params=k,
        n_studies=n,
        prevalences=prevalences,
        failure=failure,
        opt=res,
        options=opts,
    )


# ---------------------------------------------------------------------------
# derived quantities


def wald_ci(estimate, se, level=0.95):
    """Symmetric normal-theory interval estimate +/- z_{(1+level)/2} se."""
    if not 0.0 < level < 1.0:
        raise DomainError("level must lie in (0, 1)")
    if not se > 0:
        raise DomainError("standard error must be positive")
    z = float(normal_quantile((1.0 + level) / 2.0))
    return estimate - z * se, estimate + z * se


def pooled_accuracy(fit):
    """Pooled (se, se_se, sp, se_sp) on the probability scale by the delta method."""
    eta, xi = fit.estimates[0], fit.estimates[1]
    s_eta, s_xi = fit.se[0], fit.se[1]
    se = float(link_inverse(fit.link, eta))
    sp = float(link_inverse(fit.link, xi))
    return (
        se,
        float(s_eta * inverse_derivative(fit.link, eta)),
        sp,
        float(s_xi * inverse_derivative(fit.link, xi)),
    )


def _random_params(fit):
    if fit.model is ModelKind.MTM_FIXED:
        raise RegionError("the fixed-effects model has no between-study curve")
    return fit.estimates


def sroc_curve(fit, grid):
    """(fpr, sensitivity) points of the regression of eta on xi.

    Points are returned in increasing order of the false-positive rate.
    """
    eta_bar, xi_bar, v_eta, v_xi, rho = _random_params(fit)
    if not v_xi > 0:
        raise RegionError("sigma_xi^2 is zero; the curve is undefined")
    c = np.sort(np.asarray(grid, dtype=float))[::-1]
    xi = link_apply(fit.link, c)
    eta = eta_bar + rho * math.sqrt(v_eta / v_xi) * (xi - xi_bar)
    return np.column_stack([1.0 - c, link_inverse(fit.link, eta)])


def chi2_2_quantile(level):
    if not 0.0 <= level < 1.0:
        raise DomainError("level must lie in [0, 1)")
    if level == 0.95:
        return _CHI2_2_95
    return -2.0 * math.log1p(-level)


def confidence_ellipse(fit, level=0.95, points=100):
    """Closed polyline of the (eta_bar, xi_bar) confidence ellipse on the link scale."""
    if points < 3:
        raise RegionError("at least three points are needed")
    cov = fit.cov
    if cov is None:
        raise RegionError("fit has no covariance matrix")
    S = np.asarray(cov, dtype=float)[:2, :2]
    a, b, d = S[0, 0], S[1, 0], S[1, 1]
    if not (np.all(np.isfinite(S)) and a > 0 and a * d - b * b > 0):
        raise RegionError("covariance of (eta_bar, xi_bar) is not positive definite")
    l11 = math.sqrt(a)
    L = np.array([[l11, 0.0], [b / l11, math.sqrt(d - b * b / a)]])
    radius = math.sqrt(chi2_2_quantile(level))
    t = np.linspace(0.0, 2.0 * math.pi, points, endpoint=False)
    circle = np.vstack([np.cos(t), np.sin(t)])
    pts = (np.asarray(fit.estimates[:2])[:, None] + radius * (L @ circle)).T
    return np.vstack([pts, pts[:1]])


def confidence_region(fit, level=0.95, points=100):
    """Confidence ellipse mapped to (1 - specificity, sensitivity)."""
    pts = confidence_ellipse(fit, level, points)
    sens = link_inverse(fit.link, pts[:, 0])
    spec = link_inverse(fit.link, pts[:, 1])
    return np.column_stack([1.0 - spec, sens])
