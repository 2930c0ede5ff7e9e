"""Monte-Carlo comparison of the approximate and MTM estimators.

Each replicate draws its own generator from ``SeedSequence([seed, rep])``,
so serial and parallel runs produce identical summaries.
"""

import csv
import io
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import MetaDataset, StudyRecord
from .errors import ConfigError, DataError, GenerationError
from .inference import RANDOM_NAMES, FitOptions, fit_model, wald_ci
from .likelihoods import ModelKind
from .links import Link, link_apply, link_inverse

__all__ = [
    "Scenario",
    "SimulationSummary",
    "binomial_inversion",
    "generate_study",
    "generate_meta",
    "run_scenario",
    "paper_grid",
    "load_config",
    "summaries_to_csv",
    "CSV_COLUMNS",
    "CSV_SCHEMA_VERSION",
]

MAX_REDRAWS = 100
HIGH_ACCURACY = (0.9, 0.85)
LOW_ACCURACY = (0.80, 0.92)


@dataclass(frozen=True)
class Scenario:
    n: int = 10
    prevalence: float = 0.20
    se_true: float = 0.9
    sp_true: float = 0.85
    rho: float = 0.2
    var_eta_true: float = 1.5
    var_xi_true: float = 0.5
    link: Link = Link.LOGIT
    size_range: tuple = (50, 200)

    def __post_init__(self):
        object.__setattr__(self, "link", Link.parse(self.link))
        object.__setattr__(self, "size_range", tuple(int(v) for v in self.size_range))
        lo, hi = self.size_range
        if int(self.n) != self.n or self.n < 2:
            raise ConfigError("a scenario needs at least two studies")
        if not 1 <= lo <= hi:
            raise ConfigError("size_range must be an interval of positive integers")
        if not 0 < self.prevalence < 1:
            raise ConfigError("prevalence must lie in (0, 1)")
        if not (0 < self.se_true < 1 and 0 < self.sp_true < 1):
            raise ConfigError("true sensitivity and specificity must lie in (0, 1)")
        if self.var_eta_true < 0 or self.var_xi_true < 0:
            raise ConfigError("true variances must be nonnegative")
        if not -1 < self.rho < 1:
            raise ConfigError("rho must lie in (-1, 1)")

    @property
    def truth(self):
        """True (eta_bar, xi_bar, var_eta, var_xi, rho)."""
        return np.array([
            float(link_apply(self.link, self.se_true)),
            float(link_apply(self.link, self.sp_true)),
            self.var_eta_true,
            self.var_xi_true,
            self.rho,
        ])

    def chol(self):
        """Lower factor of the between-study covariance; valid for zero variances."""
        s1, s2 = math.sqrt(self.var_eta_true), math.sqrt(self.var_xi_true)
        return np.array([[s1, 0.0], [self.rho * s2, s2 * math.sqrt(1.0 - self.rho**2)]])

    def to_dict(self):
        d = asdict(self)
        d["link"] = self.link.value
        d["size_range"] = list(self.size_range)
        return d


@dataclass
class SimulationSummary:
    scenario: Scenario
    method: ModelKind
    requested: int
    replicates_used: int
    failures: int
    generation_failures: int
    bias: dict = field(default_factory=dict)
    sd: dict = field(default_factory=dict)
    avg_se: dict = field(default_factory=dict)
    coverage: dict = field(default_factory=dict)
    coverage_se: dict = field(default_factory=dict)

    @property
    def failure_rate(self):
        return self.failures / self.requested


# ---------------------------------------------------------------------------
# data generation


def binomial_inversion(n, p, rng):
    """Binomial(n, p) draw by sequential inversion of the CDF.

    For p > 1/2 the draw is taken as n minus a Binomial(n, 1 - p) draw,
    which keeps (1 - p)^n away from underflow.
    """
    n = int(n)
    if n < 0 or not 0.0 <= p <= 1.0:
        raise ValueError("binomial_inversion needs n >= 0 and p in [0, 1]")
    if p > 0.5:
        return n - binomial_inversion(n, 1.0 - p, rng)
    u = rng.random()
    if p == 0.0 or n == 0:
        return 0
    q = 1.0 - p
    ratio = p / q
    pk = q**n
    cdf = pk
    k = 0
    while u > cdf and k < n:
        pk *= ratio * (n - k) / (k + 1)
        cdf += pk
        k += 1
    return k


def generate_study(scenario, draw, rng, study_id="1"):
    """One simulated 2x2 table given the study's (eta_i, xi_i)."""
    lo, hi = scenario.size_range
    for _ in range(MAX_REDRAWS):
        size = int(rng.integers(lo, hi + 1))
        pos = binomial_inversion(size, scenario.prevalence, rng)
        neg = size - pos
        if pos > 0 and neg > 0:
            break
    else:
        raise GenerationError(f"no study with both margins nonempty after {MAX_REDRAWS} draws")
    se = float(link_inverse(scenario.link, draw[0]))
    sp = float(link_inverse(scenario.link, draw[1]))
    tp = binomial_inversion(pos, se, rng)
    tn = binomial_inversion(neg, sp, rng)
    return StudyRecord(str(study_id), tp, neg - tn, pos - tp, tn)


def generate_meta(scenario, rng):
    """Two-stage draw: study effects from the bivariate normal, then tables."""
    mu = scenario.truth[:2]
    z = rng.standard_normal((scenario.n, 2))
    draws = mu + z @ scenario.chol().T
    return MetaDataset(tuple(
        generate_study(scenario, draws[i], rng, study_id=str(i + 1)) for i in range(scenario.n)
    ))


# ---------------------------------------------------------------------------
# replicates


def _replicate(args):
    scenario, methods, seed, rep, options = args
    rng = np.random.default_rng(np.random.SeedSequence([seed, rep]))
    try:
        data = generate_meta(scenario, rng)
    except GenerationError:
        return None
    fit_seed = int(rng.integers(2**31))
    out = {}
    for method in methods:
        try:
            fit = fit_model(data, method, scenario.link, options, seed=fit_seed)
        except DataError:
            out[method] = None
            continue
        if not fit.converged:
            out[method] = None
            continue
        se = fit.se
        hits = []
        for j in range(2):
            lo, hi = wald_ci(fit.estimates[j], se[j]) if se[j] > 0 else (np.nan, np.nan)
            hits.append(bool(lo <= scenario.truth[j] <= hi))
        out[method] = (fit.estimates.copy(), se.copy(), hits)
    return out


def _workers(replicates):
    env = os.environ.get("DIAGMETA_THREADS")
    limit = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(limit, replicates))


def _mean(values):
    return math.fsum(values) / len(values) if values else math.nan


def _sd(values):
    if len(values) < 2:
        return math.nan
    m = _mean(values)
    return math.sqrt(math.fsum((v - m) ** 2 for v in values) / (len(values) - 1))


def _summarize(scenario, method, results):
    requested = len(results)
    gen_fail = sum(r is None for r in results)
    rows = [r[method] for r in results if r is not None and r[method] is not None]
    used = len(rows)
    s = SimulationSummary(scenario, method, requested, used, requested - used, gen_fail)
    truth = scenario.truth
    for j, name in enumerate(RANDOM_NAMES):
        est = [float(r[0][j]) for r in rows]
        ses = [float(r[1][j]) for r in rows]
        s.bias[name] = _mean(est) - float(truth[j]) if rows else math.nan
        s.sd[name] = _sd(est)
        s.avg_se[name] = _mean(ses)
    for j, name in enumerate(RANDOM_NAMES[:2]):
        p = _mean([1.0 if r[2][j] else 0.0 for r in rows])
        s.coverage[name] = p
        s.coverage_se[name] = math.sqrt(p * (1.0 - p) / used) if used else math.nan
    return s


def run_scenario(scenario, replicates, methods=(ModelKind.APPROX, ModelKind.MTM), seed=0,
                 options=None, workers=None):
    """Simulate ``replicates`` datasets and fit every method to each.

    Returns ``{method: SimulationSummary}``. Only converged fits enter the
    aggregates; failures and generation failures are counted.
    """
    if int(replicates) != replicates or replicates < 1:
        raise ConfigError("replicates must be a positive integer")
    methods = tuple(ModelKind.parse(m) for m in methods)
    if ModelKind.MTM_FIXED in methods:
        raise ConfigError("simulation compares the random-effects methods only")
    options = options or FitOptions(multistart=False)
    jobs = [(scenario, methods, int(seed), rep, options) for rep in range(int(replicates))]
    workers = workers or _workers(len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_replicate(job) for job in jobs]
    return {m: _summarize(scenario, m, results) for m in methods}


# ---------------------------------------------------------------------------
# grids, configuration and output


def paper_grid(var_eta_true=1.5, var_xi_true=0.5):
    """Full factorial grid of the standard factor levels: 72 scenarios."""
    grid = []
    for n, prev, rho, link, (se, sp) in itertools.product(
        (10, 25), (0.20, 0.35), (0.2, 0.6, 0.8), tuple(Link), (HIGH_ACCURACY, LOW_ACCURACY)
    ):
        grid.append(Scenario(n, prev, se, sp, rho, var_eta_true, var_xi_true, link))
    return grid


def _read_config_text(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if str(path).lower().endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        return tomllib.loads(raw.decode("utf-8"))
    return json.loads(raw.decode("utf-8"))


def load_config(path):
    """Read a JSON or TOML simulation config.

    Recognized keys: ``replicates``, ``seed``, ``methods``, ``grid`` (only
    ``"paper"``), ``scenario`` (a table) and ``scenarios`` (a list of
    tables). Scenario tables take :class:`Scenario` field names.
    """
    try:
        cfg = _read_config_text(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a table at the top level")
    known = {"replicates", "seed", "methods", "grid", "scenario", "scenarios", "var_eta_true", "var_xi_true"}
    unknown = set(cfg) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    scenarios = []
    if cfg.get("grid") is not None:
        if cfg["grid"] != "paper":
            raise ConfigError("the only supported grid is 'paper'")
        scenarios.extend(paper_grid(cfg.get("var_eta_true", 1.5), cfg.get("var_xi_true", 0.5)))
    tables = list(cfg.get("scenarios", []))
    if "scenario" in cfg:
        tables.append(cfg["scenario"])
    for table in tables:
        try:
            scenarios.append(Scenario(**table))
        except TypeError as exc:
            raise ConfigError(f"bad scenario table: {exc}") from None
    return {
        "scenarios": scenarios,
        "replicates": cfg.get("replicates"),
        "seed": cfg.get("seed"),
        "methods": tuple(cfg.get("methods", ("approx", "mtm"))),
    }


CSV_SCHEMA_VERSION = "1.0"

CSV_COLUMNS = (
    ["schema_version", "n", "prevalence", "se_true", "sp_true", "rho", "var_eta_true", "var_xi_true", "link",
     "method", "replicates", "replicates_used", "failures", "generation_failures", "failure_rate"]
    + [f"{stat}_{p}" for p in RANDOM_NAMES for stat in ("bias", "sd", "avg_se")]
    + [f"{stat}_{p}" for p in RANDOM_NAMES[:2] for stat in ("coverage", "coverage_se")]
)


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(round(v, 10))
    return str(v)


def summaries_to_csv(summaries):
    """CSV text with one row per (scenario, method), columns ``CSV_COLUMNS``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for s in summaries:
        sc = s.scenario
        row = [CSV_SCHEMA_VERSION, sc.n, sc.prevalence, sc.se_true, sc.sp_true, sc.rho, sc.var_eta_true,
               sc.var_xi_true, sc.link.value, s.method.value, s.requested, s.replicates_used,
               s.failures, s.generation_failures, s.failure_rate]
        for p in RANDOM_NAMES:
            row += [s.bias[p], s.sd[p], s.avg_se[p]]
        for p in RANDOM_NAMES[:2]:
            row += [s.coverage[p], s.coverage_se[p]]
        w.writerow([_fmt(float(v)) if isinstance(v, (float, np.floating)) else _fmt(v) for v in row])
    return buf.getvalue()
