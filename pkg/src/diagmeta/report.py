"""JSON fit reports: construction, schema validation and reloading."""

import json
import math
from datetime import datetime, timezone
from importlib import resources

import jsonschema
import numpy as np

from . import __version__
from .errors import ValidationError
from .inference import (
    FailureKind,
    FailureReason,
    FitOptions,
    FitResult,
    pooled_accuracy,
    wald_ci,
)
from .likelihoods import ModelKind
from .links import Link, link_inverse
from .optim import OptResult, Status

__all__ = [
    "SCHEMA_VERSION",
    "build_report",
    "dump_report",
    "write_report",
    "load_report",
    "validate_report",
    "fit_from_report",
    "load_schema",
]

SCHEMA_VERSION = "1.0"


def load_schema():
    text = resources.files("diagmeta.schemas").joinpath("fit_report.schema.json").read_text("utf-8")
    return json.loads(text)


def validate_report(report):
    """Raise ValidationError unless ``report`` matches the shipped schema."""
    try:
        jsonschema.validate(report, load_schema())
    except jsonschema.ValidationError as exc:
        raise ValidationError(f"fit report does not match schema: {exc.message}") from None


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else None


def _matrix(m):
    if m is None:
        return None
    return [[_num(v) for v in row] for row in np.asarray(m)]


def _interval(estimate, se, level):
    if se is None or not np.isfinite(se) or se <= 0:
        return None, None
    return tuple(_num(v) for v in wald_ci(estimate, se, level))


def _pooled(fit, level):
    se, se_se, sp, se_sp = pooled_accuracy(fit)
    out = {}
    s = fit.se
    for j, (name, est, err) in enumerate((("sensitivity", se, se_se), ("specificity", sp, se_sp))):
        # interval on the link scale, mapped back so it stays inside (0, 1)
        lo, hi = _interval(fit.estimates[j], s[j], level)
        if lo is not None:
            lo, hi = float(link_inverse(fit.link, lo)), float(link_inverse(fit.link, hi))
        out[name] = {"estimate": float(est), "se": _num(err), "ci_lower": lo, "ci_upper": hi}
    return out


def build_report(fit, dataset, config, level=0.95, timestamp=None):
    """Assemble the report dictionary for a finished fit.

    ``config`` must hold ``data``, ``seed`` and ``argv``; the remaining
    settings are taken from the fit itself.
    """
    se = fit.se
    se_model = np.sqrt(np.clip(np.diag(fit.cov_model), 0, None)) if fit.cov_model is not None else None
    se_sand = np.sqrt(np.clip(np.diag(fit.cov_sandwich), 0, None)) if fit.cov_sandwich is not None else None
    params = []
    for j, name in enumerate(fit.names):
        lo, hi = _interval(fit.estimates[j], se[j], level)
        params.append({
            "name": name,
            "estimate": float(fit.estimates[j]),
            "se": _num(se[j]),
            "ci_lower": lo,
            "ci_upper": hi,
            "se_model": None if se_model is None else _num(se_model[j]),
            "se_sandwich": None if se_sand is None else _num(se_sand[j]),
        })
    prevalences = None
    if fit.prevalences is not None:
        prevalences = [
            {"study": sid, "estimate": float(p), "se": float(s)}
            for sid, (p, s) in zip(dataset.ids, fit.prevalences)
        ]
    opts = fit.options
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "diagmeta", "version": __version__},
        "config": {
            "data": str(config["data"]),
            "model": fit.model.value,
            "link": fit.link.value,
            "gh_nodes": int(opts.gh_nodes),
            "correction": opts.correction.value,
            "seed": int(config["seed"]),
            "level": float(level),
            "argv": [str(a) for a in config.get("argv", [])],
        },
        "model": fit.model.value,
        "link": fit.link.value,
        "n_studies": fit.n_studies,
        "converged": fit.converged,
        "failure": None if fit.failure is None else {
            "kind": fit.failure.kind.value, "detail": fit.failure.detail,
        },
        "optimizer": {
            "status": fit.opt.status.value,
            "method": fit.opt.method,
            "evaluations": int(fit.opt.evals),
            "restarts": int(fit.opt.restarts),
        },
        "se_source": fit.headline,
        "parameters": params,
        "pooled": _pooled(fit, level),
        "covariance": {"model": _matrix(fit.cov_model), "sandwich": _matrix(fit.cov_sandwich)},
        "unconstrained": [float(v) for v in fit.u],
        "prevalences": prevalences,
        "loglik": _num(fit.loglik),
        "loglik_link_scale": _num(fit.loglik_link_scale),
        "aic": _num(fit.aic),
        "n_params": int(fit.n_params),
        "timestamp": timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def dump_report(report):
    return json.dumps(report, indent=2, allow_nan=False) + "\n"


def write_report(report, path):
    validate_report(report)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dump_report(report))


def load_report(path):
    with open(path, encoding="utf-8") as fh:
        try:
            report = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: not valid JSON ({exc})") from None
    validate_report(report)
    return report


def _cov(m):
    if m is None:
        return None
    return np.array([[np.nan if v is None else v for v in row] for row in m], dtype=float)


def fit_from_report(report):
    """Rebuild the parts of a FitResult that curves and regions depend on."""
    kind = ModelKind.parse(report["model"])
    failure = report["failure"]
    cfg = report["config"]
    est = np.array([p["estimate"] for p in report["parameters"]], dtype=float)
    opt = report["optimizer"]
    return FitResult(
        model=kind,
        link=Link.parse(report["link"]),
        names=tuple(p["name"] for p in report["parameters"]),
        estimates=est,
        u=np.array(report["unconstrained"], dtype=float),
        cov_model=_cov(report["covariance"]["model"]),
        cov_sandwich=_cov(report["covariance"]["sandwich"]),
        loglik=report["loglik"],
        loglik_link_scale=report["loglik_link_scale"],
        aic=report["aic"],
        n_params=report["n_params"],
        n_studies=report["n_studies"],
        prevalences=None,
        failure=None if failure is None else FailureReason(FailureKind(failure["kind"]), failure["detail"]),
        opt=OptResult(None, math.nan, Status(opt["status"]), opt["evaluations"], 0, opt["restarts"], opt["method"]),
        options=FitOptions(gh_nodes=cfg["gh_nodes"], correction=cfg["correction"], seed=cfg["seed"]),
    )
