"""Two-by-two diagnostic tables, CSV ingestion and per-study summaries."""

import csv
import enum
import io
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import (
    DatasetTooSmallError,
    NonFiniteTransformError,
    ParseError,
    ValidationError,
)
from .links import Link, link_apply, link_derivative

__all__ = [
    "CorrectionPolicy",
    "StudyRecord",
    "MetaDataset",
    "parse_dataset",
    "serialize_dataset",
    "read_dataset",
    "load_delirium",
    "empirical_accuracy",
    "transform_estimates",
    "estimate_prevalences",
]

COLUMNS = ("study", "tp", "fp", "fn", "tn")


class CorrectionPolicy(str, enum.Enum):
    NONE = "none"
    HALF_CELL = "half-cell"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValidationError(
                f"unknown correction {value!r}; expected 'none' or 'half-cell'"
            ) from None


@dataclass(frozen=True)
class StudyRecord:
    """Counts from one study's comparison against the reference standard."""

    id: str
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise ValidationError(f"study {self.id}: {name} must be an integer")
            if value < 0:
                raise ValidationError(f"study {self.id}: {name} is negative ({value})")
            object.__setattr__(self, name, int(value))
        if self.tp + self.fn < 1:
            raise ValidationError(f"study {self.id}: no diseased subjects (tp + fn = 0)")
        if self.fp + self.tn < 1:
            raise ValidationError(f"study {self.id}: no nondiseased subjects (fp + tn = 0)")

    @property
    def positives(self):
        return self.tp + self.fn

    @property
    def negatives(self):
        return self.fp + self.tn

    @property
    def total(self):
        return self.positives + self.negatives

    @property
    def has_zero_cell(self):
        return min(self.tp, self.fp, self.fn, self.tn) == 0

    def cells(self, correction=CorrectionPolicy.NONE):
        """(tp, fp, fn, tn) as floats, with the continuity correction applied."""
        correction = CorrectionPolicy.parse(correction)
        add = 0.5 if correction is CorrectionPolicy.HALF_CELL and self.has_zero_cell else 0.0
        return (self.tp + add, self.fp + add, self.fn + add, self.tn + add)


@dataclass(frozen=True)
class MetaDataset:
    studies: tuple

    def __post_init__(self):
        studies = tuple(self.studies)
        object.__setattr__(self, "studies", studies)
        if len(studies) < 2:
            raise DatasetTooSmallError(
                f"at least two studies are required, got {len(studies)}"
            )
        ids = [s.id for s in studies]
        if len(set(ids)) != len(ids):
            raise ValidationError("study ids must be unique")

    def __len__(self):
        return len(self.studies)

    def __iter__(self):
        return iter(self.studies)

    def __getitem__(self, i):
        return self.studies[i]

    @property
    def ids(self):
        return [s.id for s in self.studies]

    def counts(self):
        """Integer array of shape (n, 4) with columns tp, fp, fn, tn."""
        return np.array([[s.tp, s.fp, s.fn, s.tn] for s in self.studies], dtype=float)

    def subset(self, indices):
        return MetaDataset(tuple(self.studies[i] for i in indices))

    def pooled_counts(self):
        c = self.counts().sum(axis=0)
        return tuple(int(v) for v in c)


def _parse_int(text, row, column):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"column {column!r} is not an integer: {text!r}", row) from None


def parse_dataset(text):
    """Parse CSV text with header ``study,tp,fp,fn,tn`` (any column order).

    Row numbers in error messages count data rows from 1.
    """
    reader = csv.reader(io.StringIO(text.lstrip("\ufeff")))
    header = None
    rows = []
    for raw in reader:
        if not raw or all(not c.strip() for c in raw):
            continue
        if header is None:
            header = [h.strip().lower() for h in raw]
            missing = [c for c in COLUMNS if c not in header]
            if missing:
                raise ParseError(f"header is missing columns: {', '.join(missing)}")
            if len(set(header)) != len(header):
                raise ParseError("header has duplicate columns")
            continue
        row = len(rows) + 1
        if len(raw) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(raw)}", row)
        fields = dict(zip(header, raw))
        label = fields["study"].strip()
        if not label:
            raise ParseError("empty study label", row)
        counts = {c: _parse_int(fields[c], row, c) for c in COLUMNS[1:]}
        try:
            rows.append(StudyRecord(label, **counts))
        except ValidationError as exc:
            raise ValidationError(f"row {row}: {exc}") from None
    if header is None:
        raise ParseError("empty input")
    return MetaDataset(tuple(rows))


def serialize_dataset(dataset):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for s in dataset:
        writer.writerow([s.id, s.tp, s.fp, s.fn, s.tn])
    return buf.getvalue()


def read_dataset(path):
    with open(path, encoding="utf-8") as fh:
        return parse_dataset(fh.read())


def load_delirium():
    """The 20-study confusion assessment method dataset bundled with the package."""
    text = resources.files("diagmeta.datasets").joinpath("delirium.csv").read_text("utf-8")
    return parse_dataset(text)


def empirical_accuracy(study, correction=CorrectionPolicy.NONE):
    """Per-study sensitivity and specificity (sample proportions)."""
    tp, fp, fn, tn = study.cells(correction)
    return tp / (tp + fn), tn / (tn + fp)


def transform_estimates(study, link=Link.LOGIT, correction=CorrectionPolicy.HALF_CELL):
    """Link-scale estimates and their delta-method variances.

    Returns ``(eta_hat, xi_hat, var_eta, var_xi)``. For the logit link the
    variances reduce to 1/tp + 1/fn and 1/tn + 1/fp on the corrected cells.
    """
    link = Link.parse(link)
    tp, fp, fn, tn = study.cells(correction)
    se, sp = tp / (tp + fn), tn / (tn + fp)
    if not (0.0 < se < 1.0 and 0.0 < sp < 1.0):
        raise NonFiniteTransformError(
            f"study {study.id}: zero cell gives an infinite transform; "
            "use the 'half-cell' correction"
        )
    if link is Link.LOGIT:
        var_eta = 1.0 / tp + 1.0 / fn
        var_xi = 1.0 / tn + 1.0 / fp
    else:
        var_eta = link_derivative(link, se) ** 2 * se * (1.0 - se) / (tp + fn)
        var_xi = link_derivative(link, sp) ** 2 * sp * (1.0 - sp) / (tn + fp)
    return float(link_apply(link, se)), float(link_apply(link, sp)), float(var_eta), float(var_xi)


def estimate_prevalences(dataset):
    """Closed-form prevalence estimates P_i / n_i with binomial standard errors."""
    out = []
    for s in dataset:
        n = s.total
        out.append((s.positives / n, math.sqrt(s.positives * s.negatives / n**3)))
    return out
