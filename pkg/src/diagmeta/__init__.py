"""Meta-analysis of diagnostic accuracy studies with the hierarchical
multinomial processing tree model and the approximate bivariate model."""

__version__ = "0.1.0"

from .data import (  # noqa: E402
    CorrectionPolicy,
    MetaDataset,
    StudyRecord,
    load_delirium,
    parse_dataset,
    read_dataset,
)
from .inference import (  # noqa: E402
    FitOptions,
    FitResult,
    confidence_region,
    fit_model,
    pooled_accuracy,
    sroc_curve,
    wald_ci,
)
from .likelihoods import AccuracyParams, ModelKind  # noqa: E402
from .links import Link  # noqa: E402
from .simulate import Scenario, run_scenario  # noqa: E402

__all__ = [
    "__version__",
    "AccuracyParams",
    "CorrectionPolicy",
    "FitOptions",
    "FitResult",
    "Link",
    "MetaDataset",
    "ModelKind",
    "Scenario",
    "StudyRecord",
    "confidence_region",
    "fit_model",
    "load_delirium",
    "parse_dataset",
    "pooled_accuracy",
    "read_dataset",
    "run_scenario",
    "sroc_curve",
    "wald_ci",
]
