"""Tidy tables from model fits: coefficients, per-observation diagnostics and one-row summaries."""

from .assoc import CorTestResult, pearson_test, spearman_test, tidy_htest
from .errors import (
    ArgumentError,
    CombineError,
    ConvergenceError,
    FitError,
    GroupFitError,
    InputError,
    SchemaError,
    SingularDesignError,
    TidyfitError,
)
from .formula import parse_expr, parse_formula
from .frame import (
    Frame,
    GroupedFrame,
    aggregate,
    apply_combine,
    bootstrap_replicates,
    group_by,
    inflate,
    quantile,
    quantile_type7,
    read_csv,
    write_csv,
    write_jsonl,
)
from .kmeans import (
    KmeansFit,
    augment_kmeans,
    cluster_purity,
    fit_kmeans,
    gaussian_mixture,
    glance_kmeans,
    kmeans,
    tidy_kmeans,
)
from .linreg import LmFit, augment_lm, fit_ols, glance_lm, lm, tidy_lm
from .nls import NlsFit, augment_nls, fit_nls, glance_nls, tidy_nls

__version__ = "0.1.0"
