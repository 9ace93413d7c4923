"""Inductive-bias learning on tabular data: prompt a language model with a
training table, get back an executable scorer, pick the best of N, and
benchmark it against in-context prediction and classical baselines."""

from .baselines import LinearModel, fit_linear_svm, fit_logistic, knn_scores
from .codemodel import (
    CodeModel,
    PredictionVector,
    ValidationReport,
    code_model_from_response,
    execute,
    extract_source,
    validate,
)
from .dataset import Dataset, SplitSpec, balanced_sample
from .evaluation import ResultRecord, accuracy, auc
from .experiment import (
    BackendSpec,
    DatasetSpec,
    ExperimentConfig,
    run_baselines,
    run_ibl,
    run_icl,
    run_suite,
)
from .expression import ExprProgram, eval_expression, parse_expression_model
from .gateway import CompletionRequest, LiveBackend, ReplayBackend, ScriptedBackend
from .guest import GuestRunner
from .prompting import render_ibl_prompt, render_icl_prompt

__version__ = "0.1.0"

__all__ = [
    "BackendSpec",
    "CodeModel",
    "CompletionRequest",
    "Dataset",
    "DatasetSpec",
    "ExperimentConfig",
    "ExprProgram",
    "GuestRunner",
    "LinearModel",
    "LiveBackend",
    "PredictionVector",
    "ReplayBackend",
    "ResultRecord",
    "ScriptedBackend",
    "SplitSpec",
    "ValidationReport",
    "accuracy",
    "auc",
    "balanced_sample",
    "code_model_from_response",
    "eval_expression",
    "execute",
    "extract_source",
    "fit_linear_svm",
    "fit_logistic",
    "knn_scores",
    "parse_expression_model",
    "render_ibl_prompt",
    "render_icl_prompt",
    "run_baselines",
    "run_ibl",
    "run_icl",
    "run_suite",
    "validate",
    "__version__",
]
