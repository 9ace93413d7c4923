"""Prompt rendering: code-generation prompts from training tables, and per-row
prediction prompts for the in-context baseline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .dataset import Dataset

DATA_PLACEHOLDER = "{{DATA}}"
SKELETON_PLACEHOLDER = "{{SKELETON}}"

SENTINEL_BEFORE = "# Do not change the code before this point."
SENTINEL_AFTER = "# Do not change the code after this point."

GUEST_SKELETON = """\
import numpy as np
import pandas as pd

def predict(x):
    df = x.copy()
    output = []
    for index, row in df.iterrows():
        # Do not change the code before this point.
        # Please describe the process required to make the prediction below.

        y = 0.5

        # Do not change the code after this point.
        output.append(y)
    return np.array(output)
"""

EXPRESSION_SKELETON = """\
# Do not change the code before this point.
# Write the scoring program below: optional `name = expression` lines, then a
# final expression giving the probability that target is 1. Allowed forms:
# feature names, numbers, + - * /, abs(e), exp(e), min(...), max(...),
# sigmoid(e), clamp(e), comparisons and `a if condition else b`.
clamp(0.5)
# Do not change the code after this point.
"""

IBL_INSTRUCTION = """\
Below is training data for a binary classification task. Each line holds the
feature values of one example followed by its target (0 or 1).

{{DATA}}

Using only the patterns you find in this data, complete the function below so
that it outputs, for every input row, the probability that the target is 1 as
a number between 0 and 1. Do not use any existing machine learning model
library (no scikit-learn, xgboost, lightgbm, tensorflow, torch or similar);
write the scoring logic yourself. Reply with only the completed code and no
explanation before or after it.

{{SKELETON}}
"""

IBL_SYSTEM_TEXT = "You write small, self-contained scoring functions and reply with code only."
ICL_SYSTEM_TEXT = "You answer prediction questions in exactly the requested format, with no extra words."


@dataclass(frozen=True)
class PromptTemplate:
    """Instruction text plus the function scaffold spliced into every prompt."""

    instruction_text: str
    skeleton: str
    data_placeholder: str = DATA_PLACEHOLDER

    def __post_init__(self) -> None:
        if self.instruction_text.count(self.data_placeholder) != 1:
            raise ValueError(f"instruction text must contain {self.data_placeholder} exactly once")
        for sentinel in (SENTINEL_BEFORE, SENTINEL_AFTER):
            if self.skeleton.count(sentinel) != 1:
                raise ValueError(f"skeleton must contain {sentinel!r} exactly once")


@dataclass(frozen=True)
class RenderedPrompt:
    system_text: str
    user_text: str
    token_estimate: int

    def __post_init__(self) -> None:
        if self.token_estimate < 0:
            raise ValueError("token_estimate must be nonnegative")


def default_template(dialect: str = "guest") -> PromptTemplate:
    if dialect == "guest":
        return PromptTemplate(IBL_INSTRUCTION, GUEST_SKELETON)
    if dialect == "expression":
        return PromptTemplate(IBL_INSTRUCTION, EXPRESSION_SKELETON)
    raise ValueError(f"unknown dialect {dialect!r}")


def load_template(path: str, skeleton: str = GUEST_SKELETON) -> PromptTemplate:
    """Read instruction wording from a UTF-8 file; the scaffold stays fixed."""
    with open(path, encoding="utf-8") as fh:
        return PromptTemplate(fh.read(), skeleton)


def format_number(value: float) -> str:
    """Render with at most 3 decimals, no exponent, no trailing zeros."""
    v = float(value)
    if v == 0.0:
        v = 0.0  # normalize -0.0
    text = f"{v:.3f}".rstrip("0").rstrip(".")
    return text or "0"


def serialize_rows(ds: Dataset) -> str:
    """Header of feature names plus ``target``, then one CSV line per row."""
    if ds.n_rows == 0:
        raise ValueError("cannot serialize an empty dataset")
    lines = [",".join(ds.feature_names + ("target",))]
    for i in range(ds.n_rows):
        values = ",".join(format_number(v) for v in ds.rows[i])
        lines.append(f"{values},{int(ds.labels[i])}")
    return "\n".join(lines)


def serialize_query_row(feature_names: tuple[str, ...], query: Mapping[str, float]) -> str:
    return ",".join(format_number(query[name]) for name in feature_names)


def parse_rows(text: str) -> tuple[tuple[str, ...], list[list[float]], list[int]]:
    """Invert :func:`serialize_rows`: returns (feature_names, rows, labels)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = tuple(lines[0].split(","))
    if not header or header[-1] != "target":
        raise ValueError("missing 'target' header column")
    names = header[:-1]
    rows, labels = [], []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != len(header):
            raise ValueError(f"row has {len(parts)} fields, expected {len(header)}")
        rows.append([float(p) for p in parts[:-1]])
        labels.append(int(parts[-1]))
    return names, rows, labels


def _estimate_tokens(*texts: str) -> int:
    total = sum(len(t) for t in texts)
    return (total + 3) // 4  # chars/4 heuristic, used only for budget warnings


def render_ibl_prompt(train: Dataset, tmpl: PromptTemplate | None = None) -> RenderedPrompt:
    """Instruction with the serialized training block substituted in, followed
    by the function scaffold the model must complete."""
    if train.n_rows == 0:
        raise ValueError("training set is empty")
    tmpl = tmpl or default_template()
    if tmpl.data_placeholder not in tmpl.instruction_text:
        raise ValueError("template instruction text lacks the data placeholder")
    text = tmpl.instruction_text.replace(tmpl.data_placeholder, serialize_rows(train))
    if SKELETON_PLACEHOLDER in text:
        text = text.replace(SKELETON_PLACEHOLDER, tmpl.skeleton)
    else:
        text = text.rstrip("\n") + "\n\n" + tmpl.skeleton
    return RenderedPrompt(IBL_SYSTEM_TEXT, text, _estimate_tokens(IBL_SYSTEM_TEXT, text))


def render_icl_prompt(
    train: Dataset,
    query: Mapping[str, float],
    answer_mode: str = "probability",
) -> RenderedPrompt:
    """Training rows plus one unlabeled query row and an answer-format clause.

    ``answer_mode`` is ``probability`` (ask for P(target=1) as a bare number)
    or ``label`` (ask for a hard 0/1 answer).
    """
    if set(query) != set(train.feature_names):
        missing = set(train.feature_names) ^ set(query)
        raise ValueError(f"query features do not match training features: {sorted(missing)}")
    if answer_mode == "probability":
        ask = ("Respond with only the probability that target is 1 for that row: "
               "a single number between 0 and 1, nothing else.")
    elif answer_mode == "label":
        ask = "Respond with only the predicted target for that row: 0 or 1, nothing else."
    else:
        raise ValueError(f"unknown answer_mode {answer_mode!r}")
    text = (
        "Below is training data for a binary classification task. Each line holds "
        "the feature values of one example followed by its target (0 or 1).\n\n"
        f"{serialize_rows(train)}\n\n"
        "Predict for the following row, given in the same feature order without "
        "the target:\n"
        f"{serialize_query_row(train.feature_names, query)}\n\n"
        f"{ask}"
    )
    return RenderedPrompt(ICL_SYSTEM_TEXT, text, _estimate_tokens(ICL_SYSTEM_TEXT, text))
