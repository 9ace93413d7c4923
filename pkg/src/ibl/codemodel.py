"""Code models: raw model responses turned into executable scorers.

A response is mined for its largest fenced code block, parsed in one of two
dialects, and probed on held data. Every way a candidate can go wrong is
mapped to one of three statuses, mirroring the failure modes seen in
generated scorers: code that never imports, code that blows up or emits
NaN while running, and code that runs but emits values outside [0, 1].
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .expression import ExpressionError, eval_expression_tagged, parse_expression_model
from .guest import GuestRunner, GuestRunnerUnavailableError

DIALECTS = ("guest", "expression")
STATUS_OK = "ok"
STATUS_PARSE = "parse_failure"
STATUS_RUNTIME = "runtime_failure"
STATUS_INVALID = "invalid_output"
STATUSES = (STATUS_OK, STATUS_PARSE, STATUS_RUNTIME, STATUS_INVALID)

# opening fence with optional info string, interior up to the next fence;
# (.*?) is lazy so an interior can never itself contain a full pair
_FENCE_RE = re.compile(r"```[A-Za-z0-9_+-]*[ \t]*\n(.*?)```", re.DOTALL)


class EmptyExtractionError(ValueError):
    """Nothing usable was left after code extraction."""


def extract_source(raw: str) -> str:
    """Return the largest fenced block interior, or the stripped raw text
    when no fenced block exists. Idempotent. Raises EmptyExtractionError
    when the result is empty."""
    blocks = [m.group(1) for m in _FENCE_RE.finditer(raw)]
    source = max(blocks, key=len) if blocks else raw
    source = source.strip()
    if not source:
        raise EmptyExtractionError("response contains no code")
    return source


@dataclass(frozen=True)
class GenerationMeta:
    dataset_id: str
    seed: int
    n_train: int
    generation_index: int

    @property
    def attempt_tag(self) -> str:
        return f"{self.dataset_id}/{self.seed}/{self.n_train}/{self.generation_index}"


@dataclass(frozen=True)
class CodeModel:
    raw_response: str
    source: str
    dialect: str
    meta: GenerationMeta | None = None

    def __post_init__(self):
        if self.dialect not in DIALECTS:
            raise ValueError(f"unknown dialect {self.dialect!r}")


def code_model_from_response(raw: str, dialect: str,
                             meta: GenerationMeta | None = None) -> CodeModel:
    """Build a CodeModel, leaving source empty when extraction fails so the
    failure surfaces as a parse_failure report instead of an exception."""
    try:
        source = extract_source(raw)
    except EmptyExtractionError:
        source = ""
    return CodeModel(raw_response=raw, source=source, dialect=dialect, meta=meta)


@dataclass(frozen=True)
class ValidationReport:
    status: str
    detail: str = ""
    offending_rows: tuple[int, ...] = ()

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK


@dataclass(frozen=True)
class PredictionVector:
    values: np.ndarray
    row_count: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.row_count,):
            raise ValueError("prediction vector length mismatch")
        object.__setattr__(self, "values", values)


class CodeModelExecutionError(RuntimeError):
    """A model failed while executing; carries the would-be report status."""

    def __init__(self, status: str, detail: str):
        super().__init__(detail)
        self.status = status
        self.detail = detail


@dataclass
class _RunOutcome:
    status: str
    detail: str = ""
    values: list[float] | None = None
    div_zero_rows: tuple[int, ...] = field(default_factory=tuple)


def _run_expression(cm: CodeModel, ds: Dataset) -> _RunOutcome:
    try:
        prog = parse_expression_model(cm.source, ds.feature_names)
    except ExpressionError as exc:
        return _RunOutcome(STATUS_PARSE, f"parse error: {exc}")
    values: list[float] = []
    tagged: list[int] = []
    for i in range(ds.n_rows):
        value, div_zero = eval_expression_tagged(prog, ds.row_mapping(i))
        values.append(value)
        if div_zero:
            tagged.append(i)
    return _RunOutcome(STATUS_OK, values=values, div_zero_rows=tuple(tagged))


def _run_guest(cm: CodeModel, ds: Dataset, runner: GuestRunner) -> _RunOutcome:
    load_reply = runner.load(cm.source)
    if load_reply.get("status") != STATUS_OK:
        # anything that stops the program from importing cleanly is a
        # parse failure, whatever the runner's own wording
        detail = load_reply.get("detail", "load failed")
        return _RunOutcome(STATUS_PARSE, detail)
    rows = [ds.row_mapping(i) for i in range(ds.n_rows)]
    reply = runner.predict(rows)
    status = reply.get("status")
    if status != STATUS_OK:
        return _RunOutcome(STATUS_RUNTIME, reply.get("detail", "prediction failed"))
    raw_values = reply.get("values", [])
    try:
        values = [float(v) for v in raw_values]
    except (TypeError, ValueError):
        return _RunOutcome(STATUS_RUNTIME, "non-numeric prediction values")
    return _RunOutcome(STATUS_OK, values=values)


def _run(cm: CodeModel, ds: Dataset, runner: GuestRunner | None) -> _RunOutcome:
    if not cm.source:
        return _RunOutcome(STATUS_PARSE, "empty response")
    if cm.dialect == "expression":
        return _run_expression(cm, ds)
    if runner is None:
        raise GuestRunnerUnavailableError("guest dialect requires a runner handle")
    return _run_guest(cm, ds, runner)


def validate(cm: CodeModel, probe: Dataset,
             runner: GuestRunner | None = None) -> ValidationReport:
    """Probe a candidate and classify the outcome.

    Priority: failures to parse or import, then failures while running
    (including division-by-zero rows from the expression dialect), then any
    non-finite or out-of-range value, then a wrong-length output, else ok.
    Out-of-range wins over wrong length so a scorer that emitted a block of
    unnormalized values per row is reported for its values, which is the
    observable defect, rather than for the length mismatch it also causes.
    """
    if probe.n_rows == 0:
        raise ValueError("probe dataset is empty")
    outcome = _run(cm, probe, runner)
    if outcome.status != STATUS_OK:
        return ValidationReport(outcome.status, outcome.detail)
    values = outcome.values or []
    if outcome.div_zero_rows:
        rows = outcome.div_zero_rows
        return ValidationReport(
            STATUS_RUNTIME,
            f"division by zero on {len(rows)} of {probe.n_rows} rows",
            offending_rows=rows,
        )
    arr = np.asarray(values, dtype=float)
    bad = ~np.isfinite(arr) | (arr < 0.0) | (arr > 1.0)
    if bad.any():
        idx = tuple(int(i) for i in np.flatnonzero(bad))
        n_nonfinite = int((~np.isfinite(arr)).sum())
        parts = []
        if n_nonfinite:
            parts.append(f"{n_nonfinite} non-finite")
        if len(idx) > n_nonfinite:
            parts.append(f"{len(idx) - n_nonfinite} outside [0, 1]")
        detail = f"{' and '.join(parts)} of {arr.size} values"
        offending = idx if arr.size == probe.n_rows else ()
        return ValidationReport(STATUS_INVALID, detail, offending_rows=offending)
    if len(values) != probe.n_rows:
        return ValidationReport(
            STATUS_RUNTIME,
            f"expected {probe.n_rows} values, got {len(values)}",
        )
    return ValidationReport(STATUS_OK)


def execute(cm: CodeModel, ds: Dataset,
            runner: GuestRunner | None = None) -> PredictionVector:
    """Run a model over a dataset, one score per row in row order.

    Unlike validate this raises: parse problems surface as ExpressionError
    or CodeModelExecutionError, guest-side failures as
    CodeModelExecutionError. Values are returned as produced; only validated
    models are guaranteed to stay within [0, 1].
    """
    outcome = _run(cm, ds, runner)
    if outcome.status != STATUS_OK:
        raise CodeModelExecutionError(outcome.status, outcome.detail)
    values = outcome.values or []
    if len(values) != ds.n_rows:
        raise CodeModelExecutionError(
            STATUS_RUNTIME, f"expected {ds.n_rows} values, got {len(values)}")
    return PredictionVector(np.asarray(values, dtype=float), ds.n_rows)
