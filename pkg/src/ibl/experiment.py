"""Grid orchestration: best-of-N model generation, per-row in-context
prediction, and the classical baseline sweep, across seeds and train sizes.

A cell is one (dataset, seed, n_train, method) combination. Cells run
sequentially, each appending one row to results.csv, so an interrupted
suite resumes by skipping cells already present in the file.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable

import numpy as np

from .baselines import (
    DEFAULT_KNN_K,
    DEFAULT_LOGISTIC_L2,
    DEFAULT_SVM_C,
    DEFAULT_SVM_EPOCHS,
    fit_linear_svm,
    fit_logistic,
    knn_scores,
)
from .codemodel import (
    CodeModel,
    CodeModelExecutionError,
    DIALECTS,
    GenerationMeta,
    code_model_from_response,
    execute,
    validate,
)
from .dataset import (
    Dataset,
    SplitSpec,
    balanced_sample,
    generate_moons,
    generate_pseudo,
    load_csv,
    load_titanic_csv,
    round_features,
)
from .evaluation import (
    METHODS,
    ResultRecord,
    append_result_csv,
    auc,
    read_results_csv,
    write_plot_csv,
)
from .expression import ExpressionError
from .gateway import (
    CompletionRequest,
    DEFAULT_API_KEY_ENV,
    GatewayError,
    LiveBackend,
    ReplayBackend,
    ScriptedBackend,
    complete,
    encode_tag,
)
from .guest import GuestRunner
from .prompting import default_template, render_ibl_prompt, render_icl_prompt

DEFAULT_SEEDS = (3655, 3656, 3657)
ROUND_PLACES = 3
BASELINE_METHODS = ("logistic", "knn", "svm")
SELECTION_MODES = ("test_auc", "holdout_auc")
DATASET_KINDS = ("titanic", "moons", "pseudo", "csv")


class BudgetExceededError(RuntimeError):
    """The configured request budget ran out mid-suite."""


@dataclass
class DatasetSpec:
    kind: str
    path: str | None = None
    n: int = 200
    noise_sd: float = 0.2
    seed: int = 0
    dataset_id: str | None = None

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.kind in ("titanic", "csv") and not self.path:
            raise ValueError(f"dataset kind {self.kind!r} needs a path")

    @property
    def resolved_id(self) -> str:
        return self.dataset_id or self.kind

    def load(self, drop_leaky: bool = True) -> Dataset:
        if self.kind == "titanic":
            ds = load_titanic_csv(self.path, drop_leaky=drop_leaky)
        elif self.kind == "csv":
            ds = load_csv(self.path)
        elif self.kind == "moons":
            ds = generate_moons(self.n, self.noise_sd, self.seed)
        else:
            ds = generate_pseudo(self.n, self.seed)
        # round before splitting so prompts and execution see identical values
        return round_features(ds, ROUND_PLACES)


@dataclass
class BackendSpec:
    kind: str = "replay"
    fixture_dir: str | None = None
    script: list[str] = field(default_factory=list)
    endpoint_url: str = ""
    model_id: str = "gpt-4"
    api_key_env: str = DEFAULT_API_KEY_ENV
    record_dir: str | None = None
    max_in_flight: int = 4

    def build(self):
        if self.kind == "replay":
            if not self.fixture_dir:
                raise ValueError("replay backend needs fixture_dir")
            return ReplayBackend(self.fixture_dir)
        if self.kind == "scripted":
            return ScriptedBackend(list(self.script))
        if self.kind == "live":
            if not self.endpoint_url:
                raise ValueError("live backend needs endpoint_url")
            return LiveBackend(self.endpoint_url, api_key_env=self.api_key_env,
                               record_dir=self.record_dir,
                               max_in_flight=self.max_in_flight)
        raise ValueError(f"unknown backend kind {self.kind!r}")


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec
    backend: BackendSpec
    train_sizes: list[int]
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    methods: tuple[str, ...] = METHODS
    n_generations: int = 30
    selection: str = "test_auc"
    dialect: str = "expression"
    output_dir: str = "runs/out"
    drop_leaky: bool = True
    request_budget: int | None = None
    guest_runner_cmd: list[str] | None = None
    logistic_l2: float = DEFAULT_LOGISTIC_L2
    svm_c: float = DEFAULT_SVM_C
    svm_epochs: int = DEFAULT_SVM_EPOCHS
    knn_k: int = DEFAULT_KNN_K
    icl_answer_mode: str = "probability"

    def __post_init__(self):
        if not self.train_sizes:
            raise ValueError("train_sizes is empty")
        for size in self.train_sizes:
            if size % 2 != 0:
                raise ValueError("train sizes must be even for balanced splits")
        if self.n_generations < 1:
            raise ValueError("n_generations must be at least 1")
        if self.selection not in SELECTION_MODES:
            raise ValueError(f"unknown selection mode {self.selection!r}")
        if self.dialect not in DIALECTS:
            raise ValueError(f"unknown dialect {self.dialect!r}")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")
        self.methods = tuple(self.methods)

    def to_json(self) -> str:
        payload = asdict(self)
        payload["methods"] = list(self.methods)
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        payload = json.loads(text)
        payload["dataset"] = DatasetSpec(**payload["dataset"])
        payload["backend"] = BackendSpec(**payload.get("backend", {}))
        if "methods" in payload:
            payload["methods"] = tuple(payload["methods"])
        return cls(**payload)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


class _CountingBackend:
    """Wraps any backend with a thread-safe request counter and hard budget."""

    def __init__(self, inner, budget: int | None):
        self.inner = inner
        self.budget = budget
        self.count = 0
        self._lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> str:
        with self._lock:
            if self.budget is not None and self.count >= self.budget:
                raise BudgetExceededError(
                    f"request budget of {self.budget} exhausted")
            self.count += 1
        return complete(self.inner, request)


_NUM_RE = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")


def parse_icl_score(text: str) -> float | None:
    """First real number in [0, 1] anywhere in the reply, else None."""
    for match in _NUM_RE.finditer(text):
        value = float(match.group(0))
        if 0.0 <= value <= 1.0:
            return value
    return None


def _carve_holdout(train: Dataset, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministically split train into prompt rows and a validation third.

    The carve is stratified: a third of each class goes to validation, so
    both sides keep both classes and the selection AUC stays defined.
    """
    if train.n_rows < 4:
        raise ValueError("holdout selection needs at least 4 training rows")
    rng = np.random.default_rng(seed)
    val_parts = []
    for cls in (0, 1):
        idx = np.flatnonzero(train.labels == cls)
        val_parts.append(rng.choice(idx, size=max(1, len(idx) // 3), replace=False))
    val_idx = np.sort(np.concatenate(val_parts))
    fit_mask = np.ones(train.n_rows, dtype=bool)
    fit_mask[val_idx] = False
    return train.subset(np.flatnonzero(fit_mask)), train.subset(val_idx)


def _safe_scores(cm: CodeModel, ds: Dataset,
                 runner: GuestRunner | None) -> np.ndarray | None:
    """Scores for a model, or None when it cannot produce clean ones here.
    A model can pass validation on the probe split yet still divide by zero
    or blow up on other rows; those candidates are simply not selectable."""
    try:
        values = execute(cm, ds, runner).values
    except (CodeModelExecutionError, ExpressionError):
        return None
    if not np.all(np.isfinite(values)):
        return None
    return values


def run_ibl(cfg: ExperimentConfig, ds: Dataset, seed: int, n_train: int,
            backend, runner: GuestRunner | None = None,
            on_response: Callable[[str, str], None] | None = None,
            ) -> tuple[ResultRecord, CodeModel | None]:
    """Generate n_generations candidates, keep the best valid one.

    Candidates are validated on the training rows, scored on the selection
    set, and the max-AUC one (ties to the lowest generation index) is
    reported with its test AUC. selection == "test_auc" scores candidates
    directly on the test split; "holdout_auc" prompts with two thirds of
    train and selects on the carved-out remainder.
    """
    dataset_id = cfg.dataset.resolved_id
    train, test = balanced_sample(ds, SplitSpec(seed, n_train))
    if cfg.selection == "holdout_auc":
        prompt_set, selection_set = _carve_holdout(train, seed)
    else:
        prompt_set, selection_set = train, test
    prompt = render_ibl_prompt(prompt_set, default_template(cfg.dialect))

    candidates: list[CodeModel] = []
    for i in range(cfg.n_generations):
        meta = GenerationMeta(dataset_id, seed, n_train, i)
        request = CompletionRequest(
            model_id=cfg.backend.model_id,
            system_text=prompt.system_text,
            user_text=prompt.user_text,
            temperature=1.0,
            attempt_tag=meta.attempt_tag,
        )
        raw = complete(backend, request)
        if on_response is not None:
            on_response(meta.attempt_tag, raw)
        candidates.append(code_model_from_response(raw, cfg.dialect, meta))

    # a candidate counts as valid once it yields clean scores everywhere the
    # record needs them; n_valid == 0 iff no AUC can be reported
    scored: list[tuple[float, int, CodeModel, np.ndarray]] = []
    for i, cm in enumerate(candidates):
        report = validate(cm, train, runner)
        if not report.ok:
            continue
        sel_scores = _safe_scores(cm, selection_set, runner)
        if sel_scores is None:
            continue
        if cfg.selection == "holdout_auc":
            test_scores = _safe_scores(cm, test, runner)
            if test_scores is None:
                continue
        else:
            test_scores = sel_scores
        sel_auc = auc(sel_scores, selection_set.labels)
        scored.append((sel_auc, i, cm, test_scores))

    if not scored:
        record = ResultRecord(dataset_id, seed, n_train, "ibl", auc=None,
                              n_attempts=cfg.n_generations, n_valid=0)
        return record, None

    best = min(scored, key=lambda t: (-t[0], t[1]))
    _, best_i, best_cm, best_test_scores = best
    record = ResultRecord(
        dataset_id, seed, n_train, "ibl",
        auc=auc(best_test_scores, test.labels),
        n_attempts=cfg.n_generations,
        n_valid=len(scored),
        selected_attempt=best_cm.meta.attempt_tag,
    )
    return record, best_cm


def run_icl(cfg: ExperimentConfig, ds: Dataset, seed: int, n_train: int,
            backend, on_response: Callable[[str, str], None] | None = None,
            ) -> ResultRecord:
    """One prompt per test row; unparseable or failed rows fall back to 0.5."""
    dataset_id = cfg.dataset.resolved_id
    train, test = balanced_sample(ds, SplitSpec(seed, n_train))
    scores = np.empty(test.n_rows)
    n_fallback = 0
    for row_i in range(test.n_rows):
        prompt = render_icl_prompt(train, test.row_mapping(row_i),
                                   answer_mode=cfg.icl_answer_mode)
        tag = f"{dataset_id}/{seed}/{n_train}/icl/{row_i}"
        request = CompletionRequest(
            model_id=cfg.backend.model_id,
            system_text=prompt.system_text,
            user_text=prompt.user_text,
            temperature=0.0,
            attempt_tag=tag,
        )
        score = None
        try:
            raw = complete(backend, request)
        except BudgetExceededError:
            raise
        except GatewayError:
            raw = None
        if raw is not None:
            if on_response is not None:
                on_response(tag, raw)
            score = parse_icl_score(raw)
        if score is None:
            score = 0.5
            n_fallback += 1
        scores[row_i] = score
    return ResultRecord(
        dataset_id, seed, n_train, "icl",
        auc=auc(scores, test.labels),
        n_attempts=test.n_rows,
        n_valid=test.n_rows - n_fallback,
        n_fallback=n_fallback,
    )


def run_baselines(cfg: ExperimentConfig, ds: Dataset, seed: int, n_train: int,
                  methods: tuple[str, ...] | None = None) -> list[ResultRecord]:
    """Fit each configured classical model on the train split, score test."""
    dataset_id = cfg.dataset.resolved_id
    wanted = [m for m in (methods or cfg.methods) if m in BASELINE_METHODS]
    train, test = balanced_sample(ds, SplitSpec(seed, n_train))
    records = []
    for method in wanted:
        try:
            if method == "logistic":
                model = fit_logistic(train, l2=cfg.logistic_l2)
                values = model.scores(test).values
            elif method == "svm":
                model = fit_linear_svm(train, c=cfg.svm_c,
                                       epochs=cfg.svm_epochs, seed=seed)
                values = model.scores(test).values
            else:
                values = knn_scores(train, test, k=cfg.knn_k).values
            records.append(ResultRecord(
                dataset_id, seed, n_train, method,
                auc=auc(values, test.labels), n_attempts=1, n_valid=1))
        except ValueError as exc:
            records.append(ResultRecord(
                dataset_id, seed, n_train, method, auc=None,
                error=str(exc)))
    return records


def _attempt_writer(attempts_dir: Path) -> Callable[[str, str], None]:
    def write(tag: str, raw: str) -> None:
        (attempts_dir / f"{encode_tag(tag)}.txt").write_text(raw, encoding="utf-8")
    return write


def run_suite(cfg: ExperimentConfig) -> list[ResultRecord]:
    """Run every (seed, n_train, method) cell, skipping ones already in
    results.csv. Per-cell failures become error rows; the suite never aborts
    on one bad cell. Returns the full results table."""
    out = Path(cfg.output_dir)
    attempts_dir = out / "attempts"
    selected_dir = out / "selected"
    plots_dir = out / "plots"
    for d in (attempts_dir, selected_dir, plots_dir):
        d.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json(), encoding="utf-8")

    ds = cfg.dataset.load(cfg.drop_leaky)
    results_path = out / "results.csv"
    done = {r.cell_key for r in read_results_csv(results_path)} \
        if results_path.exists() else set()

    backend = _CountingBackend(cfg.backend.build(), cfg.request_budget)
    writer = _attempt_writer(attempts_dir)
    methods = [m for m in METHODS if m in cfg.methods]
    needs_runner = cfg.dialect == "guest" and "ibl" in methods
    runner = GuestRunner(cfg.guest_runner_cmd) if needs_runner else None
    dataset_id = cfg.dataset.resolved_id
    try:
        for seed in cfg.seeds:
            for n_train in cfg.train_sizes:
                for method in methods:
                    key = (dataset_id, seed, n_train, method)
                    if key in done:
                        continue
                    try:
                        if method == "ibl":
                            record, model = run_ibl(cfg, ds, seed, n_train,
                                                    backend, runner, writer)
                            if model is not None:
                                stem = encode_tag(f"{dataset_id}/{seed}/{n_train}/{method}")
                                src_path = selected_dir / f"{stem}.src"
                                src_path.write_text(model.source, encoding="utf-8")
                        elif method == "icl":
                            record = run_icl(cfg, ds, seed, n_train, backend, writer)
                        else:
                            record = run_baselines(cfg, ds, seed, n_train,
                                                   (method,))[0]
                    except Exception as exc:  # noqa: BLE001 - cell isolation
                        record = ResultRecord(
                            dataset_id, seed, n_train, method, auc=None,
                            error=f"{type(exc).__name__}: {exc}")
                    append_result_csv(record, results_path)
                    done.add(key)
    finally:
        if runner is not None:
            runner.close()

    records = read_results_csv(results_path)
    write_plot_csv(records, plots_dir / "auc_vs_train_size.csv")
    return records
