"""Loading and running untrusted scoring programs with modest containment.

Containment is an import allowlist plus a wall-clock limit plus an output
cap, not OS-level isolation: the code being run comes from a research
pipeline the operator controls, and the point is to catch the ways such
code fails, not to survive a hostile adversary.
"""

from __future__ import annotations

import ast
import builtins
import contextlib
import io
import math
import signal
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
import pandas as pd

ALLOWED_IMPORTS = frozenset({"numpy", "pandas", "math", "statistics"})
MAX_OUTPUT_BYTES = 1 << 20
DEFAULT_TIME_LIMIT_MS = 10_000


class TimeLimitExceeded(BaseException):
    """Raised by the alarm handler; BaseException so a model's blanket
    `except Exception` cannot swallow it."""


@contextlib.contextmanager
def time_limit(ms: int):
    def on_alarm(signum, frame):
        raise TimeLimitExceeded(f"time limit exceeded ({ms} ms)")

    previous = signal.signal(signal.SIGALRM, on_alarm)
    signal.setitimer(signal.ITIMER_REAL, ms / 1000.0)
    try:
        yield
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0.0)
        signal.signal(signal.SIGALRM, previous)


def forbidden_imports(source: str) -> list[str]:
    """Module roots imported by the source that are not on the allowlist.
    Assumes the source already compiled, so ast.parse will not raise."""
    tree = ast.parse(source)
    bad = []
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            names = [alias.name for alias in node.names]
        elif isinstance(node, ast.ImportFrom):
            names = [node.module] if node.module and node.level == 0 else []
        else:
            continue
        for name in names:
            root = name.split(".")[0]
            if root not in ALLOWED_IMPORTS and root not in bad:
                bad.append(root)
    return bad


def _guarded_import(name, globals=None, locals=None, fromlist=(), level=0):
    # runtime backstop for __import__("...") and imports inside functions
    root = name.split(".")[0]
    if level == 0 and root not in ALLOWED_IMPORTS:
        raise ImportError(f"import of {root!r} is not allowed")
    return builtins.__import__(name, globals, locals, fromlist, level)


@dataclass
class LoadResult:
    status: str  # ok | parse_failure
    detail: str = ""
    predict: Callable | None = None


def load_program(source: str, limit_ms: int = DEFAULT_TIME_LIMIT_MS) -> LoadResult:
    """Compile and import the program, returning its predict function.

    Every way the program can fail to become importable and callable is a
    parse_failure: syntax errors (prose around the code included), imports
    off the allowlist, exceptions while executing module top level, and a
    missing or uncallable `predict`.
    """
    try:
        code = compile(source, "<model>", "exec")
    except (SyntaxError, ValueError) as exc:
        return LoadResult("parse_failure", f"syntax error: {exc}")
    bad = forbidden_imports(source)
    if bad:
        return LoadResult("parse_failure",
                          f"forbidden import: {', '.join(bad)}")
    safe_builtins = dict(vars(builtins))
    safe_builtins["__import__"] = _guarded_import
    namespace = {"__name__": "guest_model", "__builtins__": safe_builtins}
    try:
        # stdout stays clean for the protocol stream
        with time_limit(limit_ms), contextlib.redirect_stdout(io.StringIO()):
            exec(code, namespace)
    except TimeLimitExceeded as exc:
        return LoadResult("parse_failure", f"import failed: {exc}")
    except BaseException as exc:  # noqa: BLE001 - report, never crash
        return LoadResult("parse_failure",
                          f"import failed: {type(exc).__name__}: {exc}")
    predict = namespace.get("predict")
    if not callable(predict):
        return LoadResult("parse_failure", "no predict function defined")
    return LoadResult("ok", predict=predict)


@dataclass
class PredictResult:
    status: str  # ok | runtime_failure
    detail: str = ""
    values: list[float] | None = None


def run_predict(predict: Callable, rows: Sequence[Mapping],
                limit_ms: int = DEFAULT_TIME_LIMIT_MS) -> PredictResult:
    """Call predict on a DataFrame of the rows and flatten its output.

    The output is reported as produced, including NaN or a wrong count;
    deciding whether that output is acceptable is the host's job.
    """
    frame = pd.DataFrame(list(rows))
    try:
        with time_limit(limit_ms), contextlib.redirect_stdout(io.StringIO()):
            result = predict(frame)
    except TimeLimitExceeded as exc:
        return PredictResult("runtime_failure", str(exc))
    except BaseException as exc:  # noqa: BLE001
        return PredictResult("runtime_failure",
                             f"{type(exc).__name__}: {exc}")
    try:
        arr = np.asarray(result, dtype=float)
    except (TypeError, ValueError) as exc:
        return PredictResult("runtime_failure",
                             f"non-numeric output: {exc}")
    detail = f"output shape {arr.shape}" if arr.ndim != 1 else ""
    values = [float(v) for v in arr.ravel()]
    return PredictResult("ok", detail, values)


def wire_values(values: Sequence[float]) -> list[float | None]:
    """JSON has no NaN or infinity; they travel as null."""
    return [v if math.isfinite(v) else None for v in values]
