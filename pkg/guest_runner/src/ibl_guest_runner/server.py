"""Line-protocol server: one JSON request per stdin line, one JSON response
per stdout line, in order, until shutdown or EOF."""

from __future__ import annotations

import json
import sys

from .sandbox import (
    DEFAULT_TIME_LIMIT_MS,
    MAX_OUTPUT_BYTES,
    load_program,
    run_predict,
    wire_values,
)

PROTOCOL_VERSION = 1


def _response(status: str, detail: str = "", values=None) -> dict:
    resp = {"v": PROTOCOL_VERSION, "status": status}
    if detail:
        resp["detail"] = detail
    if values is not None:
        resp["values"] = values
    return resp


def _limit_ms(request: dict) -> int:
    limit = request.get("time_limit_ms", DEFAULT_TIME_LIMIT_MS)
    if not isinstance(limit, int) or limit <= 0:
        raise ValueError("time_limit_ms must be a positive integer")
    return limit


def handle_request(request: dict, state: dict) -> tuple[dict, bool]:
    """One response per request; the bool says whether to keep serving."""
    op = request.get("op")
    if op == "shutdown":
        return _response("ok"), False
    if op == "load":
        state["predict"] = None
        source = request.get("source")
        if not isinstance(source, str):
            return _response("runtime_failure",
                            "protocol violation: load needs a source string"), True
        result = load_program(source, _limit_ms(request))
        if result.status == "ok":
            state["predict"] = result.predict
        return _response(result.status, result.detail), True
    if op == "predict":
        if state.get("predict") is None:
            return _response("runtime_failure", "no model loaded"), True
        rows = request.get("rows")
        if (not isinstance(rows, list) or not rows
                or not all(isinstance(r, dict) for r in rows)):
            return _response("runtime_failure",
                            "protocol violation: rows must be a non-empty list of objects"), True
        result = run_predict(state["predict"], rows, _limit_ms(request))
        if result.status != "ok":
            return _response(result.status, result.detail), True
        return _response("ok", result.detail, wire_values(result.values)), True
    return _response("runtime_failure",
                     f"protocol violation: unknown op {op!r}"), True


def serve(stdin=None, stdout=None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    state: dict = {"predict": None}
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        keep_going = True
        try:
            request = json.loads(line)
            if not isinstance(request, dict):
                raise ValueError("request must be a JSON object")
            response, keep_going = handle_request(request, state)
        except (json.JSONDecodeError, ValueError) as exc:
            response = _response("runtime_failure", f"protocol violation: {exc}")
        encoded = json.dumps(response, allow_nan=False)
        if len(encoded.encode("utf-8")) > MAX_OUTPUT_BYTES:
            response = _response("runtime_failure",
                                 f"output exceeds {MAX_OUTPUT_BYTES} bytes")
            encoded = json.dumps(response, allow_nan=False)
        stdout.write(encoded + "\n")
        stdout.flush()
        if not keep_going:
            return


def main() -> int:
    serve()
    return 0


if __name__ == "__main__":
    sys.exit(main())
