"""Client side of the guest-runner line protocol.

The runner is a separate subprocess speaking one JSON object per line over
stdin/stdout: load a program, predict on feature-name->value rows, shut down.
A crash shows up as EOF and is mapped to a runtime failure; the next call
respawns the process.
"""

from __future__ import annotations

import json
import math
import shutil
import subprocess
import sys
from typing import Mapping, Sequence

PROTOCOL_VERSION = 1
DEFAULT_TIME_LIMIT_MS = 10_000


class GuestRunnerUnavailableError(RuntimeError):
    """The runner subprocess could not be started."""


def default_runner_command() -> list[str]:
    exe = shutil.which("ibl-guest-runner")
    if exe:
        return [exe]
    return [sys.executable, "-m", "ibl_guest_runner"]


class GuestRunner:
    """Handle on one runner subprocess. Requests are serialized per handle;
    spawn several handles for parallel candidates."""

    def __init__(self, command: Sequence[str] | None = None,
                 time_limit_ms: int = DEFAULT_TIME_LIMIT_MS):
        self.command = list(command) if command else default_runner_command()
        self.time_limit_ms = time_limit_ms
        self._proc: subprocess.Popen | None = None

    def _ensure_started(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            return
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise GuestRunnerUnavailableError(
                f"cannot start guest runner {self.command!r}: {exc}"
            ) from exc

    def _request(self, message: dict) -> dict:
        self._ensure_started()
        assert self._proc is not None and self._proc.stdin and self._proc.stdout
        try:
            self._proc.stdin.write(json.dumps(message) + "\n")
            self._proc.stdin.flush()
            reply = self._proc.stdout.readline()
        except (BrokenPipeError, OSError):
            reply = ""
        if not reply:
            self._drop()
            return {"v": PROTOCOL_VERSION, "status": "runtime_failure",
                    "detail": "guest runner terminated unexpectedly"}
        try:
            return json.loads(reply)
        except json.JSONDecodeError:
            self._drop()
            return {"v": PROTOCOL_VERSION, "status": "runtime_failure",
                    "detail": f"unreadable runner reply: {reply[:200]!r}"}

    def load(self, source: str, time_limit_ms: int | None = None) -> dict:
        return self._request({
            "v": PROTOCOL_VERSION,
            "op": "load",
            "source": source,
            "time_limit_ms": time_limit_ms or self.time_limit_ms,
        })

    def predict(self, rows: Sequence[Mapping[str, float]],
                time_limit_ms: int | None = None) -> dict:
        reply = self._request({
            "v": PROTOCOL_VERSION,
            "op": "predict",
            "rows": [dict(r) for r in rows],
            "time_limit_ms": time_limit_ms or self.time_limit_ms,
        })
        if reply.get("status") == "ok":
            # non-finite values travel as null to keep the wire standard JSON
            reply["values"] = [math.nan if v is None else float(v)
                               for v in reply.get("values", [])]
        return reply

    def shutdown(self) -> None:
        if self._proc is None or self._proc.poll() is not None:
            return
        try:
            self._proc.stdin.write(json.dumps({"v": PROTOCOL_VERSION, "op": "shutdown"}) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            pass
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
        self._proc = None

    def _drop(self) -> None:
        if self._proc is not None:
            try:
                self._proc.kill()
            except OSError:
                pass
        self._proc = None

    def close(self) -> None:
        self.shutdown()
        self._drop()

    def __enter__(self) -> "GuestRunner":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
