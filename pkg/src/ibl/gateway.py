"""Completion backends: a live chat-completions endpoint, a recorded-fixture
replay store, and a scripted mock for tests. All three answer the same
``complete`` call."""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence, Union

import requests

DEFAULT_API_KEY_ENV = "IBL_API_KEY"
DEFAULT_MAX_OUTPUT_TOKENS = 2048  # sized to the longest observed generated model, with margin


class GatewayError(Exception):
    """Base for completion-backend failures."""


class MissingFixtureError(GatewayError):
    pass


class ScriptedExhaustedError(GatewayError):
    pass


class AuthFailureError(GatewayError):
    pass


class ExhaustedRetriesError(GatewayError):
    pass


class MalformedResponseError(GatewayError):
    pass


@dataclass(frozen=True)
class CompletionRequest:
    model_id: str
    system_text: str
    user_text: str
    temperature: float = 1.0
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS
    attempt_tag: str = ""

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must lie in [0, 2]")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")


def encode_tag(tag: str) -> str:
    """Map a logical attempt tag (slash-separated) to a flat, safe file stem."""
    return tag.replace("/", "__")


def _check_tag(tag: str) -> None:
    if not tag:
        raise ValueError("attempt_tag must be non-empty")
    if "/" in tag or "\\" in tag or ".." in tag:
        raise ValueError(f"attempt_tag {tag!r} contains path separators")


def fixture_path(directory: str | Path, attempt_tag: str) -> Path:
    _check_tag(attempt_tag)
    return Path(directory) / f"{attempt_tag}.txt"


def record_fixture(directory: str | Path, attempt_tag: str, response: str, force: bool = False) -> Path:
    """Persist one response as ``<attempt_tag>.txt``; refuses to overwrite unless forced."""
    path = fixture_path(directory, attempt_tag)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.exists() and not force:
        raise FileExistsError(f"fixture {path} already recorded (pass force=True to overwrite)")
    path.write_text(response, encoding="utf-8")
    return path


def load_fixture(directory: str | Path, attempt_tag: str) -> str:
    path = fixture_path(directory, attempt_tag)
    if not path.exists():
        raise MissingFixtureError(f"no fixture for attempt_tag {attempt_tag!r} in {directory}")
    return path.read_text(encoding="utf-8")


class ScriptedBackend:
    """Serves a fixed response list, in order; exhausted when the list runs out."""

    def __init__(self, responses: Sequence[str]):
        self._responses = list(responses)
        self._next = 0
        self._lock = threading.Lock()

    def complete(self, req: CompletionRequest) -> str:
        with self._lock:
            if self._next >= len(self._responses):
                raise ScriptedExhaustedError(
                    f"scripted backend exhausted after {len(self._responses)} responses"
                )
            text = self._responses[self._next]
            self._next += 1
            return text


class ReplayBackend:
    """Serves previously recorded responses keyed by attempt tag."""

    def __init__(self, fixture_dir: str | Path):
        self.fixture_dir = Path(fixture_dir)

    def complete(self, req: CompletionRequest) -> str:
        return load_fixture(self.fixture_dir, encode_tag(req.attempt_tag))


def _default_transport(url: str, payload: dict, headers: dict, timeout: float) -> requests.Response:
    return requests.post(url, json=payload, headers=headers, timeout=timeout)


class LiveBackend:
    """OpenAI-compatible chat-completions client with retry backoff.

    Transient failures (connection errors, 429, 5xx) are retried with
    exponential backoff (base 1 s, factor 2, at most 5 attempts), honoring
    Retry-After hints; auth failures and malformed replies are not retried.
    With ``record_dir`` set, every response is persisted by attempt tag.
    """

    def __init__(
        self,
        endpoint_url: str,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        record_dir: str | Path | None = None,
        max_in_flight: int = 4,
        max_attempts: int = 5,
        backoff_base: float = 1.0,
        backoff_factor: float = 2.0,
        timeout: float = 120.0,
        transport: Callable[..., requests.Response] | None = None,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        self.endpoint_url = endpoint_url
        self.api_key_env = api_key_env
        self.record_dir = Path(record_dir) if record_dir else None
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.backoff_factor = backoff_factor
        self.timeout = timeout
        self._transport = transport or _default_transport
        self._sleep = sleeper
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def _credential(self) -> str:
        key = os.environ.get(self.api_key_env, "")
        if not key:
            raise AuthFailureError(f"environment variable {self.api_key_env} is not set")
        return key

    def complete(self, req: CompletionRequest) -> str:
        key = self._credential()
        payload = {
            "model": req.model_id,
            "messages": [
                {"role": "system", "content": req.system_text},
                {"role": "user", "content": req.user_text},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        }
        headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
        last_error: Exception | None = None
        last_delay = 0.0
        for attempt in range(self.max_attempts):
            try:
                with self._slots:
                    response = self._transport(self.endpoint_url, payload, headers, self.timeout)
            except requests.RequestException as exc:
                last_error = exc
                response = None
            if response is not None:
                if response.status_code in (401, 403):
                    raise AuthFailureError(f"authentication failed (HTTP {response.status_code})")
                if response.status_code == 200:
                    text = self._extract_text(response)
                    if self.record_dir is not None:
                        record_fixture(self.record_dir, encode_tag(req.attempt_tag), text)
                    return text
                if response.status_code == 429 or response.status_code >= 500:
                    last_error = GatewayError(f"HTTP {response.status_code}")
                else:
                    raise GatewayError(f"HTTP {response.status_code}: {response.text[:500]}")
            if attempt + 1 >= self.max_attempts:
                break
            delay = self.backoff_base * self.backoff_factor ** attempt
            hint = _retry_after_seconds(response)
            last_delay = max(delay, hint, last_delay)  # keeps the schedule nondecreasing
            self._sleep(last_delay)
        raise ExhaustedRetriesError(
            f"gave up after {self.max_attempts} attempts: {last_error}"
        )

    @staticmethod
    def _extract_text(response: requests.Response) -> str:
        try:
            body = response.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError(f"cannot read choices[0].message.content: {exc}") from exc
        if not isinstance(text, str):
            raise MalformedResponseError(f"message content is {type(text).__name__}, not text")
        return text


def _retry_after_seconds(response: requests.Response | None) -> float:
    if response is None:
        return 0.0
    try:
        return float(response.headers.get("Retry-After", 0))
    except (TypeError, ValueError):
        return 0.0


Backend = Union[LiveBackend, ReplayBackend, ScriptedBackend]


def complete(backend: Backend, req: CompletionRequest) -> str:
    """Run one completion against whichever backend kind was configured."""
    return backend.complete(req)
