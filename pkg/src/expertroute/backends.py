"""Backend handles: a deterministic scripted double and a chat-completions HTTP client.

Both kinds share :class:`Backend`, whose ``complete`` enforces the per-backend
in-flight cap and the call timeout. Handles may be shared by concurrent
pipelines and reused across event loops.
"""

from __future__ import annotations

import asyncio
import json
import logging
import os
import weakref
from contextlib import asynccontextmanager
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import httpx

from .errors import BackendTimeout, BackendUnavailable, ConfigError, ScenarioExhausted, TransportError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Step:
    """What a prompt is for; scripted backends key their replies on it."""

    template: str
    query_id: str
    layer: int | None = None
    attempt: int = 0


@dataclass(frozen=True)
class BackendSpec:
    backend_id: str
    kind: str  # "scripted" | "http"
    endpoint: str | None = None
    model_name: str | None = None
    auth: str | None = None  # name of the env var holding the API key
    script: str | None = None
    timeout: float = 60.0
    max_retries: int = 3
    max_in_flight: int = 4
    temperature: float = 0.0
    backoff: float = 0.5

    def __post_init__(self) -> None:
        if self.kind not in ("scripted", "http"):
            raise ConfigError(f"{self.backend_id}: unknown backend kind {self.kind!r}")
        if self.timeout <= 0:
            raise ConfigError(f"{self.backend_id}: timeout must be > 0")
        if self.max_in_flight < 1:
            raise ConfigError(f"{self.backend_id}: max_in_flight must be >= 1")
        if self.max_retries < 0:
            raise ConfigError(f"{self.backend_id}: max_retries must be >= 0")
        if self.kind == "http" and not (self.endpoint and self.model_name):
            raise ConfigError(f"{self.backend_id}: http backends need endpoint and model_name")

    def to_json(self) -> dict[str, Any]:
        return {k: v for k, v in asdict(self).items() if v is not None}


class Backend:
    def __init__(self, spec: BackendSpec) -> None:
        self.spec = spec
        self._semaphores: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()
        self.in_flight = 0
        self.peak_in_flight = 0
        self.calls = 0

    @property
    def backend_id(self) -> str:
        return self.spec.backend_id

    def _semaphore(self) -> asyncio.Semaphore:
        loop = asyncio.get_running_loop()
        sem = self._semaphores.get(loop)
        if sem is None:
            sem = self._semaphores[loop] = asyncio.Semaphore(self.spec.max_in_flight)
        return sem

    @asynccontextmanager
    async def _slot(self):
        async with self._semaphore():
            self.in_flight += 1
            self.peak_in_flight = max(self.peak_in_flight, self.in_flight)
            try:
                yield
            finally:
                self.in_flight -= 1

    async def complete(self, prompt: str, step: Step | None = None,
                       precheck: Callable[[], None] | None = None) -> str:
        """Send ``prompt``. ``precheck`` runs once a slot is held and may raise
        to abandon the call without contacting the backend."""
        async with self._slot():
            if precheck is not None:
                precheck()
            self.calls += 1
            return await self._complete(prompt, step)

    async def _complete(self, prompt: str, step: Step | None) -> str:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.backend_id!r})"


ReplyFn = Callable[[Step, str], str]


def _entry_matches(match: Mapping[str, Any], step: Step, prompt: str) -> bool:
    if "template" in match and match["template"] != step.template:
        return False
    if "query_id" in match and match["query_id"] != step.query_id:
        return False
    if "layer" in match and match["layer"] != step.layer:
        return False
    need = match.get("prompt_contains", [])
    if any(n not in prompt for n in ([need] if isinstance(need, str) else need)):
        return False
    avoid = match.get("prompt_lacks", [])
    if any(a in prompt for a in ([avoid] if isinstance(avoid, str) else avoid)):
        return False
    return True


class ScriptedBackend(Backend):
    """Replays programmed replies.

    ``script`` is either a list of scenario entries or a callable
    ``(step, prompt) -> reply``. A scenario entry is
    ``{"match": {...}, "reply": str}`` or ``{"match": {...}, "error": kind}``
    with optional ``"delay"`` seconds. Match keys are ``template``,
    ``query_id``, ``layer``, ``prompt_contains`` and ``prompt_lacks`` (the last
    two take a string or a list of strings); omitted keys match anything.
    When several entries match, the one at index ``step.attempt`` is used (the
    last one repeats), so a retry loop can be scripted as garbage-then-valid.
    """

    def __init__(self, spec: BackendSpec, script: Sequence[Mapping[str, Any]] | ReplyFn) -> None:
        super().__init__(spec)
        self.script = script

    @classmethod
    def from_script(cls, backend_id: str, script, **spec_kw) -> "ScriptedBackend":
        return cls(BackendSpec(backend_id=backend_id, kind="scripted", **spec_kw), script)

    async def _complete(self, prompt: str, step: Step | None) -> str:
        step = step or Step(template="", query_id="")
        try:
            return await asyncio.wait_for(self._reply(prompt, step), timeout=self.spec.timeout)
        except asyncio.TimeoutError:
            raise BackendTimeout(self.backend_id, f"timed out on {step.template}/{step.query_id}") from None

    async def _reply(self, prompt: str, step: Step) -> str:
        if callable(self.script):
            try:
                reply = self.script(step, prompt)
            except LookupError as exc:
                raise ScenarioExhausted(self.backend_id, f"no scripted reply for {step}: {exc!r}") from None
            if asyncio.iscoroutine(reply):
                reply = await reply
            return reply
        matching = [e for e in self.script if _entry_matches(e.get("match", {}), step, prompt)]
        if not matching:
            raise ScenarioExhausted(self.backend_id, f"no scripted reply for {step}")
        entry = matching[min(step.attempt, len(matching) - 1)]
        if entry.get("delay"):
            await asyncio.sleep(float(entry["delay"]))
        err = entry.get("error")
        if err == "timeout":
            raise BackendTimeout(self.backend_id, f"scripted timeout on {step.template}/{step.query_id}")
        if err == "unavailable":
            raise BackendUnavailable(self.backend_id, "scripted outage")
        if err:
            raise TransportError(self.backend_id, f"scripted {err}")
        return entry["reply"]


_RETRY_STATUS = {429, 500, 502, 503, 504}


class HttpBackend(Backend):
    """Chat-completions client: POST ``{model, messages, temperature}`` and read
    ``choices[0].message.content``. Retries transient failures with
    exponential backoff up to ``max_retries`` extra attempts."""

    def __init__(self, spec: BackendSpec, transport: httpx.AsyncBaseTransport | None = None) -> None:
        super().__init__(spec)
        self._transport = transport

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.spec.auth:
            key = os.environ.get(self.spec.auth)
            if not key:
                raise BackendUnavailable(self.backend_id, f"credential env var {self.spec.auth} is not set")
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def request_body(self, prompt: str) -> dict[str, Any]:
        return {
            "model": self.spec.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.spec.temperature,
        }

    async def _complete(self, prompt: str, step: Step | None) -> str:
        body = self.request_body(prompt)
        headers = self._headers()
        last: Exception | None = None
        async with httpx.AsyncClient(timeout=self.spec.timeout, transport=self._transport) as client:
            for attempt in range(self.spec.max_retries + 1):
                if attempt:
                    await asyncio.sleep(self.spec.backoff * 2 ** (attempt - 1))
                try:
                    resp = await client.post(self.spec.endpoint, json=body, headers=headers)
                except httpx.TimeoutException as exc:
                    last = BackendTimeout(self.backend_id, str(exc) or "request timed out")
                    continue
                except httpx.TransportError as exc:
                    last = TransportError(self.backend_id, f"{type(exc).__name__}: {exc}")
                    continue
                if resp.status_code in _RETRY_STATUS:
                    last = TransportError(self.backend_id, f"HTTP {resp.status_code}")
                    logger.debug("%s: HTTP %s, attempt %d", self.backend_id, resp.status_code, attempt + 1)
                    continue
                if resp.status_code >= 400:
                    raise TransportError(self.backend_id, f"HTTP {resp.status_code}: {resp.text[:200]}")
                try:
                    return resp.json()["choices"][0]["message"]["content"]
                except (ValueError, KeyError, IndexError, TypeError) as exc:
                    raise TransportError(self.backend_id, f"malformed completion body: {exc}") from exc
        assert last is not None
        raise last


def make_backend(spec: BackendSpec, base_dir: Path | None = None) -> Backend:
    if spec.kind == "http":
        return HttpBackend(spec)
    if not spec.script:
        raise ConfigError(f"{spec.backend_id}: scripted backends need a script path")
    path = Path(spec.script)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    try:
        script = json.loads(path.read_text("utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"{spec.backend_id}: script file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{spec.backend_id}: bad script file {path}: {exc}") from None
    return ScriptedBackend(spec, script)


_SPEC_KEYS = set(BackendSpec.__dataclass_fields__)


def parse_pool(obj: Mapping[str, Any], base_dir: Path | None = None) -> dict[str, Backend]:
    entries = obj.get("backends")
    if not isinstance(entries, list) or not entries:
        raise ConfigError("pool config needs a non-empty 'backends' list")
    pool: dict[str, Backend] = {}
    for entry in entries:
        if "api_key" in entry or "key" in entry:
            raise ConfigError("credentials must be given via an env var name in 'auth', never inline")
        unknown = set(entry) - _SPEC_KEYS
        if unknown:
            raise ConfigError(f"unknown backend keys: {sorted(unknown)}")
        try:
            spec = BackendSpec(**entry)
        except TypeError as exc:
            raise ConfigError(f"bad backend entry {entry}: {exc}") from None
        if spec.backend_id in pool:
            raise ConfigError(f"duplicate backend_id {spec.backend_id!r}")
        pool[spec.backend_id] = make_backend(spec, base_dir)
    return pool


def load_pool(path: str | Path) -> dict[str, Backend]:
    path = Path(path)
    try:
        obj = json.loads(path.read_text("utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"pool config not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"pool config {path} is not valid JSON: {exc}") from None
    return parse_pool(obj, base_dir=path.parent)
