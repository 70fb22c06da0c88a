"""LLM transport: text generation and continuation scoring.

One client fronts an OpenAI-compatible HTTP backend or a deterministic
mock, adding retries, a content-addressed response cache, a per-purpose
call ledger, and a parallelism bound. The cache persists to disk when a
directory is configured, which makes repository builds resumable and lets
repeated runs issue zero new backend calls.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path

import requests

from .errors import BackendUnavailable, ContextOverflow, ScoringUnsupported

logger = logging.getLogger(__name__)

PURPOSES = ("rephrase", "summarize", "qa")
LLM_KEY_ENV = "LANGREPO_LLM_KEY"

_NUMBERED_LINE = re.compile(r"^\s*(\d+)[.)]\s*(.*\S)\s*$")
_CONTEXT_OVERFLOW = re.compile(r"context|too (?:long|many tokens)|maximum.*length", re.I)


@dataclass(frozen=True)
class GenerationRequest:
    """Inputs of one text-generation call.

    attempt is a deliberate-retry nonce: it participates in the cache key,
    so re-asking after a bad reply reaches the backend instead of the cache.
    """

    prompt: str
    max_new_tokens: int = 512
    temperature: float = 0.0
    stop: tuple[str, ...] | None = None
    purpose_tag: str = "qa"
    attempt: int = 0

    def __post_init__(self) -> None:
        if self.purpose_tag not in PURPOSES:
            raise ValueError(f"purpose_tag must be one of {PURPOSES}")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class ScoreRequest:
    """Prefix plus the continuation whose log-likelihood is wanted."""

    prefix: str
    continuation: str

    def __post_init__(self) -> None:
        if not self.continuation:
            raise ValueError("continuation must be non-empty")


class CallLedger:
    """Thread-safe counters of backend calls per purpose, plus cache hits."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.counters = {purpose: 0 for purpose in PURPOSES}
        self.cache_hits = 0

    def record_call(self, purpose: str) -> None:
        with self._lock:
            self.counters[purpose] += 1

    def record_hit(self) -> None:
        with self._lock:
            self.cache_hits += 1

    def total_calls(self) -> int:
        with self._lock:
            return sum(self.counters.values())

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            snap = dict(self.counters)
            snap["cache_hits"] = self.cache_hits
            return snap


class ResponseCache:
    """In-memory map with an optional content-addressed disk mirror."""

    def __init__(self, directory: str | Path | None = None):
        self._lock = threading.Lock()
        self._mem: dict[str, dict] = {}
        self.directory = Path(directory) if directory else None
        if self.directory:
            self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key_for(payload: dict) -> str:
        blob = json.dumps(payload, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def _path(self, key: str) -> Path:
        assert self.directory is not None
        return self.directory / key[:2] / f"{key}.json"

    def get(self, key: str) -> dict | None:
        with self._lock:
            if key in self._mem:
                return self._mem[key]
        if self.directory:
            path = self._path(key)
            if path.exists():
                try:
                    value = json.loads(path.read_text(encoding="utf-8"))
                except (OSError, json.JSONDecodeError):
                    return None
                with self._lock:
                    self._mem[key] = value
                return value
        return None

    def put(self, key: str, value: dict) -> None:
        with self._lock:
            self._mem[key] = value
        if self.directory:
            path = self._path(key)
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(value, ensure_ascii=False), encoding="utf-8")
            os.replace(tmp, path)


class MockBackend:
    """Deterministic offline backend; a pure function of (prompt, params).

    Replies come from, in priority order: an exact-match scripted table,
    a per-purpose reply table, then built-in rules that keep the pipeline
    flowing (rephrase echoes each group's first member, summarize emits a
    digest roughly proportional to the prompt length, QA answers "A").
    Scripted values may be lists indexed by the request's attempt nonce.
    """

    backend_id = "mock"
    model = "mock"
    supports_scoring = True

    def __init__(
        self,
        scripted: dict[str, str | list[str]] | None = None,
        scripted_scores: dict[tuple[str, str], float] | None = None,
        purpose_replies: dict[str, str | list[str]] | None = None,
    ):
        self.scripted = scripted or {}
        self.scripted_scores = scripted_scores or {}
        self.purpose_replies = purpose_replies or {}

    def prepare_prompt(self, prompt: str) -> str:
        return prompt

    @staticmethod
    def _pick(value: str | list[str], attempt: int) -> str:
        if isinstance(value, str):
            return value
        return value[min(attempt, len(value) - 1)]

    def complete(self, req: GenerationRequest) -> str:
        if req.prompt in self.scripted:
            return self._pick(self.scripted[req.prompt], req.attempt)
        if req.purpose_tag in self.purpose_replies:
            return self._pick(self.purpose_replies[req.purpose_tag], req.attempt)
        if req.purpose_tag == "rephrase":
            return self._default_rephrase(req.prompt)
        if req.purpose_tag == "summarize":
            return self._default_summarize(req.prompt)
        return "A"

    @staticmethod
    def _default_rephrase(prompt: str) -> str:
        firsts = []
        for line in prompt.splitlines():
            m = _NUMBERED_LINE.match(line)
            if m:
                firsts.append(m.group(2).split(" | ")[0].strip())
        if not firsts:
            firsts = ["nothing to rephrase"]
        return "\n".join(f"{i + 1}. {text}" for i, text in enumerate(firsts))

    @staticmethod
    def _default_summarize(prompt: str) -> str:
        digest = hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:10]
        unit = f"Summary {digest} of this segment. "
        target = max(len(unit), len(prompt) // 6)
        return (unit * (target // len(unit) + 1))[:target].rstrip()

    def score(self, prefix: str, continuation: str) -> float:
        if (prefix, continuation) in self.scripted_scores:
            return self.scripted_scores[(prefix, continuation)]
        return -len(continuation) / 10.0


class HttpBackend:
    """OpenAI-compatible chat endpoint, with completions-based scoring.

    Generation POSTs {model, messages, temperature, max_tokens} to
    <base_url>/chat/completions. Scoring POSTs the concatenated text to
    <base_url>/completions with echo and logprobs and sums the token
    log-probabilities that fall inside the continuation. The API key is
    read from LANGREPO_LLM_KEY.
    """

    supports_scoring = True

    def __init__(
        self,
        base_url: str,
        model: str,
        max_retries: int = 2,
        backoff_s: float = 1.0,
        timeout_s: float = 120.0,
        wrap_instructions: bool = True,
        auth_header: str = "Authorization",
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self.timeout_s = timeout_s
        self.wrap_instructions = wrap_instructions
        self.auth_header = auth_header
        self.session = session or requests.Session()
        self.backend_id = f"http:{self.base_url}"

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(LLM_KEY_ENV, "")
        if key:
            value = f"Bearer {key}" if self.auth_header == "Authorization" else key
            headers[self.auth_header] = value
        return headers

    def prepare_prompt(self, prompt: str) -> str:
        if self.wrap_instructions and not prompt.startswith("[INST]"):
            return f"[INST] {prompt} [/INST]"
        return prompt

    def _post(self, path: str, body: dict) -> dict:
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                logger.warning("llm backend retry %d after: %s", attempt, last_error)
                time.sleep(self.backoff_s * 2 ** (attempt - 1))
            try:
                resp = self.session.post(
                    f"{self.base_url}/{path}",
                    json=body,
                    headers=self._headers(),
                    timeout=self.timeout_s,
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code == 200:
                try:
                    return resp.json()
                except ValueError as exc:
                    last_error = exc
                    continue
            text = resp.text[:500]
            if resp.status_code == 400 and _CONTEXT_OVERFLOW.search(text):
                raise ContextOverflow(f"backend rejected prompt as too long: {text}")
            if resp.status_code >= 500:
                last_error = BackendUnavailable(f"HTTP {resp.status_code}: {text}")
                continue
            raise BackendUnavailable(f"HTTP {resp.status_code}: {text}")
        raise BackendUnavailable(f"backend failed after {self.max_retries + 1} attempts: {last_error}")

    def complete(self, req: GenerationRequest) -> str:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_new_tokens,
        }
        if req.stop:
            body["stop"] = list(req.stop)
        data = self._post("chat/completions", body)
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable(f"malformed completion response: {exc}") from exc

    def score(self, prefix: str, continuation: str) -> float:
        body = {
            "model": self.model,
            "prompt": prefix + continuation,
            "max_tokens": 0,
            "echo": True,
            "logprobs": 0,
            "temperature": 0.0,
        }
        data = self._post("completions", body)
        try:
            lp = data["choices"][0]["logprobs"]
            token_logprobs = lp["token_logprobs"]
            offsets = lp["text_offset"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ScoringUnsupported(f"endpoint returned no echo logprobs: {exc}") from exc
        boundary = len(prefix)
        total = 0.0
        for logprob, offset in zip(token_logprobs, offsets):
            if offset >= boundary and logprob is not None:
                total += logprob
        return total


class LlmClient:
    """Caching, counting front-end over a backend.

    Identical requests are answered from the cache without touching the
    backend; concurrent identical misses collapse into a single call.
    """

    def __init__(
        self,
        backend,
        cache_dir: str | Path | None = None,
        ledger: CallLedger | None = None,
        max_parallel: int = 4,
    ):
        self.backend = backend
        self.cache = ResponseCache(cache_dir)
        self.ledger = ledger or CallLedger()
        self.max_parallel = max(1, max_parallel)
        self._sem = threading.BoundedSemaphore(self.max_parallel)
        self._stripes = [threading.Lock() for _ in range(64)]

    @property
    def backend_id(self) -> str:
        return self.backend.backend_id

    def _stripe(self, key: str) -> threading.Lock:
        return self._stripes[int(key[:8], 16) % len(self._stripes)]

    def generate(self, req: GenerationRequest) -> str:
        prompt = self.backend.prepare_prompt(req.prompt)
        key = ResponseCache.key_for(
            {
                "kind": "generate",
                "backend": self.backend.backend_id,
                "model": self.backend.model,
                "prompt": prompt,
                "max_new_tokens": req.max_new_tokens,
                "temperature": req.temperature,
                "stop": list(req.stop) if req.stop else None,
                "attempt": req.attempt,
            }
        )
        with self._stripe(key):
            cached = self.cache.get(key)
            if cached is not None:
                self.ledger.record_hit()
                return cached["text"]
            with self._sem:
                text = self.backend.complete(replace(req, prompt=prompt))
            self.cache.put(key, {"text": text})
            self.ledger.record_call(req.purpose_tag)
            return text

    def score(self, req: ScoreRequest) -> float:
        if not getattr(self.backend, "supports_scoring", False):
            raise ScoringUnsupported(f"backend {self.backend.backend_id} cannot score")
        key = ResponseCache.key_for(
            {
                "kind": "score",
                "backend": self.backend.backend_id,
                "model": self.backend.model,
                "prefix": req.prefix,
                "continuation": req.continuation,
            }
        )
        with self._stripe(key):
            cached = self.cache.get(key)
            if cached is not None:
                self.ledger.record_hit()
                return float(cached["score"])
            with self._sem:
                score = float(self.backend.score(req.prefix, req.continuation))
            self.cache.put(key, {"score": score})
            self.ledger.record_call("qa")
            return score
