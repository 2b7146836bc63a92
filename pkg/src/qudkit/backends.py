"""Pluggable backend layer: generation, embedding, span prediction,
classification, POS tagging.

This module is the concurrency boundary of the toolkit. Callers go through
BackendRunner, which provides content-addressed caching (write-through file
cache), deduplication of identical in-flight requests, bounded retries with
exponential backoff, a token-bucket rate limiter, and a per-backend in-flight
cap. Deterministic mocks live here too so the whole pipeline can run at desk
scale without paid APIs.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .corpus import tokenize
from .errors import (
    BackendError,
    BackendUnavailableError,
    ConfigError,
    OverLengthError,
    ProtocolError,
    RetryableBackendError,
    ScriptedMissError,
)


def canonical_json(obj: Any) -> str:
    """Sorted-key, tight-separator JSON; the cache/key canonical form."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=True, separators=(",", ":"))


def content_key(backend_id: str, request: Mapping[str, Any]) -> str:
    return hashlib.sha256((backend_id + canonical_json(request)).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class BackendDescriptor:
    kind: str  # generation | embedding | span | classifier | tagger
    name: str
    endpoint: str | None = None
    params: tuple[tuple[str, Any], ...] = ()

    @classmethod
    def create(cls, kind: str, name: str, endpoint: str | None = None, params: Mapping[str, Any] | None = None):
        items = tuple(sorted((params or {}).items()))
        return cls(kind=kind, name=name, endpoint=endpoint, params=items)

    @property
    def backend_id(self) -> str:
        payload = {
            "kind": self.kind,
            "name": self.name,
            "endpoint": self.endpoint,
            "params": dict(self.params),
        }
        return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()[:16]


# ------------------------------------------------------------------ cache


class FileCache:
    """Directory of JSON files named by hex content key."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> dict | None:
        path = self._path(key)
        with self._lock:
            if not path.exists():
                return None
            entry = json.loads(path.read_text(encoding="utf-8"))
        return entry["response"]

    def put(self, key: str, request: Mapping[str, Any], response: Mapping[str, Any]) -> None:
        entry = {
            "key": key,
            "request": json.loads(canonical_json(request)),
            "response": json.loads(canonical_json(response)),
            "created_at": time.time(),
        }
        tmp = self._path(key).with_suffix(".tmp")
        with self._lock:
            tmp.write_text(json.dumps(entry, sort_keys=True), encoding="utf-8")
            os.replace(tmp, self._path(key))


class TokenBucket:
    """requests/minute limiter; acquire() blocks until a token is free."""

    def __init__(self, per_minute: float, capacity: float | None = None, clock=time.monotonic, sleeper=time.sleep):
        if per_minute <= 0:
            raise ConfigError("rate must be positive")
        self.rate = per_minute / 60.0
        self.capacity = capacity if capacity is not None else max(per_minute / 60.0, 1.0)
        self.tokens = self.capacity
        self.clock = clock
        self.sleeper = sleeper
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self._last) * self.rate)
                self._last = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            self.sleeper(wait)


# ------------------------------------------------------------------ runner


class _InFlight:
    __slots__ = ("event", "response", "error")

    def __init__(self):
        self.event = threading.Event()
        self.response: dict | None = None
        self.error: BaseException | None = None


class BackendRunner:
    """Cache-first dispatcher with request coalescing and bounded retries.

    Rate limits (requests/minute) and the in-flight cap apply per backend;
    pass rate_limits as {backend_id: per_minute}.
    """

    def __init__(
        self,
        cache: FileCache | None = None,
        rate_limits: Mapping[str, float] | None = None,
        max_in_flight: int = 8,
        retries: int = 3,
        backoff_base: float = 0.05,
        sleeper=time.sleep,
    ):
        self.cache = cache
        self.retries = retries
        self.backoff_base = backoff_base
        self.sleeper = sleeper
        self.max_in_flight = max_in_flight
        self._rate_limiters: dict[str, TokenBucket] = {
            backend_id: TokenBucket(per_minute, sleeper=sleeper)
            for backend_id, per_minute in (rate_limits or {}).items()
        }
        self._semaphores: dict[str, threading.BoundedSemaphore] = {}
        self._state_lock = threading.Lock()
        self._inflight: dict[str, _InFlight] = {}
        self._inflight_lock = threading.Lock()

    def _backend_state(self, backend_id: str) -> tuple[threading.BoundedSemaphore, TokenBucket | None]:
        with self._state_lock:
            semaphore = self._semaphores.get(backend_id)
            if semaphore is None:
                semaphore = threading.BoundedSemaphore(self.max_in_flight)
                self._semaphores[backend_id] = semaphore
            return semaphore, self._rate_limiters.get(backend_id)

    def call(self, backend, request: Mapping[str, Any]) -> dict:
        key = content_key(backend.descriptor.backend_id, request)
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return hit

        with self._inflight_lock:
            existing = self._inflight.get(key)
            if existing is None:
                mine = _InFlight()
                self._inflight[key] = mine
            else:
                mine = None
        if mine is None:
            existing.event.wait()
            if existing.error is not None:
                raise existing.error
            return existing.response

        try:
            response = self._dispatch(backend, request)
            if self.cache is not None:
                self.cache.put(key, request, response)
            mine.response = response
            return response
        except BaseException as exc:
            mine.error = exc
            raise
        finally:
            with self._inflight_lock:
                self._inflight.pop(key, None)
            mine.event.set()

    def _dispatch(self, backend, request: Mapping[str, Any]) -> dict:
        semaphore, rate_limiter = self._backend_state(backend.descriptor.backend_id)
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt > 0:
                self.sleeper(self.backoff_base * (2 ** (attempt - 1)))
            if rate_limiter is not None:
                rate_limiter.acquire()
            with semaphore:
                try:
                    response = backend.raw_call(dict(request))
                except RetryableBackendError as exc:
                    last_error = exc
                    continue
            if not isinstance(response, dict):
                raise ProtocolError(f"backend {backend.descriptor.name} returned {type(response).__name__}")
            return response
        raise BackendUnavailableError(
            f"backend {backend.descriptor.name}: retries exhausted ({last_error})"
        )


# -------------------------------------------------------------- generation


class ScriptedMockGeneration:
    """Deterministic generation backend driven by a prompt -> text script.

    Unknown prompts hit the configured fallback: "error" raises, "fixed"
    returns fixed_text, "echo" returns a deterministic function of the prompt
    hash. Optional fail_times makes the first N raw calls raise a retryable
    error (for retry tests); max_prompt_chars simulates a context limit.
    """

    def __init__(
        self,
        script: Mapping[str, str] | None = None,
        fallback: str = "error",
        fixed_text: str = "",
        fail_times: int = 0,
        max_prompt_chars: int | None = None,
        name: str = "scripted-mock",
    ):
        if fallback not in ("error", "fixed", "echo"):
            raise ConfigError(f"unknown fallback {fallback!r}")
        self.script = dict(script or {})
        self.fallback = fallback
        self.fixed_text = fixed_text
        self._fail_remaining = fail_times
        self.max_prompt_chars = max_prompt_chars
        self.dispatch_count = 0
        self._lock = threading.Lock()
        script_sha = hashlib.sha256(canonical_json(self.script).encode("utf-8")).hexdigest()[:12]
        self.descriptor = BackendDescriptor.create(
            "generation",
            name,
            params={
                "script_sha": script_sha,
                "fallback": fallback,
                "fixed_text": fixed_text,
                "max_prompt_chars": max_prompt_chars,
            },
        )

    def raw_call(self, request: Mapping[str, Any]) -> dict:
        with self._lock:
            self.dispatch_count += 1
            if self._fail_remaining > 0:
                self._fail_remaining -= 1
                raise RetryableBackendError("scripted transient failure")
        prompt = request["prompt"]
        if self.max_prompt_chars is not None and len(prompt) > self.max_prompt_chars:
            raise OverLengthError(
                f"prompt of {len(prompt)} chars exceeds limit {self.max_prompt_chars}"
            )
        if prompt in self.script:
            text = self.script[prompt]
        elif self.fallback == "fixed":
            text = self.fixed_text
        elif self.fallback == "echo":
            text = "echo-" + hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:12]
        else:
            raise ScriptedMissError(f"no scripted response for prompt hash "
                                    f"{hashlib.sha256(prompt.encode('utf-8')).hexdigest()[:12]}")
        return {"text": text, "finish_reason": "stop"}


class RemoteCompletionBackend:
    """JSON-over-HTTP completion client (OpenAI-compatible completions shape).

    The API key is read from an environment variable named in the registry,
    never stored in descriptors or cache keys.
    """

    def __init__(self, endpoint: str, model: str, credentials_env: str = "", timeout: float = 60.0, name: str = "remote"):
        self.endpoint = endpoint
        self.model = model
        self.credentials_env = credentials_env
        self.timeout = timeout
        self.descriptor = BackendDescriptor.create(
            "generation", name, endpoint=endpoint, params={"model": model}
        )

    def raw_call(self, request: Mapping[str, Any]) -> dict:
        import httpx

        headers = {}
        if self.credentials_env:
            token = os.environ.get(self.credentials_env)
            if not token:
                raise ConfigError(f"credentials env var {self.credentials_env} is unset")
            headers["Authorization"] = f"Bearer {token}"
        payload = {
            "model": self.model,
            "prompt": request["prompt"],
            "max_tokens": request.get("max_tokens", 128),
            "temperature": request.get("temperature", 0.0),
        }
        if request.get("stop"):
            payload["stop"] = list(request["stop"])
        try:
            resp = httpx.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)
        except httpx.TimeoutException as exc:
            raise RetryableBackendError(f"timeout calling {self.endpoint}") from exc
        except httpx.HTTPError as exc:
            raise RetryableBackendError(str(exc)) from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise RetryableBackendError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            body = resp.text[:200]
            if "context" in body.lower() and "length" in body.lower():
                raise OverLengthError(body)
            raise BackendError(f"HTTP {resp.status_code}: {body}")
        try:
            data = resp.json()
            choice = data["choices"][0]
            return {"text": choice["text"], "finish_reason": choice.get("finish_reason", "stop")}
        except (KeyError, IndexError, ValueError) as exc:
            raise ProtocolError(f"malformed completion response: {exc}") from exc


# --------------------------------------------------------------- embedding


class HashEmbeddingBackend:
    """Deterministic per-token embeddings derived from SHA-256 digests.

    Vectors have strictly positive entries, so cosines stay in (0, 1] and
    identical tokens match exactly. Stands in for a learned embedder at desk
    scale; the rescaling baseline it reports is configurable.
    """

    def __init__(self, dim: int = 32, baseline: float = 0.0, name: str = "hash-embed"):
        self.dim = dim
        self.baseline = baseline
        self.descriptor = BackendDescriptor.create(
            "embedding", name, params={"dim": dim, "baseline": baseline}
        )

    def _vector(self, token: str) -> np.ndarray:
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        reps = (self.dim // len(digest)) + 1
        raw = np.frombuffer((digest * reps)[: self.dim], dtype=np.uint8)
        return raw.astype(np.float64) + 1.0

    def encode(self, text: str) -> tuple[list[str], np.ndarray]:
        tokens = tokenize(text)
        if not tokens:
            return [], np.zeros((0, self.dim))
        return tokens, np.stack([self._vector(t) for t in tokens])


class ScriptedEmbeddingBackend:
    """Token -> vector table; unknown tokens get zeros."""

    def __init__(self, table: Mapping[str, Any], baseline: float = 0.0, name: str = "scripted-embed"):
        self.table = {k: np.asarray(v, dtype=float) for k, v in table.items()}
        self.dim = len(next(iter(self.table.values())))
        self.baseline = baseline
        table_sha = hashlib.sha256(
            canonical_json({k: list(map(float, v)) for k, v in self.table.items()}).encode()
        ).hexdigest()[:12]
        self.descriptor = BackendDescriptor.create(
            "embedding", name, params={"table_sha": table_sha, "baseline": baseline}
        )

    def encode(self, text: str) -> tuple[list[str], np.ndarray]:
        tokens = tokenize(text)
        if not tokens:
            return [], np.zeros((0, self.dim))
        return tokens, np.stack([self.table.get(t, np.zeros(self.dim)) for t in tokens])


# ----------------------------------------------------------- span predictors


class WholeSentenceSpanPredictor:
    """Baseline predictor: the whole anchor sentence is the target."""

    def __init__(self, name: str = "whole-sentence"):
        self.descriptor = BackendDescriptor.create("span", name)

    def predict(self, anchor_tokens: list[str], context: list[str]) -> tuple[int, int]:
        return 0, len(anchor_tokens)


class ScriptedSpanPredictor:
    """Predicts spans from an anchor-text lookup table (tests/desk runs).

    Table values may be out of bounds on purpose, to exercise clamping.
    """

    def __init__(self, table: Mapping[str, tuple[int, int]], name: str = "scripted-span"):
        self.table = dict(table)
        table_sha = hashlib.sha256(canonical_json({k: list(v) for k, v in self.table.items()}).encode()).hexdigest()[:12]
        self.descriptor = BackendDescriptor.create("span", name, params={"table_sha": table_sha})

    def predict(self, anchor_tokens: list[str], context: list[str]) -> tuple[int, int]:
        key = " ".join(anchor_tokens)
        if key in self.table:
            return tuple(self.table[key])
        return 0, len(anchor_tokens)


# -------------------------------------------------------------- classifiers


class ScriptedClassifierBackend:
    def __init__(self, table: Mapping[str, str], default: str = "Other", name: str = "scripted-classifier"):
        self.table = dict(table)
        self.default = default
        table_sha = hashlib.sha256(canonical_json(self.table).encode()).hexdigest()[:12]
        self.descriptor = BackendDescriptor.create(
            "classifier", name, params={"table_sha": table_sha, "default": default}
        )

    def classify(self, question: str) -> str:
        return self.table.get(question, self.default)


class HeuristicQuestionClassifier:
    """Rule-based question typing over wh-patterns; a desk-scale stand-in
    for a learned classifier behind the same contract."""

    def __init__(self, name: str = "heuristic-classifier"):
        self.descriptor = BackendDescriptor.create("classifier", name, params={"rules": "wh-v1"})

    def classify(self, question: str) -> str:
        q = question.lower().strip()
        if not q:
            return "Other"
        if "example" in q or "instance" in q:
            return "Example"
        if q.startswith("why") or "reason" in q:
            return "Cause"
        if (
            q.startswith("what if")
            or q.startswith("what happens")
            or q.startswith("what happened")
            or "consequence" in q
            or "result" in q
        ):
            return "Consequence"
        if q.startswith("how many") or q.startswith("how much") or "to what extent" in q:
            return "Extent"
        if q.startswith("how"):
            return "Procedural"
        if "difference" in q or "compare" in q or "similar" in q:
            return "Comparison"
        if q.split()[0] in (
            "is", "are", "was", "were", "does", "do", "did",
            "can", "could", "will", "would", "has", "have",
        ):
            return "Verification"
        if q.split()[0] in ("what", "who", "whom", "whose", "where", "when", "which"):
            return "Concept"
        return "Other"


# --------------------------------------------------------------- POS tagger


_CLOSED_CLASS = {
    "the": "DT", "a": "DT", "an": "DT", "this": "DT", "that": "DT", "these": "DT", "those": "DT",
    "he": "PRP", "she": "PRP", "it": "PRP", "they": "PRP", "we": "PRP", "i": "PRP", "you": "PRP",
    "his": "PRP$", "her": "PRP$", "its": "PRP$", "their": "PRP$", "our": "PRP$", "my": "PRP$",
    "in": "IN", "on": "IN", "at": "IN", "of": "IN", "for": "IN", "with": "IN", "from": "IN",
    "to": "TO", "and": "CC", "or": "CC", "but": "CC",
    "is": "VBZ", "are": "VBP", "was": "VBD", "were": "VBD", "be": "VB", "been": "VBN", "being": "VBG",
    "has": "VBZ", "have": "VBP", "had": "VBD", "do": "VBP", "does": "VBZ", "did": "VBD",
    "will": "MD", "would": "MD", "can": "MD", "could": "MD", "should": "MD", "may": "MD", "might": "MD",
    "not": "RB", "very": "RB", "also": "RB",
}

_COMMON_VERBS = {
    "run", "runs", "ran", "running", "say", "says", "said", "make", "makes", "made",
    "go", "goes", "went", "get", "gets", "got", "help", "helps", "helped",
    "explain", "explains", "explained", "use", "uses", "used", "copy", "copies", "copied",
    "sing", "sings", "dive", "dives", "nap", "naps", "wait", "waits",
}


class SimpleLexiconTagger:
    """Closed-class lexicon plus suffix heuristics, Penn Treebank tagset.

    Coarse by design: it powers desk-scale runs; real studies plug in a
    trained tagger behind the same `tag` contract.
    """

    def __init__(self, name: str = "lexicon-tagger"):
        self.descriptor = BackendDescriptor.create("tagger", name, params={"rules": "suffix-v1"})

    def tag(self, tokens: list[str]) -> list[str]:
        tags: list[str] = []
        for i, tok in enumerate(tokens):
            low = tok.lower()
            if not any(ch.isalnum() for ch in tok):
                tags.append(tok if len(tok) == 1 else ":")
            elif low in _CLOSED_CLASS:
                tags.append(_CLOSED_CLASS[low])
            elif tok[0].isupper() and i > 0:
                tags.append("NNPS" if tok.endswith("s") and len(tok) > 3 else "NNP")
            elif any(ch.isdigit() for ch in tok):
                tags.append("CD")
            elif low in _COMMON_VERBS:
                if low.endswith("ing"):
                    tags.append("VBG")
                elif low.endswith("ed"):
                    tags.append("VBD")
                elif low.endswith("s"):
                    tags.append("VBZ")
                else:
                    tags.append("VB")
            elif low.endswith("ly"):
                tags.append("RB")
            elif low.endswith("ing"):
                tags.append("VBG")
            elif low.endswith("ed"):
                tags.append("VBD")
            elif low.endswith("s") and len(low) > 3:
                tags.append("NNS")
            else:
                tags.append("NN")
        return tags


# ---------------------------------------------------------------- registry

_GENERATION_KINDS = {"scripted_mock", "remote_completion"}


def build_backend(role: str, config: Mapping[str, Any]):
    """Instantiate a backend from a registry entry {kind, params?, ...}."""
    kind = config.get("kind")
    params = dict(config.get("params", {}))
    if role == "generation":
        if kind == "scripted_mock":
            return ScriptedMockGeneration(**params)
        if kind == "remote_completion":
            return RemoteCompletionBackend(
                endpoint=config["endpoint"],
                model=params.get("model", ""),
                credentials_env=config.get("credentials_env", ""),
            )
    elif role == "embedding":
        if kind == "hash":
            return HashEmbeddingBackend(**params)
        if kind == "scripted":
            return ScriptedEmbeddingBackend(**params)
    elif role == "span":
        if kind == "whole_sentence":
            return WholeSentenceSpanPredictor()
        if kind == "scripted":
            return ScriptedSpanPredictor(**params)
    elif role == "classifier":
        if kind == "heuristic":
            return HeuristicQuestionClassifier()
        if kind == "scripted":
            return ScriptedClassifierBackend(**params)
    elif role == "tagger":
        if kind == "lexicon":
            return SimpleLexiconTagger()
    raise ConfigError(f"unknown backend kind {kind!r} for role {role!r}")
