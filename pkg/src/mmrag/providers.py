"""Provider layer: text embedding, chat completion, image-grounded chat.

Two backends per capability: an HTTP client speaking the common
chat-completions / embeddings wire shape, and a seed-deterministic mock.
Mocks are pure functions of (seed, inputs), so full pipeline runs under
mocks are bit-reproducible; every property test in the suite relies on
that. All providers bound their in-flight concurrency and expose call
counters so tests can observe both.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import prompts
from .errors import ConfigurationError, ProtocolError, ProviderError

logger = logging.getLogger(__name__)

MOCK_EMBED_DIM = 64
DEFAULT_API_KEY_ENV = "MMRAG_API_KEY"


class ProviderKind(str, Enum):
    HTTP_CHAT = "HttpChat"
    HTTP_EMBED = "HttpEmbed"
    HTTP_VISION = "HttpVision"
    MOCK_CHAT = "MockChat"
    MOCK_EMBED = "MockEmbed"
    MOCK_VISION = "MockVision"


@dataclass(frozen=True)
class ProviderConfig:
    kind: ProviderKind
    base_url: str | None = None
    model_name: str | None = None
    api_key_env: str = DEFAULT_API_KEY_ENV
    timeout: float = 60.0
    max_retries: int = 3
    max_parallel: int = 4
    seed: int | None = None

    def validate(self) -> None:
        if self.kind in (ProviderKind.HTTP_CHAT, ProviderKind.HTTP_EMBED, ProviderKind.HTTP_VISION):
            if not self.base_url or not self.model_name:
                raise ConfigurationError(f"{self.kind.value} requires base_url and model_name")
        else:
            if self.seed is None:
                raise ConfigurationError(f"{self.kind.value} requires a seed")
        if self.max_parallel < 1:
            raise ConfigurationError("max_parallel must be >= 1")
        if self.max_retries < 0:
            raise ConfigurationError("max_retries must be >= 0")


@dataclass(frozen=True)
class EmbeddingVector:
    """Unit-normalized embedding; `values` always has L2 norm 1 (±1e-6)."""

    values: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


def unit_vector(raw: np.ndarray) -> EmbeddingVector:
    norm = float(np.linalg.norm(raw))
    if norm == 0.0:
        raise ProtocolError("cannot normalize a zero embedding vector")
    return EmbeddingVector(values=tuple(float(x) for x in raw / norm))


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


class _BoundedProvider:
    """Call accounting plus a semaphore enforcing max_parallel in-flight."""

    def __init__(self, max_parallel: int, latency: float = 0.0):
        self._sem = threading.BoundedSemaphore(max_parallel)
        self._lock = threading.Lock()
        self._latency = latency
        self._in_flight = 0
        self.calls = 0
        self.max_in_flight = 0

    @contextmanager
    def _slot(self):
        with self._sem:
            with self._lock:
                self.calls += 1
                self._in_flight += 1
                self.max_in_flight = max(self.max_in_flight, self._in_flight)
            try:
                if self._latency:
                    time.sleep(self._latency)
                yield
            finally:
                with self._lock:
                    self._in_flight -= 1


def _digest_int(seed: int, *parts: bytes) -> int:
    h = hashlib.blake2b(digest_size=8, key=seed.to_bytes(8, "little", signed=True))
    for part in parts:
        h.update(part)
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def script_key(prompt: str) -> str:
    """Key under which a scripted mock reply is looked up for `prompt`."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


# --- Embedding --------------------------------------------------------------


class MockEmbedder(_BoundedProvider):
    """Token-hash embeddings: each word maps to a seeded ±1 sign vector.

    Texts sharing words get correlated vectors, which makes retrieval
    behave topically in tests while staying fully deterministic.
    """

    def __init__(self, seed: int, dim: int = MOCK_EMBED_DIM, max_parallel: int = 4, latency: float = 0.0):
        super().__init__(max_parallel, latency)
        self.seed = seed
        self.dim = dim
        self._token_cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._token_cache.get(token)
        if vec is None:
            n_bytes = (self.dim + 7) // 8
            h = hashlib.blake2b(
                token.encode("utf-8"), digest_size=n_bytes, key=self.seed.to_bytes(8, "little", signed=True)
            ).digest()
            bits = np.unpackbits(np.frombuffer(h, dtype=np.uint8))[: self.dim]
            vec = bits.astype(np.float64) * 2.0 - 1.0
            self._token_cache[token] = vec
        return vec

    def embed(self, texts: list[str]) -> list[EmbeddingVector]:
        if not texts:
            raise ValueError("embed requires a non-empty batch")
        out = []
        with self._slot():
            for text in texts:
                tokens = text.split()
                if not tokens:
                    raise ValueError("embed requires non-empty texts")
                acc = np.zeros(self.dim)
                for tok in tokens:
                    acc += self._token_vector(tok)
                if not acc.any():
                    # Opposite sign vectors can cancel; fall back to hashing the whole text.
                    acc = self._token_vector("\x00" + text)
                out.append(unit_vector(acc))
        return out


class HttpEmbedder(_BoundedProvider):
    def __init__(self, config: ProviderConfig):
        config.validate()
        super().__init__(config.max_parallel)
        self.config = config

    def embed(self, texts: list[str]) -> list[EmbeddingVector]:
        if not texts or any(not t.strip() for t in texts):
            raise ValueError("embed requires non-empty texts")
        payload = {"model": self.config.model_name, "input": texts}
        with self._slot():
            body = _post_with_retries(self.config, "/embeddings", payload)
        data = body.get("data")
        if not isinstance(data, list) or len(data) != len(texts):
            raise ProtocolError(f"embeddings reply carried {len(data or [])} rows for {len(texts)} inputs")
        rows = [np.asarray(item["embedding"], dtype=np.float64) for item in data]
        dims = {row.shape[0] for row in rows}
        if len(dims) != 1:
            raise ProtocolError(f"embedding dimensions disagree within batch: {sorted(dims)}")
        return [unit_vector(row) for row in rows]


# --- Chat -------------------------------------------------------------------

_PAGE_LABEL_RE = re.compile(r"\[Page (\d+)\]")


class MockChat(_BoundedProvider):
    """Deterministic chat mock.

    Scripted replies (keyed by `script_key(prompt)`) win; otherwise the
    reply is synthesized from the prompt family: re-rank prompts get a
    JSON relevance score derived from the seed, summarization prompts get
    a token echo, answer prompts get a well-formed structured reply.
    """

    def __init__(self, seed: int, script: dict[str, str] | None = None, max_parallel: int = 4, latency: float = 0.0):
        super().__init__(max_parallel, latency)
        self.seed = seed
        self.script = dict(script or {})

    def chat(self, prompt: str, expect_json: bool = False) -> str:
        if not prompt:
            raise ValueError("chat requires a non-empty prompt")
        with self._slot():
            key = script_key(prompt)
            if key in self.script:
                return self.script[key]
            if prompt.startswith(prompts.RERANK_GUIDELINES.splitlines()[0]):
                return self._rerank_reply(prompt)
            if prompt.startswith(prompts.SUMMARIZE_PREFIX):
                return self._summary_reply(prompt)
            if prompt.startswith(prompts.ANSWER_GUIDELINES.splitlines()[0]):
                return self._answer_reply(prompt)
            return f"MOCK_REPLY({key[:12]})"

    def _rerank_reply(self, prompt: str) -> str:
        score = (_digest_int(self.seed, b"rerank", prompt.encode("utf-8")) % 11) / 10.0
        return json.dumps({"reasoning": "mock relevance judgment", "relevance_score": score})

    def _summary_reply(self, prompt: str) -> str:
        body = prompt[len(prompts.SUMMARIZE_PREFIX):]
        tokens = body.split()[:32]
        return " ".join(tokens)

    def _answer_reply(self, prompt: str) -> str:
        h = _digest_int(self.seed, b"answer", prompt.encode("utf-8"))
        if "An integer value is expected" in prompt:
            final = h % 1000
        elif "A floating-point number is expected" in prompt:
            final = round((h % 10000) / 100.0, 2)
        elif "A list of values extracted from the context" in prompt:
            final = [h % 100, (h >> 8) % 100]
        else:
            final = f"mock answer {h % 10**6}"
        m = _PAGE_LABEL_RE.search(prompt)
        pages = [int(m.group(1))] if m else []
        return json.dumps(
            {
                "step_by_step_analysis": f"mock analysis {h % 10**8}",
                "reasoning_summary": "mock reasoning",
                "relevant_pages": pages,
                "final_answer": final,
            }
        )


class HttpChat(_BoundedProvider):
    def __init__(self, config: ProviderConfig):
        config.validate()
        super().__init__(config.max_parallel)
        self.config = config

    def chat(self, prompt: str, expect_json: bool = False) -> str:
        if not prompt:
            raise ValueError("chat requires a non-empty prompt")
        payload: dict = {
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
        }
        if expect_json:
            payload["response_format"] = {"type": "json_object"}
        with self._slot():
            body = _post_with_retries(self.config, "/chat/completions", payload)
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"chat reply missing choices[0].message.content: {exc}") from exc


# --- Vision -----------------------------------------------------------------


class MockVision(_BoundedProvider):
    """Deterministic vision mock; replies can be scripted per image tag.

    The tag is the image bytes decoded as ASCII when they are short and
    printable (test fixtures use the asset id as the file content), else
    a digest prefix.
    """

    def __init__(self, seed: int, script: dict[str, str] | None = None, max_parallel: int = 4, latency: float = 0.0):
        super().__init__(max_parallel, latency)
        self.seed = seed
        self.script = dict(script or {})

    @staticmethod
    def image_tag(image: bytes) -> str:
        if 0 < len(image) <= 64:
            try:
                text = image.decode("ascii")
            except UnicodeDecodeError:
                text = ""
            if text and text.isprintable():
                return text
        return hashlib.sha256(image).hexdigest()[:12]

    def describe_image(self, image: bytes, instruction: str, media_type: str = "image/png") -> str:
        if not image:
            raise ValueError("describe_image requires non-empty image bytes")
        if not instruction:
            raise ValueError("describe_image requires a non-empty instruction")
        with self._slot():
            tag = self.image_tag(image)
            if tag in self.script:
                return self.script[tag]
            return f"MOCK_DESC({tag})"


class HttpVision(_BoundedProvider):
    SUPPORTED_MEDIA = ("image/png", "image/jpeg", "image/gif", "image/webp")

    def __init__(self, config: ProviderConfig):
        config.validate()
        super().__init__(config.max_parallel)
        self.config = config

    def describe_image(self, image: bytes, instruction: str, media_type: str = "image/png") -> str:
        if not image:
            raise ValueError("describe_image requires non-empty image bytes")
        if media_type not in self.SUPPORTED_MEDIA:
            raise ProtocolError(f"unsupported media type {media_type!r}")
        data_url = f"data:{media_type};base64,{base64.b64encode(image).decode('ascii')}"
        payload = {
            "model": self.config.model_name,
            "messages": [
                {
                    "role": "user",
                    "content": [
                        {"type": "text", "text": instruction},
                        {"type": "image_url", "image_url": {"url": data_url}},
                    ],
                }
            ],
        }
        with self._slot():
            body = _post_with_retries(self.config, "/chat/completions", payload)
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"vision reply missing choices[0].message.content: {exc}") from exc


# --- HTTP plumbing ----------------------------------------------------------


def _post_with_retries(config: ProviderConfig, path: str, payload: dict) -> dict:
    """POST with exponential backoff (1s base, factor 2, jitter)."""
    import requests

    base_url = os.environ.get("MMRAG_BASE_URL") or config.base_url or ""
    url = base_url.rstrip("/") + path
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(config.api_key_env, "")
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"

    attempts = 0
    last_error = "no attempt made"
    while attempts <= config.max_retries:
        attempts += 1
        try:
            logger.debug("POST %s payload=%s", url, json.dumps(payload)[:2000])
            resp = requests.post(url, json=payload, headers=headers, timeout=config.timeout)
            if resp.status_code >= 500 or resp.status_code == 429:
                last_error = f"HTTP {resp.status_code}"
            elif resp.status_code >= 400:
                raise ProviderError(f"HTTP {resp.status_code}: {resp.text[:500]}", attempts=attempts)
            else:
                logger.debug("reply %s", resp.text[:2000])
                return resp.json()
        except ProviderError:
            raise
        except Exception as exc:  # connection errors, timeouts, bad JSON
            last_error = str(exc)
        if attempts <= config.max_retries:
            delay = 2 ** (attempts - 1) * (1.0 + random.random() * 0.1)
            time.sleep(delay)
    raise ProviderError(f"request to {url} failed: {last_error}", attempts=attempts)


# --- Construction -----------------------------------------------------------


def build_embedder(config: ProviderConfig):
    config.validate()
    if config.kind is ProviderKind.MOCK_EMBED:
        return MockEmbedder(seed=config.seed or 0, max_parallel=config.max_parallel)
    if config.kind is ProviderKind.HTTP_EMBED:
        return HttpEmbedder(config)
    raise ConfigurationError(f"{config.kind.value} is not an embedding provider")


def build_chat(config: ProviderConfig):
    config.validate()
    if config.kind is ProviderKind.MOCK_CHAT:
        return MockChat(seed=config.seed or 0, max_parallel=config.max_parallel)
    if config.kind is ProviderKind.HTTP_CHAT:
        return HttpChat(config)
    raise ConfigurationError(f"{config.kind.value} is not a chat provider")


def build_vision(config: ProviderConfig):
    config.validate()
    if config.kind is ProviderKind.MOCK_VISION:
        return MockVision(seed=config.seed or 0, max_parallel=config.max_parallel)
    if config.kind is ProviderKind.HTTP_VISION:
        return HttpVision(config)
    raise ConfigurationError(f"{config.kind.value} is not a vision provider")


def embed(texts: list[str], config: ProviderConfig) -> list[EmbeddingVector]:
    return build_embedder(config).embed(texts)


def chat(prompt: str, expect_json: bool, config: ProviderConfig) -> str:
    return build_chat(config).chat(prompt, expect_json=expect_json)


def describe_image(image: bytes, instruction: str, config: ProviderConfig, media_type: str = "image/png") -> str:
    return build_vision(config).describe_image(image, instruction, media_type=media_type)


@dataclass
class ProviderSet:
    """The three capabilities a pipeline run needs, bundled."""

    embedder: MockEmbedder | HttpEmbedder
    chat: MockChat | HttpChat
    vision: MockVision | HttpVision

    @classmethod
    def mocks(cls, seed: int) -> "ProviderSet":
        return cls(embedder=MockEmbedder(seed=seed), chat=MockChat(seed=seed), vision=MockVision(seed=seed))
