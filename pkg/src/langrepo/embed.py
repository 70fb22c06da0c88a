"""Unit-norm text embeddings via pluggable providers, plus cosine similarity.

Three provider kinds:

* ``precomputed-file``: JSON object mapping exact text -> vector; offline
  and reproducible.
* ``http-endpoint``: POST {"texts": [...]} -> {"vectors": [[...], ...]}.
  API key read from the LANGREPO_EMBED_KEY environment variable.
* ``hashed``: deterministic pseudo-embeddings derived from a content hash;
  lets the full pipeline run without any model or network.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests

from .errors import (
    ConfigError,
    DimensionMismatch,
    MalformedFile,
    MissingEmbedding,
    ProviderUnavailable,
)

logger = logging.getLogger(__name__)

PROVIDER_KINDS = ("precomputed-file", "http-endpoint", "hashed")
EMBED_KEY_ENV = "LANGREPO_EMBED_KEY"

_HTTP_BATCH = 64


@dataclass
class EmbeddingProviderConfig:
    kind: str
    location: str = ""
    dimension: int = 64
    max_text_chars: int = 300
    auth_header: str = "Authorization"
    timeout_s: float = 30.0
    max_retries: int = 2
    backoff_s: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in PROVIDER_KINDS:
            raise ConfigError(f"unknown embedding provider kind {self.kind!r}")
        if self.dimension < 1:
            raise ConfigError("embedding dimension must be positive")
        if self.max_text_chars < 1:
            raise ConfigError("max_text_chars must be positive")
        if self.kind in ("precomputed-file", "http-endpoint") and not self.location:
            raise ConfigError(f"{self.kind} provider needs a location")


class PrecomputedFileProvider:
    """Looks vectors up by exact (post-truncation) text string."""

    def __init__(self, cfg: EmbeddingProviderConfig):
        self.cfg = cfg
        path = Path(cfg.location)
        try:
            table = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise MalformedFile(f"cannot read embedding file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise MalformedFile(f"{path} is not valid JSON: {exc}") from exc
        if not isinstance(table, dict):
            raise MalformedFile(f"{path}: expected an object mapping text to vector")
        self._table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        rows = []
        for text in texts:
            vec = self._table.get(text)
            if vec is None:
                raise MissingEmbedding(f"no precomputed vector for text {text[:60]!r}")
            rows.append(vec)
        return np.stack(rows)


class HttpEmbeddingProvider:
    def __init__(self, cfg: EmbeddingProviderConfig, session: requests.Session | None = None):
        self.cfg = cfg
        self.session = session or requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(EMBED_KEY_ENV, "")
        if key:
            value = f"Bearer {key}" if self.cfg.auth_header == "Authorization" else key
            headers[self.cfg.auth_header] = value
        return headers

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        out = []
        for start in range(0, len(texts), _HTTP_BATCH):
            out.extend(self._post(texts[start : start + _HTTP_BATCH]))
        return np.asarray(out, dtype=np.float64)

    def _post(self, batch: list[str]) -> list[list[float]]:
        last_error: Exception | None = None
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                logger.warning("embedding endpoint retry %d after: %s", attempt, last_error)
                time.sleep(self.cfg.backoff_s * 2 ** (attempt - 1))
            try:
                resp = self.session.post(
                    self.cfg.location,
                    json={"texts": batch},
                    headers=self._headers(),
                    timeout=self.cfg.timeout_s,
                )
                if resp.status_code >= 500:
                    last_error = ProviderUnavailable(f"HTTP {resp.status_code}")
                    continue
                if resp.status_code != 200:
                    raise ProviderUnavailable(f"HTTP {resp.status_code}: {resp.text[:200]}")
                vectors = resp.json()["vectors"]
                if len(vectors) != len(batch):
                    raise ProviderUnavailable(
                        f"endpoint returned {len(vectors)} vectors for {len(batch)} texts"
                    )
                return vectors
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_error = exc
        raise ProviderUnavailable(f"embedding endpoint failed after retries: {last_error}")


class HashedEmbeddingProvider:
    """Deterministic stand-in encoder: same text, same vector, any machine."""

    def __init__(self, cfg: EmbeddingProviderConfig):
        self.cfg = cfg

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        return np.stack([self._one(t) for t in texts])

    def _one(self, text: str) -> np.ndarray:
        seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")
        rng = np.random.default_rng(seed)
        return rng.standard_normal(self.cfg.dimension)


def build_provider(cfg: EmbeddingProviderConfig, session: requests.Session | None = None):
    if cfg.kind == "precomputed-file":
        return PrecomputedFileProvider(cfg)
    if cfg.kind == "http-endpoint":
        return HttpEmbeddingProvider(cfg, session=session)
    return HashedEmbeddingProvider(cfg)


def embed_texts(texts: list[str], provider, cfg: EmbeddingProviderConfig) -> np.ndarray:
    """Embed texts in order, returning an (n, dimension) unit-norm matrix.

    Each text is truncated to cfg.max_text_chars before dispatch, which
    stands in for the encoder's token limit.
    """
    if not texts:
        raise ValueError("texts must be non-empty")
    truncated = [t[: cfg.max_text_chars] for t in texts]
    matrix = np.asarray(provider.embed_batch(truncated), dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != len(texts):
        raise DimensionMismatch(f"provider returned shape {matrix.shape} for {len(texts)} texts")
    if matrix.shape[1] != cfg.dimension:
        raise DimensionMismatch(
            f"provider returned dimension {matrix.shape[1]}, config says {cfg.dimension}"
        )
    if not np.all(np.isfinite(matrix)):
        raise DimensionMismatch("provider returned non-finite values")
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise DimensionMismatch("provider returned a zero vector")
    return matrix / norms


class Embedder:
    """Config plus provider, bundled for callers that just want vectors."""

    def __init__(self, cfg: EmbeddingProviderConfig, session: requests.Session | None = None):
        self.cfg = cfg
        self.provider = build_provider(cfg, session=session)

    def encode(self, texts: list[str]) -> np.ndarray:
        return embed_texts(texts, self.provider, self.cfg)


def similarity_matrix(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarity of unit vectors; entry (i, j) = src_i . dst_j."""
    src = np.atleast_2d(np.asarray(src, dtype=np.float64))
    dst = np.atleast_2d(np.asarray(dst, dtype=np.float64))
    if src.shape[1] != dst.shape[1]:
        raise DimensionMismatch(f"src dimension {src.shape[1]} != dst dimension {dst.shape[1]}")
    return src @ dst.T
