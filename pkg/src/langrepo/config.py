"""Application configuration: one JSON file wiring every module together.

Shape (all sections optional except where noted):

    {
      "llm":   {"kind": "mock" | "http", "endpoint": str, "model": str,
                "max_retries": int, "backoff_s": num, "timeout_s": num,
                "wrap_instructions": bool},
      "embed": {"kind": "hashed" | "precomputed-file" | "http-endpoint",
                "location": str, "dimension": int, "max_text_chars": int},
      "build": {... BuildConfig fields ...},
      "cache_dir": str | null,
      "parallelism": int,
      "classifier": "loglik" | "generative",
      "loglik_format": "plain" | "structured"
    }

API keys come from the environment: LANGREPO_LLM_KEY and
LANGREPO_EMBED_KEY. The config is validated before any network call.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .embed import Embedder, EmbeddingProviderConfig
from .errors import ConfigError
from .evalharness import Providers
from .llm import CallLedger, HttpBackend, LlmClient, MockBackend
from .prompts import LOGLIK_FORMATS
from .repository import BuildConfig
from .vqa import CLASSIFIERS

LLM_KINDS = ("mock", "http")


@dataclass
class LlmSettings:
    kind: str = "mock"
    endpoint: str = ""
    model: str = ""
    max_retries: int = 2
    backoff_s: float = 1.0
    timeout_s: float = 120.0
    wrap_instructions: bool = True

    def __post_init__(self) -> None:
        if self.kind not in LLM_KINDS:
            raise ConfigError(f"llm.kind must be one of {LLM_KINDS}, got {self.kind!r}")
        if self.kind == "http" and (not self.endpoint or not self.model):
            raise ConfigError("llm.kind 'http' requires endpoint and model")
        if self.max_retries < 0:
            raise ConfigError("llm.max_retries must be >= 0")


@dataclass
class AppConfig:
    llm: LlmSettings = field(default_factory=LlmSettings)
    embed: EmbeddingProviderConfig = field(default_factory=lambda: EmbeddingProviderConfig(kind="hashed"))
    build: BuildConfig = field(default_factory=BuildConfig)
    cache_dir: str | None = None
    parallelism: int = 4
    classifier: str = "loglik"
    loglik_format: str = "plain"

    def __post_init__(self) -> None:
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.classifier not in CLASSIFIERS:
            raise ConfigError(f"classifier must be one of {CLASSIFIERS}")
        if self.loglik_format not in LOGLIK_FORMATS:
            raise ConfigError(f"loglik_format must be one of {LOGLIK_FORMATS}")


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return value


def _pick(cls, raw: dict, context: str):
    known = set(cls.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in {context}: {', '.join(sorted(unknown))}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"bad {context}: {exc}") from exc


def load_app_config(path: str | Path) -> AppConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path}: top level must be an object")
    known_top = {"llm", "embed", "build", "cache_dir", "parallelism", "classifier", "loglik_format"}
    unknown = set(raw) - known_top
    if unknown:
        raise ConfigError(f"unknown top-level config key(s): {', '.join(sorted(unknown))}")
    return AppConfig(
        llm=_pick(LlmSettings, _section(raw, "llm"), "llm settings"),
        embed=_pick(EmbeddingProviderConfig, _section(raw, "embed"), "embed settings"),
        build=_pick(BuildConfig, _section(raw, "build"), "build settings"),
        cache_dir=raw.get("cache_dir"),
        parallelism=int(raw.get("parallelism", 4)),
        classifier=raw.get("classifier", "loglik"),
        loglik_format=raw.get("loglik_format", "plain"),
    )


def make_client(cfg: AppConfig, cache_dir: str | None = None, ledger: CallLedger | None = None) -> LlmClient:
    if cfg.llm.kind == "http":
        backend = HttpBackend(
            base_url=cfg.llm.endpoint,
            model=cfg.llm.model,
            max_retries=cfg.llm.max_retries,
            backoff_s=cfg.llm.backoff_s,
            timeout_s=cfg.llm.timeout_s,
            wrap_instructions=cfg.llm.wrap_instructions,
        )
    else:
        backend = MockBackend()
    return LlmClient(
        backend,
        cache_dir=cache_dir if cache_dir is not None else cfg.cache_dir,
        ledger=ledger,
        max_parallel=cfg.parallelism,
    )


def make_providers(cfg: AppConfig, cache_dir: str | None = None) -> Providers:
    return Providers(client=make_client(cfg, cache_dir=cache_dir), embedder=Embedder(cfg.embed))
