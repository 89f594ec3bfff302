"""Toolkit configuration file handling.

One JSON file names every provider plus the cache directory, ontology, and
worker bound, so CLI and service share a single source of truth:

    {
      "providers": [
        {"provider_id": "gpt4", "kind": "http",
         "base_url": "https://api.example.com/v1",
         "api_key_env": "EXAMPLE_API_KEY",
         "requests_per_minute": 60, "max_concurrent": 4, "max_retries": 3}
      ],
      "cache_dir": ".attrscore-cache",
      "ontology_path": null,
      "workers": 1
    }

A missing config means mock-only operation; the `mock` provider is always
registered so `--mock` and the test suite work without any file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import ConfigError
from .gateway import UNLIMITED_RPM, Gateway, ProviderConfig
from .ontology import Ontology, default_ontology, load_ontology_file

MOCK_PROVIDER_ID = "mock"

_PROVIDER_FIELDS = {
    "provider_id",
    "kind",
    "base_url",
    "api_key_env",
    "requests_per_minute",
    "max_concurrent",
    "max_retries",
}


@dataclass(frozen=True)
class ToolkitConfig:
    providers: tuple[ProviderConfig, ...] = ()
    cache_dir: str | None = None
    ontology_path: str | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        seen: set[str] = set()
        for p in self.providers:
            if p.provider_id in seen:
                raise ConfigError(f"duplicate provider_id {p.provider_id!r}")
            seen.add(p.provider_id)


def _parse_provider(raw: object, index: int) -> ProviderConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"providers[{index}] must be an object")
    unknown = set(raw) - _PROVIDER_FIELDS
    if unknown:
        raise ConfigError(f"providers[{index}] has unknown fields: {', '.join(sorted(unknown))}")
    if "provider_id" not in raw:
        raise ConfigError(f"providers[{index}] missing provider_id")
    try:
        return ProviderConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"providers[{index}]: {exc}") from exc


def load_config(path: str | Path) -> ToolkitConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    unknown = set(raw) - {"providers", "cache_dir", "ontology_path", "workers"}
    if unknown:
        raise ConfigError(f"config {path} has unknown fields: {', '.join(sorted(unknown))}")
    providers_raw = raw.get("providers", [])
    if not isinstance(providers_raw, list):
        raise ConfigError("providers must be a list")
    providers = tuple(_parse_provider(p, i) for i, p in enumerate(providers_raw))
    workers = raw.get("workers", 1)
    if not isinstance(workers, int) or isinstance(workers, bool):
        raise ConfigError("workers must be an integer")
    return ToolkitConfig(
        providers=providers,
        cache_dir=raw.get("cache_dir"),
        ontology_path=raw.get("ontology_path"),
        workers=workers,
    )


def build_gateway(
    config: ToolkitConfig,
    mock_only: bool = False,
    cache_dir: str | Path | None = None,
) -> Gateway:
    """Gateway with every configured provider registered, plus the built-in
    mock. With mock_only, configured providers are replaced by mock-kind
    twins (same ids) so selections still resolve but nothing can touch the
    network; rate limits exist to protect remote APIs, so the offline twins
    drop them."""
    providers = list(config.providers)
    if mock_only:
        providers = [
            replace(
                p,
                kind="mock",
                base_url="",
                api_key_env="",
                requests_per_minute=UNLIMITED_RPM,
                max_concurrent=64,
            )
            for p in providers
        ]
    if not any(p.provider_id == MOCK_PROVIDER_ID for p in providers):
        providers.append(
            ProviderConfig(
                provider_id=MOCK_PROVIDER_ID,
                kind="mock",
                requests_per_minute=UNLIMITED_RPM,
                max_concurrent=64,
            )
        )
    return Gateway(providers=providers, cache_dir=cache_dir or config.cache_dir)


def resolve_ontology(config: ToolkitConfig) -> Ontology:
    if config.ontology_path:
        return load_ontology_file(config.ontology_path)
    return default_ontology()
