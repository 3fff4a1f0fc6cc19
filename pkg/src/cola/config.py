"""Service configuration: one flat KEY = VALUE file, COLA_ env overrides.

Precedence is defaults < file < environment. Every key in the file must be
known; a typo is a ConfigError with the offending line, not a silently
ignored setting. The config also knows how to build the two pluggable
pieces it describes: the chat backend and the embedding provider.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .errors import ConfigError
from .gateway import RemoteChatBackend, ScriptedBackend, load_playbook
from .memory import RemoteEmbeddingProvider, StubEmbeddingProvider
from .orchestrator import DEFAULT_BUDGET, InteractionMode

ENV_PREFIX = "COLA_"

_MODES = {mode.value for mode in InteractionMode}


@dataclass(frozen=True)
class ServiceConfig:
    """Everything the service and CLI read from the outside world."""

    host: str = "127.0.0.1"
    port: int = 8765
    sessions_dir: Path = Path("sessions")
    memory_dir: Path | None = None
    prompt_dir: Path | None = None

    backend_provider: str = "scripted"  # "scripted" | "remote"
    backend_playbook: Path | None = None
    backend_base_url: str = ""
    backend_model: str = "gpt-4o-2024-08-06"
    backend_api_key_env: str = ""

    embedding_provider: str = "stub"  # "stub" | "remote"
    embedding_base_url: str = ""
    embedding_model: str = "text-embedding-3-large"
    embedding_api_key_env: str = ""
    embedding_dimension: int = 3072

    default_mode: InteractionMode = InteractionMode.AUTOMATIC
    default_budget: int = DEFAULT_BUDGET

    def build_backend(self, playbook: str | Path | None = None):
        """The chat backend this config describes.

        A per-session playbook beats the configured one, so a scripted
        service can still run ad-hoc fixtures.
        """
        if self.backend_provider == "scripted":
            chosen = playbook or self.backend_playbook
            if chosen is None:
                raise ConfigError("scripted backend requires a playbook path")
            try:
                return ScriptedBackend(load_playbook(chosen))
            except (OSError, ValueError) as err:
                raise ConfigError(f"cannot load playbook {chosen}: {err}") from None
        return RemoteChatBackend(
            base_url=self.backend_base_url,
            model=self.backend_model,
            api_key=self._key_from(self.backend_api_key_env),
        )

    def build_embedder(self):
        if self.embedding_provider == "stub":
            return StubEmbeddingProvider()
        return RemoteEmbeddingProvider(
            base_url=self.embedding_base_url,
            model=self.embedding_model,
            dimension=self.embedding_dimension,
            api_key=self._key_from(self.embedding_api_key_env),
        )

    def ensure_directories(self) -> None:
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        if self.memory_dir:
            self.memory_dir.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def _key_from(env_name: str) -> str | None:
        if not env_name:
            return None
        value = os.environ.get(env_name)
        if value is None:
            raise ConfigError(f"api key environment variable {env_name!r} is not set")
        return value


def _to_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {raw!r}") from None


def _to_path(key: str, raw: str) -> Path | None:
    return Path(raw) if raw else None


def _to_mode(key: str, raw: str) -> InteractionMode:
    if raw not in _MODES:
        choices = ", ".join(sorted(_MODES))
        raise ConfigError(f"{key} must be one of {choices}, got {raw!r}")
    return InteractionMode(raw)


def _to_text(key: str, raw: str) -> str:
    return raw


_COERCERS = {
    "host": _to_text,
    "port": _to_int,
    "sessions_dir": lambda key, raw: Path(raw),
    "memory_dir": _to_path,
    "prompt_dir": _to_path,
    "backend_provider": _to_text,
    "backend_playbook": _to_path,
    "backend_base_url": _to_text,
    "backend_model": _to_text,
    "backend_api_key_env": _to_text,
    "embedding_provider": _to_text,
    "embedding_base_url": _to_text,
    "embedding_model": _to_text,
    "embedding_api_key_env": _to_text,
    "embedding_dimension": _to_int,
    "default_mode": _to_mode,
    "default_budget": _to_int,
}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """KEY = VALUE lines to a raw string map; blank lines and # comments skipped."""
    values: dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{number}: expected KEY = VALUE, got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip().lower()
        if key not in _COERCERS:
            raise ConfigError(f"{source}:{number}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{number}: duplicate key {key!r}")
        values[key] = raw.strip()
    return values


def load_config(
    path: str | Path | None = None,
    env: Mapping[str, str] | None = None,
) -> ServiceConfig:
    """Assemble a validated ServiceConfig from an optional file plus the env."""
    env = os.environ if env is None else env
    raw: dict[str, str] = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as err:
            raise ConfigError(f"cannot read config file {path}: {err}") from None
        raw.update(parse_config_text(text, source=str(path)))

    for key in _COERCERS:
        override = env.get(ENV_PREFIX + key.upper())
        if override is not None:
            raw[key] = override

    kwargs = {key: _COERCERS[key](key, value) for key, value in raw.items()}
    config = ServiceConfig(**kwargs)
    _validate(config)
    return config


def _validate(config: ServiceConfig) -> None:
    if config.backend_provider not in ("scripted", "remote"):
        raise ConfigError(
            f"backend_provider must be scripted or remote, got {config.backend_provider!r}"
        )
    if config.backend_provider == "remote" and not config.backend_base_url:
        raise ConfigError("remote backend requires backend_base_url")
    if config.embedding_provider not in ("stub", "remote"):
        raise ConfigError(
            f"embedding_provider must be stub or remote, got {config.embedding_provider!r}"
        )
    if config.embedding_provider == "remote" and not config.embedding_base_url:
        raise ConfigError("remote embeddings require embedding_base_url")
    if not 1 <= config.port <= 65535:
        raise ConfigError(f"port must be in 1..65535, got {config.port}")
    if config.default_budget < 1:
        raise ConfigError(f"default_budget must be positive, got {config.default_budget}")
    if config.embedding_dimension < 1:
        raise ConfigError(
            f"embedding_dimension must be positive, got {config.embedding_dimension}"
        )
