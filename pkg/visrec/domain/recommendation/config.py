import json
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from visrec.core.exception.base import ConfigError
from visrec.domain.index.constant import DEFAULT_K
from visrec.domain.ingest.entity import RefreshPolicy, parse_duration


class IngestSettings(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    events: str
    store: str
    dead_letter: str | None = None
    refresh: RefreshPolicy = RefreshPolicy()
    workers: int = Field(1, gt=0)


class ServiceConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    listen: str = "127.0.0.1:8888"
    k_default: int = Field(DEFAULT_K, ge=0)
    model_path: str
    # index snapshot the cache starts from; without one the index starts empty
    index_snapshot: str | None = None
    # neighbor list length when the index starts empty
    index_k: int = Field(DEFAULT_K, ge=0)
    request_timeout: float = Field(5.0, gt=0)
    ingest: IngestSettings | None = None

    @field_validator("request_timeout", mode="before")
    @classmethod
    def parse_timeout(cls, value: Any) -> Any:
        return parse_duration(value) if isinstance(value, str) else value

    @field_validator("listen")
    @classmethod
    def check_listen(cls, value: str) -> str:
        host, sep, port = value.rpartition(":")
        if not sep or not host or not port.isdigit():
            raise ValueError(f"listen must be host:port, got {value!r}")
        return value

    def host_port(self) -> tuple[str, int]:
        host, _, port = self.listen.rpartition(":")
        return host, int(port)


def load_service_config(path: str | Path) -> ServiceConfig:
    try:
        raw = json.loads(Path(path).read_text())
        return ServiceConfig.model_validate(raw)
    except (OSError, json.JSONDecodeError, ValidationError) as e:
        raise ConfigError(f"Invalid service config {path}: {e}")
