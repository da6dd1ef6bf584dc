import os
from dataclasses import dataclass
from functools import lru_cache

from dotenv import load_dotenv


@dataclass
class LogConfig:
    level: str


@dataclass
class PathConfig:
    data_dir: str
    dead_letter: str

    def resolve(self, name: str) -> str:
        if os.path.isabs(name):
            return name
        return os.path.join(self.data_dir, name)


@dataclass
class ServerConfig:
    serve_config: str | None


@dataclass
class AppConfig:
    log: LogConfig
    paths: PathConfig
    server: ServerConfig


@lru_cache
def load_config() -> AppConfig:
    load_dotenv(".env")

    log_config = LogConfig(level=os.environ.get("VISREC_LOG_LEVEL", "INFO").upper())

    path_config = PathConfig(
        data_dir=os.environ.get("VISREC_DATA_DIR", "."),
        dead_letter=os.environ.get("VISREC_DEAD_LETTER", "dead_letter.jsonl"),
    )

    server_config = ServerConfig(
        serve_config=os.environ.get("VISREC_SERVE_CONFIG"),
    )

    app_config = AppConfig(
        log=log_config,
        paths=path_config,
        server=server_config,
    )

    return app_config
