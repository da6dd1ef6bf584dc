import json
from collections.abc import Iterable, Iterator
from pathlib import Path
from typing import Any

from fastapi import status

from visrec.core.exception.base import BaseCustomException


class JsonlDecodeError(BaseCustomException):
    def __init__(self, path: str, line_no: int, reason: str):
        super().__init__(
            status_code=status.HTTP_400_BAD_REQUEST, code="BAD_JSONL", detail=f"{path}:{line_no}: {reason}"
        )


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict[str, Any]]]:
    """Yields (line number, object) for each non-blank line."""
    with open(path) as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise JsonlDecodeError(str(path), line_no, str(e))
            if not isinstance(obj, dict):
                raise JsonlDecodeError(str(path), line_no, "expected a JSON object")
            yield line_no, obj


def read_jsonl(path: str | Path) -> list[dict[str, Any]]:
    return [obj for _, obj in iter_jsonl(path)]


def write_jsonl(path: str | Path, rows: Iterable[dict[str, Any]]) -> None:
    with open(path, "w") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")


def append_jsonl(path: str | Path, row: dict[str, Any]) -> None:
    with open(path, "a") as f:
        f.write(json.dumps(row, sort_keys=True) + "\n")
