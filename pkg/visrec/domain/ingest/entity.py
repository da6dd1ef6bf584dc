import re
from dataclasses import dataclass
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from visrec.domain.catalog.entity import METADATA_FIELDS, ItemMetadata
from visrec.domain.ingest.constant import DEFAULT_MAX_BATCH, DEFAULT_REFRESH_INTERVAL_SECONDS
from visrec.domain.ingest.enum import EventOp, RecordKind
from visrec.domain.ingest.exception import InvalidEventError

_DURATION = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*(ms|s|m|h)?\s*$")
_UNIT_SECONDS = {"ms": 0.001, "s": 1.0, "m": 60.0, "h": 3600.0}


def parse_duration(text: str | float | int) -> float:
    """Seconds from "30m", "1.5s", "250ms", "2h" or a bare number of seconds."""
    if isinstance(text, int | float):
        return float(text)
    match = _DURATION.match(text)
    if match is None:
        raise ValueError(f"invalid duration {text!r}")
    return float(match.group(1)) * _UNIT_SECONDS[match.group(2) or "s"]


class IngestionEvent(BaseModel):
    model_config = ConfigDict(extra="ignore", frozen=True)

    seq: int = Field(..., ge=0)
    op: EventOp
    id: str = Field(..., min_length=1)
    image: str | None = None
    metadata: dict[str, str] = Field(default_factory=dict)

    @model_validator(mode="before")
    @classmethod
    def lift_metadata(cls, data: Any) -> Any:
        # the pruning attributes may also sit at the top level of the event
        if isinstance(data, dict):
            metadata = dict(data.get("metadata") or {})
            for name in METADATA_FIELDS:
                if name in data and name not in metadata:
                    metadata[name] = data[name]
            data = {**data, "metadata": metadata}
        return data

    @model_validator(mode="after")
    def check_image(self) -> "IngestionEvent":
        if self.op != EventOp.DELETE and not self.image:
            raise ValueError(f"{self.op.value} event needs an image")
        return self

    @classmethod
    def from_row(cls, row: dict[str, Any]) -> "IngestionEvent":
        try:
            return cls.model_validate(row)
        except ValidationError as e:
            raise InvalidEventError(str(e.errors()[0]["msg"]))

    def item_metadata(self) -> ItemMetadata:
        return ItemMetadata.from_dict(self.metadata)

    def to_row(self) -> dict[str, Any]:
        row: dict[str, Any] = {"seq": self.seq, "op": self.op.value, "id": self.id, "metadata": self.metadata}
        if self.image is not None:
            row["image"] = self.image
        return row


@dataclass(frozen=True)
class StoreRecord:
    kind: RecordKind
    seq: int
    id: str = ""
    metadata: ItemMetadata | None = None
    embedding: np.ndarray | None = None

    @property
    def version(self) -> int:
        return self.seq


@dataclass(frozen=True)
class StoreEntry:
    """The visible state of one id: the latest put."""

    embedding: np.ndarray
    metadata: ItemMetadata
    version: int


class RefreshPolicy(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    interval: float = Field(DEFAULT_REFRESH_INTERVAL_SECONDS, gt=0)
    # events consumed per pass of the worker loop
    max_batch: int = Field(DEFAULT_MAX_BATCH, gt=0)

    @field_validator("interval", mode="before")
    @classmethod
    def parse_interval(cls, value: Any) -> Any:
        if isinstance(value, str):
            return parse_duration(value)
        return value
