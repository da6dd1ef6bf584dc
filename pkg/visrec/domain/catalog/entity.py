from dataclasses import dataclass
from typing import Any

UNKNOWN = "unknown"
METADATA_FIELDS = ("category_group", "vertical", "gender")


@dataclass(frozen=True, order=True)
class ItemMetadata:
    """The pruning attributes; a missing attribute becomes the "unknown" partition value."""

    category_group: str = UNKNOWN
    vertical: str = UNKNOWN
    gender: str = UNKNOWN

    @classmethod
    def from_dict(cls, raw: dict[str, Any] | None) -> "ItemMetadata":
        raw = raw or {}
        values = {}
        for name in METADATA_FIELDS:
            value = raw.get(name)
            values[name] = str(value) if value not in (None, "") else UNKNOWN
        return cls(**values)

    def to_dict(self) -> dict[str, str]:
        return {"category_group": self.category_group, "vertical": self.vertical, "gender": self.gender}

    def matches(self, selector: dict[str, str]) -> bool:
        return all(getattr(self, key) == value for key, value in selector.items())


@dataclass(frozen=True)
class CatalogEntry:
    id: str
    image: str
    metadata: ItemMetadata

    @classmethod
    def from_row(cls, row: dict[str, Any]) -> "CatalogEntry":
        return cls(id=str(row["id"]), image=str(row["image"]), metadata=ItemMetadata.from_dict(row))

    def to_row(self) -> dict[str, str]:
        return {"id": self.id, "image": self.image, **self.metadata.to_dict()}
