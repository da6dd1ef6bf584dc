from collections.abc import Iterable
from pathlib import Path

from visrec.core.codec.jsonl import read_jsonl, write_jsonl
from visrec.core.image.ppm import Image, read_ppm
from visrec.domain.catalog.entity import CatalogEntry
from visrec.domain.catalog.exception import DuplicateItemError, ItemNotFoundError


class CatalogRepository:
    """An immutable catalog snapshot with lazily decoded, memoized images."""

    def __init__(self, entries: Iterable[CatalogEntry], images: dict[str, Image] | None = None):
        self._entries: dict[str, CatalogEntry] = {}
        for entry in entries:
            if entry.id in self._entries:
                raise DuplicateItemError(entry.id)
            self._entries[entry.id] = entry
        self._images: dict[str, Image] = dict(images or {})

    @classmethod
    def from_manifest(cls, path: str | Path) -> "CatalogRepository":
        base = Path(path).parent
        entries = []
        for row in read_jsonl(path):
            entry = CatalogEntry.from_row(row)
            image_path = Path(entry.image)
            if not image_path.is_absolute() and not image_path.exists():
                entry = CatalogEntry(id=entry.id, image=str(base / image_path), metadata=entry.metadata)
            entries.append(entry)
        return cls(entries)

    def save_manifest(self, path: str | Path) -> None:
        write_jsonl(path, (entry.to_row() for entry in self.entries()))

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._entries

    def ids(self) -> list[str]:
        return sorted(self._entries)

    def entries(self) -> list[CatalogEntry]:
        return [self._entries[item_id] for item_id in self.ids()]

    def get(self, item_id: str) -> CatalogEntry:
        entry = self._entries.get(item_id)
        if entry is None:
            raise ItemNotFoundError(item_id)
        return entry

    def image(self, item_id: str) -> Image:
        image = self._images.get(item_id)
        if image is None:
            image = read_ppm(self.get(item_id).image)
            self._images[item_id] = image
        return image

    def images(self, item_ids: Iterable[str]) -> list[Image]:
        return [self.image(item_id) for item_id in item_ids]

    def group_ids(self, category_group: str) -> list[str]:
        return [item_id for item_id in self.ids() if self._entries[item_id].metadata.category_group == category_group]

    def groups(self) -> list[str]:
        return sorted({entry.metadata.category_group for entry in self._entries.values()})
