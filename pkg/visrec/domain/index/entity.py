from dataclasses import dataclass, field

import numpy as np

from visrec.domain.catalog.entity import ItemMetadata

PartitionKey = tuple[str, str, str]


def partition_of(metadata: ItemMetadata) -> PartitionKey:
    return metadata.category_group, metadata.vertical, metadata.gender


@dataclass(frozen=True)
class CatalogItem:
    id: str
    embedding: np.ndarray
    metadata: ItemMetadata
    version: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "embedding", np.ascontiguousarray(self.embedding, dtype=np.float32).reshape(-1))

    @property
    def partition(self) -> PartitionKey:
        return partition_of(self.metadata)

    @property
    def dim(self) -> int:
        return int(self.embedding.shape[0])


@dataclass(frozen=True)
class NeighborList:
    owner: str
    # (neighbor id, distance), ascending by distance then id
    entries: tuple[tuple[str, float], ...] = ()

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ids(self) -> list[str]:
        return [item_id for item_id, _ in self.entries]

    def truncated(self, k: int) -> "NeighborList":
        return NeighborList(owner=self.owner, entries=self.entries[:k])

    def contains(self, item_id: str) -> bool:
        return any(neighbor == item_id for neighbor, _ in self.entries)


@dataclass
class ScanCounter:
    """Operation counts of index scans; the row count is the distance evaluations."""

    shards: int = 0
    rows: int = 0


@dataclass(frozen=True)
class IndexShard:
    """One pruning partition: ascending id table, row-aligned f32 matrix and its neighbor lists."""

    partition: PartitionKey
    ids: tuple[str, ...]
    matrix: np.ndarray
    items: dict[str, CatalogItem] = field(compare=False)
    lists: dict[str, NeighborList] = field(compare=False)

    def __len__(self) -> int:
        return len(self.ids)

    def position(self) -> dict[str, int]:
        return {item_id: i for i, item_id in enumerate(self.ids)}

    @property
    def metadata(self) -> ItemMetadata:
        return ItemMetadata(*self.partition)
