import logging
from collections import defaultdict
from collections.abc import Iterable, Iterator, Mapping

import numpy as np

from visrec.core.exception.base import DimensionMismatchError
from visrec.domain.catalog.entity import METADATA_FIELDS
from visrec.domain.catalog.exception import DuplicateItemError, InvalidFilterError, ItemNotFoundError
from visrec.domain.index.constant import DEFAULT_K
from visrec.domain.index.entity import CatalogItem, IndexShard, NeighborList, PartitionKey, ScanCounter

logger = logging.getLogger(__name__)


def distances(query: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Euclidean distance to every row: f32 inputs, f64 accumulation.

    Each row's value depends only on that row and the query, and
    d(a, b) == d(b, a) bit for bit, which incremental maintenance relies on.
    """
    diff = matrix.astype(np.float64) - query.astype(np.float64)
    return np.sqrt(np.sum(diff * diff, axis=1))


def _top_k(ids: tuple[str, ...], dist: np.ndarray, k: int, exclude: int | None) -> tuple[tuple[str, float], ...]:
    # ids are ascending, so a stable sort breaks distance ties by id
    order = np.argsort(dist, kind="stable")
    if exclude is not None:
        order = order[order != exclude]
    return tuple((ids[i], float(dist[i])) for i in order[:k])


def _merge(entries: Iterable[tuple[str, float]], k: int) -> tuple[tuple[str, float], ...]:
    return tuple(sorted(entries, key=lambda e: (e[1], e[0]))[:k])


def validate_filter(selector: Mapping[str, str] | None) -> dict[str, str]:
    selector = dict(selector or {})
    for key in selector:
        if key not in METADATA_FIELDS:
            raise InvalidFilterError(key)
    return selector


def _make_shard(items: dict[str, CatalogItem], dim: int) -> tuple[tuple[str, ...], np.ndarray]:
    ids = tuple(sorted(items))
    matrix = np.zeros((len(ids), dim), dtype=np.float32)
    for row, item_id in enumerate(ids):
        matrix[row] = items[item_id].embedding
    return ids, matrix


class KnnIndex:
    """Exact k-NN over metadata-pruned shards with precomputed neighbor lists.

    An instance is an immutable generation: ``apply_delta`` returns a new
    index sharing every untouched shard with its predecessor.
    """

    def __init__(self, dim: int, k: int, shards: dict[PartitionKey, IndexShard], generation: int = 0):
        self.dim = dim
        self.k = k
        self.generation = generation
        self._shards = shards
        self._where: dict[str, PartitionKey] = {
            item_id: key for key, shard in shards.items() for item_id in shard.ids
        }

    @classmethod
    def empty(cls, dim: int, k: int = DEFAULT_K) -> "KnnIndex":
        return cls(dim=dim, k=k, shards={})

    @classmethod
    def build(
        cls, items: Iterable[CatalogItem], k: int = DEFAULT_K, dim: int | None = None, generation: int = 0
    ) -> "KnnIndex":
        items = list(items)
        if k < 0:
            raise ValueError(f"k must be nonnegative, got {k}")
        if dim is None:
            if not items:
                raise ValueError("cannot infer the dimension of an empty index")
            dim = items[0].dim

        grouped: dict[PartitionKey, dict[str, CatalogItem]] = defaultdict(dict)
        seen: set[str] = set()
        for item in items:
            if item.id in seen:
                raise DuplicateItemError(item.id)
            if item.dim != dim:
                raise DimensionMismatchError(dim, item.dim)
            seen.add(item.id)
            grouped[item.partition][item.id] = item

        shards = {}
        for key in sorted(grouped):
            ids, matrix = _make_shard(grouped[key], dim)
            lists = {
                owner: NeighborList(owner, _top_k(ids, distances(matrix[row], matrix), k, exclude=row))
                for row, owner in enumerate(ids)
            }
            shards[key] = IndexShard(partition=key, ids=ids, matrix=matrix, items=grouped[key], lists=lists)
        logger.info(f"Built index: {len(seen)} items in {len(shards)} partitions, dim={dim}, k={k}")
        return cls(dim=dim, k=k, shards=shards, generation=generation)

    def __len__(self) -> int:
        return len(self._where)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._where

    @property
    def partitions(self) -> list[PartitionKey]:
        return sorted(self._shards)

    def shard(self, key: PartitionKey) -> IndexShard:
        return self._shards[key]

    def partition_counts(self) -> dict[PartitionKey, int]:
        return {key: len(self._shards[key]) for key in self.partitions}

    def item(self, item_id: str) -> CatalogItem:
        key = self._where.get(item_id)
        if key is None:
            raise ItemNotFoundError(item_id)
        return self._shards[key].items[item_id]

    def items(self) -> Iterator[CatalogItem]:
        for key in self.partitions:
            shard = self._shards[key]
            for item_id in shard.ids:
                yield shard.items[item_id]

    def neighbors(self, item_id: str) -> NeighborList:
        key = self._where.get(item_id)
        if key is None:
            raise ItemNotFoundError(item_id)
        return self._shards[key].lists[item_id]

    def query(
        self,
        embedding: np.ndarray,
        k: int,
        selector: Mapping[str, str] | None = None,
        exclude: str | None = None,
        counter: ScanCounter | None = None,
    ) -> NeighborList:
        """Exact top-k over the shards the filter selects; no matching shard gives an empty list."""
        embedding = np.asarray(embedding, dtype=np.float32).reshape(-1)
        if embedding.shape[0] != self.dim:
            raise DimensionMismatchError(self.dim, embedding.shape[0])
        selector = validate_filter(selector)

        candidates: list[tuple[str, float]] = []
        for key in self.partitions:
            shard = self._shards[key]
            if not shard.metadata.matches(selector):
                continue
            if counter is not None:
                counter.shards += 1
                counter.rows += len(shard)
            skip = shard.position().get(exclude) if exclude is not None else None
            candidates.extend(_top_k(shard.ids, distances(embedding, shard.matrix), k, exclude=skip))
        return NeighborList(owner=exclude or "", entries=_merge(candidates, k))

    def apply_delta(
        self, added: Iterable[CatalogItem] = (), removed: Iterable[str] = (), counter: ScanCounter | None = None
    ) -> "KnnIndex":
        """Next generation equal, bit for bit, to a rebuild over (items - removed + added).

        Only added items and owners that lost a neighbor are scanned in full; every
        other list just merges in the distances to the added items of its partition.
        An id may be removed and re-added in the same delta.
        """
        added = list(added)
        removed_ids = set(removed)
        for item_id in removed_ids:
            if item_id not in self._where:
                raise ItemNotFoundError(item_id)
        fresh: set[str] = set()
        for item in added:
            if item.id in fresh or (item.id in self._where and item.id not in removed_ids):
                raise DuplicateItemError(item.id)
            if item.dim != self.dim:
                raise DimensionMismatchError(self.dim, item.dim)
            fresh.add(item.id)

        added_by_key: dict[PartitionKey, dict[str, CatalogItem]] = defaultdict(dict)
        for item in added:
            added_by_key[item.partition][item.id] = item
        removed_by_key: dict[PartitionKey, set[str]] = defaultdict(set)
        for item_id in removed_ids:
            removed_by_key[self._where[item_id]].add(item_id)

        shards = dict(self._shards)
        for key in sorted(set(added_by_key) | set(removed_by_key)):
            old = self._shards.get(key)
            new_shard = self._next_shard(key, old, added_by_key.get(key, {}), removed_by_key.get(key, set()), counter)
            if new_shard is None:
                shards.pop(key, None)
            else:
                shards[key] = new_shard

        logger.info(f"Applied delta: +{len(added)} -{len(removed_ids)} items, generation {self.generation + 1}")
        return KnnIndex(dim=self.dim, k=self.k, shards=shards, generation=self.generation + 1)

    def _next_shard(
        self,
        key: PartitionKey,
        old: IndexShard | None,
        added: dict[str, CatalogItem],
        removed: set[str],
        counter: ScanCounter | None,
    ) -> IndexShard | None:
        items = {item_id: item for item_id, item in (old.items.items() if old else ()) if item_id not in removed}
        items.update(added)
        if not items:
            return None
        ids, matrix = _make_shard(items, self.dim)
        position = {item_id: i for i, item_id in enumerate(ids)}

        def scan(owner: str) -> np.ndarray:
            if counter is not None:
                counter.rows += len(ids)
            return distances(matrix[position[owner]], matrix)

        lists: dict[str, NeighborList] = {}
        # (a) full lists for added items; their rows also give every owner's distance to them
        added_dist: dict[str, np.ndarray] = {}
        for item_id in sorted(added):
            dist = scan(item_id)
            added_dist[item_id] = dist
            lists[item_id] = NeighborList(item_id, _top_k(ids, dist, self.k, exclude=position[item_id]))

        for owner in ids:
            if owner in added:
                continue
            previous = old.lists[owner]
            if any(neighbor in removed for neighbor, _ in previous.entries):
                # (c) lost a neighbor: re-scan this owner only
                lists[owner] = NeighborList(owner, _top_k(ids, scan(owner), self.k, exclude=position[owner]))
            elif added:
                # (b) merge in the added items that beat the current k-th entry
                row = position[owner]
                merged = list(previous.entries) + [(a, float(added_dist[a][row])) for a in sorted(added)]
                lists[owner] = NeighborList(owner, _merge(merged, self.k))
            else:
                lists[owner] = previous
        return IndexShard(partition=key, ids=ids, matrix=matrix, items=items, lists=lists)

    def near_duplicates(self, tau: float) -> list[tuple[str, str, float]]:
        """Unordered same-partition pairs with distance below ``tau`` (or exactly zero).

        Read off the neighbor lists, so an item with k or more duplicates can miss pairs.
        """
        if tau < 0:
            raise ValueError(f"tau must be nonnegative, got {tau}")
        pairs: dict[tuple[str, str], float] = {}
        for key in self.partitions:
            for owner, neighbors in self._shards[key].lists.items():
                for neighbor, dist in neighbors.entries:
                    if dist < tau or dist == 0.0:
                        pair = (owner, neighbor) if owner < neighbor else (neighbor, owner)
                        pairs[pair] = dist
        return sorted(((a, b, d) for (a, b), d in pairs.items()), key=lambda p: (p[2], p[0], p[1]))

    def same_state(self, other: "KnnIndex") -> bool:
        """Exact equality of items, matrices and neighbor lists; the generation is ignored."""
        if (self.dim, self.k, self.partitions) != (other.dim, other.k, other.partitions):
            return False
        for key in self.partitions:
            mine, theirs = self._shards[key], other._shards[key]
            if mine.ids != theirs.ids or mine.matrix.tobytes() != theirs.matrix.tobytes():
                return False
            if any(mine.items[i].version != theirs.items[i].version for i in mine.ids):
                return False
            if any(mine.lists[i].entries != theirs.lists[i].entries for i in mine.ids):
                return False
        return True
