import os
from pathlib import Path

import numpy as np

from visrec.core.codec.binary import BinaryReader, BinaryWriter, TruncatedError
from visrec.core.exception.base import CorruptFileError
from visrec.domain.catalog.entity import ItemMetadata
from visrec.domain.index.constant import INDEX_FORMAT_VERSION, INDEX_MAGIC
from visrec.domain.index.entity import CatalogItem, IndexShard, NeighborList, PartitionKey
from visrec.domain.index.knn import KnnIndex


def encode_index(index: KnnIndex) -> bytes:
    header = {
        "dim": index.dim,
        "format": INDEX_FORMAT_VERSION,
        "generation": index.generation,
        "k": index.k,
        "partitions": [{"count": count, "key": list(key)} for key, count in index.partition_counts().items()],
    }
    writer = BinaryWriter().magic(INDEX_MAGIC).json(header)
    for key in index.partitions:
        shard = index.shard(key)
        position = shard.position()
        writer.json({"ids": list(shard.ids), "versions": [shard.items[i].version for i in shard.ids]})
        writer.f32(shard.matrix)
        for owner in shard.ids:
            entries = shard.lists[owner].entries
            writer.u32(len(entries))
            writer.u32_array(np.array([position[neighbor] for neighbor, _ in entries], dtype=np.uint32))
            writer.f64(np.array([dist for _, dist in entries], dtype=np.float64))
    return writer.getvalue()


def decode_index(payload: bytes, path: str = "<memory>") -> KnnIndex:
    reader = BinaryReader(payload)
    try:
        reader.expect_magic(INDEX_MAGIC)
        header = reader.json()
        if header.get("format") != INDEX_FORMAT_VERSION:
            raise CorruptFileError(path, f"unsupported index format {header.get('format')!r}")
        dim, k = int(header["dim"]), int(header["k"])
        shards: dict[PartitionKey, IndexShard] = {}
        for partition in header["partitions"]:
            key: PartitionKey = tuple(partition["key"])  # type: ignore[assignment]
            table = reader.json()
            ids = tuple(table["ids"])
            if len(ids) != partition["count"]:
                raise CorruptFileError(path, f"partition {key} lists {len(ids)} ids, header says {partition['count']}")
            matrix = reader.f32(len(ids) * dim).reshape(len(ids), dim)
            metadata = ItemMetadata(*key)
            items = {
                item_id: CatalogItem(id=item_id, embedding=matrix[row], metadata=metadata, version=int(version))
                for row, (item_id, version) in enumerate(zip(ids, table["versions"]))
            }
            lists = {}
            for owner in ids:
                count = reader.u32()
                rows = reader.u32_array(count)
                dists = reader.f64(count)
                lists[owner] = NeighborList(owner, tuple((ids[r], float(d)) for r, d in zip(rows, dists)))
            shards[key] = IndexShard(partition=key, ids=ids, matrix=matrix, items=items, lists=lists)
    except (TruncatedError, ValueError, KeyError, IndexError) as e:
        raise CorruptFileError(path, str(e))
    if not reader.at_end():
        raise CorruptFileError(path, f"{reader.remaining()} trailing bytes")
    return KnnIndex(dim=dim, k=k, shards=shards, generation=int(header.get("generation", 0)))


def save_index(path: str | Path, index: KnnIndex) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_index(index))
    os.replace(tmp, path)


def load_index(path: str | Path) -> KnnIndex:
    try:
        payload = Path(path).read_bytes()
    except OSError as e:
        raise CorruptFileError(str(path), e.strerror or str(e))
    return decode_index(payload, str(path))
