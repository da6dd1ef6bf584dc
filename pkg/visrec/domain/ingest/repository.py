import logging
import os
import struct
import threading
import zlib
from pathlib import Path

import numpy as np

from visrec.core.codec.binary import BinaryReader, BinaryWriter, TruncatedError
from visrec.core.exception.base import CorruptFileError
from visrec.domain.catalog.entity import ItemMetadata
from visrec.domain.index.entity import CatalogItem
from visrec.domain.ingest.constant import STORE_MAGIC
from visrec.domain.ingest.entity import StoreEntry, StoreRecord
from visrec.domain.ingest.enum import RecordKind
from visrec.domain.ingest.exception import OutOfOrderEventError

logger = logging.getLogger(__name__)

FRAME = struct.Struct("<II")


def encode_record(record: StoreRecord) -> bytes:
    embedding = record.embedding if record.embedding is not None else np.zeros(0, dtype=np.float32)
    header = {
        "dim": int(embedding.shape[0]),
        "id": record.id,
        "kind": record.kind.value,
        "metadata": record.metadata.to_dict() if record.metadata is not None else None,
        "seq": record.seq,
    }
    payload = BinaryWriter().json(header).f32(embedding).getvalue()
    return FRAME.pack(len(payload), zlib.crc32(payload)) + payload


def decode_record(payload: bytes) -> StoreRecord:
    reader = BinaryReader(payload)
    header = reader.json()
    embedding = reader.f32(int(header["dim"])) if header["dim"] else None
    if not reader.at_end():
        raise ValueError(f"{reader.remaining()} trailing bytes in record")
    metadata = ItemMetadata.from_dict(header["metadata"]) if header["metadata"] is not None else None
    return StoreRecord(
        kind=RecordKind(header["kind"]), seq=int(header["seq"]), id=header["id"], metadata=metadata, embedding=embedding
    )


def read_records(payload: bytes, path: str = "<memory>") -> tuple[list[StoreRecord], int]:
    """Decodes every intact record; returns them and the byte offset where the valid log ends.

    A short frame or a checksum mismatch ends the log there: nothing after
    the last complete record is honored.
    """
    if not payload.startswith(STORE_MAGIC):
        raise CorruptFileError(path, "not a feature store (bad magic)")
    records = []
    offset = len(STORE_MAGIC)
    while offset < len(payload):
        if offset + FRAME.size > len(payload):
            break
        length, crc = FRAME.unpack_from(payload, offset)
        body = payload[offset + FRAME.size : offset + FRAME.size + length]
        if len(body) != length or zlib.crc32(body) != crc:
            break
        try:
            records.append(decode_record(body))
        except (TruncatedError, ValueError, KeyError) as e:
            raise CorruptFileError(path, f"record at offset {offset}: {e}")
        offset += FRAME.size + length
    return records, offset


class FeatureStore:
    """Append-only log of (id, embedding, metadata) records; the latest record per id wins.

    The in-memory state is exactly what replaying the log from empty produces.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.RLock()
        self._reset()
        self._load()

    def _reset(self) -> None:
        self._live: dict[str, StoreEntry] = {}
        self._consumed: set[int] = set()
        self.last_seq = -1
        self.watermark = -1

    def _load(self) -> None:
        if not self.path.exists() or self.path.stat().st_size == 0:
            self.path.write_bytes(STORE_MAGIC)
            return
        payload = self.path.read_bytes()
        records, end = read_records(payload, str(self.path))
        for record in records:
            self._apply(record)
        if end < len(payload):
            dropped = len(payload) - end
            logger.warning(f"{self.path}: dropping {dropped} bytes of incomplete tail after {len(records)} records")
            with open(self.path, "r+b") as f:
                f.truncate(end)

    def _apply(self, record: StoreRecord) -> None:
        if record.kind == RecordKind.CHECKPOINT:
            self.watermark = max(self.watermark, record.seq)
        elif record.kind == RecordKind.PUT:
            assert record.embedding is not None and record.metadata is not None
            self._live[record.id] = StoreEntry(embedding=record.embedding, metadata=record.metadata, version=record.seq)
            self._consumed.add(record.seq)
        elif record.kind == RecordKind.TOMBSTONE:
            self._live.pop(record.id, None)
            self._consumed.add(record.seq)
        else:
            self._consumed.add(record.seq)
        self.last_seq = max(self.last_seq, record.seq)

    def is_consumed(self, seq: int) -> bool:
        return seq <= self.watermark or seq in self._consumed

    def should_apply(self, seq: int) -> bool:
        """False for an already consumed seq; raises for one that is late but new."""
        with self._lock:
            if self.is_consumed(seq):
                return False
            if seq < self.last_seq:
                raise OutOfOrderEventError(seq, self.last_seq)
            return True

    def append(self, record: StoreRecord) -> None:
        with self._lock:
            with open(self.path, "ab") as f:
                f.write(encode_record(record))
                f.flush()
            self._apply(record)

    def put(self, seq: int, item_id: str, embedding: np.ndarray, metadata: ItemMetadata) -> None:
        embedding = np.ascontiguousarray(embedding, dtype=np.float32).reshape(-1)
        self.append(StoreRecord(RecordKind.PUT, seq, item_id, metadata, embedding))

    def tombstone(self, seq: int, item_id: str) -> None:
        self.append(StoreRecord(RecordKind.TOMBSTONE, seq, item_id))

    def mark_dead(self, seq: int, item_id: str) -> None:
        self.append(StoreRecord(RecordKind.DEAD, seq, item_id))

    def __len__(self) -> int:
        return len(self._live)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._live

    def get(self, item_id: str) -> StoreEntry | None:
        return self._live.get(item_id)

    def live_items(self) -> list[CatalogItem]:
        with self._lock:
            live = dict(self._live)
        return [
            CatalogItem(id=item_id, embedding=entry.embedding, metadata=entry.metadata, version=entry.version)
            for item_id, entry in sorted(live.items())
        ]

    def dim(self) -> int | None:
        for entry in self._live.values():
            return int(entry.embedding.shape[0])
        return None

    def state_dump(self) -> bytes:
        """Canonical bytes of the visible state, for replay and compaction comparisons."""
        with self._lock:
            writer = BinaryWriter().json({"ids": sorted(self._live), "last_seq": self.last_seq})
            for item_id in sorted(self._live):
                entry = self._live[item_id]
                writer.json({"id": item_id, "metadata": entry.metadata.to_dict(), "version": entry.version})
                writer.f32(entry.embedding)
            return writer.getvalue()

    def records(self) -> list[StoreRecord]:
        with self._lock:
            records, _ = read_records(self.path.read_bytes(), str(self.path))
        return records

    def compact(self, watermark: int | None = None) -> None:
        """Drops shadowed records, tombstones and dead markers at or below the watermark.

        Records above the watermark are kept verbatim. The visible state is unchanged.
        """
        with self._lock:
            records = self.records()
            mark = self.last_seq if watermark is None else min(watermark, self.last_seq)
            mark = max(mark, self.watermark)

            latest: dict[str, StoreRecord] = {}
            for record in records:
                if record.seq <= mark and record.kind in (RecordKind.PUT, RecordKind.TOMBSTONE):
                    latest[record.id] = record
            survivors = sorted((r for r in latest.values() if r.kind == RecordKind.PUT), key=lambda r: r.seq)
            newer = [r for r in records if r.seq > mark and r.kind != RecordKind.CHECKPOINT]

            payload = bytearray(STORE_MAGIC)
            payload += encode_record(StoreRecord(RecordKind.CHECKPOINT, mark))
            for record in survivors + newer:
                payload += encode_record(record)

            tmp = self.path.with_name(self.path.name + ".tmp")
            tmp.write_bytes(bytes(payload))
            os.replace(tmp, self.path)
            before = len(records)
            self._reset()
            self._load()
            after = len(survivors) + len(newer) + 1
            logger.info(f"Compacted {self.path}: {before} -> {after} records (watermark {mark})")
