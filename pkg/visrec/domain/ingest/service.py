import logging
import threading
from collections.abc import Iterable
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from visrec.core.codec.jsonl import append_jsonl
from visrec.core.exception.base import BaseCustomException, DimensionMismatchError
from visrec.core.image.ppm import read_ppm
from visrec.domain.embedding.entity import Embedding
from visrec.domain.embedding.service import EmbeddingService
from visrec.domain.index.knn import KnnIndex
from visrec.domain.index.publisher import GenerationPublisher
from visrec.domain.ingest.entity import IngestionEvent
from visrec.domain.ingest.enum import ApplyOutcome, EventOp
from visrec.domain.ingest.exception import RefreshFailedError
from visrec.domain.ingest.repository import FeatureStore

logger = logging.getLogger(__name__)


def dead_letter(path: str | Path, row: dict, error: BaseCustomException) -> None:
    append_jsonl(path, {"code": error.code, "event": row, "message": error.detail})


def extract_event(event: IngestionEvent, extractor: EmbeddingService) -> Embedding:
    assert event.image is not None
    return extractor.extract(read_ppm(event.image), event.item_metadata().category_group)


def _commit(
    store: FeatureStore,
    event: IngestionEvent,
    embedding: Embedding | BaseCustomException | None,
    dead_letter_path: str | Path,
) -> ApplyOutcome:
    if event.op == EventOp.DELETE:
        store.tombstone(event.seq, event.id)
        return ApplyOutcome.APPLIED

    if isinstance(embedding, Embedding):
        dim = store.dim()
        if dim is not None and embedding.dim != dim:
            embedding = DimensionMismatchError(dim, embedding.dim)
    if not isinstance(embedding, Embedding):
        assert embedding is not None
        logger.warning(f"Dead-lettering event seq={event.seq} id={event.id}: {embedding.code} {embedding.detail}")
        dead_letter(dead_letter_path, event.to_row(), embedding)
        store.mark_dead(event.seq, event.id)
        return ApplyOutcome.DEAD_LETTERED

    # update is delete + insert: the new put shadows the old record
    store.put(event.seq, event.id, embedding.values, event.item_metadata())
    return ApplyOutcome.APPLIED


def _try_extract(event: IngestionEvent, extractor: EmbeddingService) -> Embedding | BaseCustomException | None:
    if event.op == EventOp.DELETE:
        return None
    try:
        return extract_event(event, extractor)
    except BaseCustomException as e:
        return e


def apply_event(
    store: FeatureStore, event: IngestionEvent, extractor: EmbeddingService, dead_letter_path: str | Path
) -> ApplyOutcome:
    """Applies one event; a consumed seq is skipped, a failed extraction is dead-lettered."""
    if not store.should_apply(event.seq):
        return ApplyOutcome.SKIPPED
    return _commit(store, event, _try_extract(event, extractor), dead_letter_path)


def refresh(store: FeatureStore, index_prev: KnnIndex, publisher: GenerationPublisher | None = None) -> KnnIndex:
    """Brings the index up to the store by an (id, version) diff and publishes the result.

    An empty diff returns ``index_prev`` itself and publishes nothing. On failure
    nothing is published and the previous generation keeps serving. There is no
    policy argument: when to refresh is the ``RefreshPolicy`` of ``IngestionWorker``.
    """
    items = store.live_items()
    previous = {item.id: item.version for item in index_prev.items()}
    current = {item.id: item for item in items}

    removed = [
        item_id
        for item_id, version in previous.items()
        if item_id not in current or current[item_id].version != version
    ]
    added = [item for item in items if previous.get(item.id) != item.version]
    if not removed and not added:
        return index_prev

    try:
        index_next = index_prev.apply_delta(added=added, removed=removed)
    except BaseCustomException as e:
        logger.error(f"Refresh failed: {e}")
        raise RefreshFailedError(index_prev.generation, e.detail)
    if publisher is not None:
        publisher.publish(index_next)
    logger.info(f"Refreshed to generation {index_next.generation}: +{len(added)} -{len(removed)}")
    return index_next


def compact(store: FeatureStore, watermark: int | None = None) -> FeatureStore:
    store.compact(watermark)
    return store


class IngestService:
    """Single consumer: extraction may run on several threads, commits go in seq order."""

    def __init__(
        self,
        store: FeatureStore,
        extractor: EmbeddingService,
        dead_letter_path: str | Path,
        publisher: GenerationPublisher,
        workers: int = 1,
    ):
        self.store = store
        self.extractor = extractor
        self.dead_letter_path = dead_letter_path
        self.publisher = publisher
        self.workers = workers
        self._refresh_lock = threading.Lock()

    def _commit_run(self, run: list[IngestionEvent], counts: dict[ApplyOutcome, int]) -> None:
        if self.workers > 1 and len(run) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                extracted = list(pool.map(lambda e: _try_extract(e, self.extractor), run))
        else:
            extracted = [_try_extract(event, self.extractor) for event in run]
        for event, embedding in zip(run, extracted):
            counts[_commit(self.store, event, embedding, self.dead_letter_path)] += 1

    def consume(self, events: Iterable[IngestionEvent]) -> dict[ApplyOutcome, int]:
        """Applies events as if one at a time; the first out-of-order seq raises after everything before it is in."""
        counts = {outcome: 0 for outcome in ApplyOutcome}
        run: list[IngestionEvent] = []
        for event in events:
            # a seq that does not increase is judged against the committed store
            if run and event.seq <= run[-1].seq:
                self._commit_run(run, counts)
                run = []
            if self.store.should_apply(event.seq):
                run.append(event)
            else:
                counts[ApplyOutcome.SKIPPED] += 1
        self._commit_run(run, counts)
        return counts

    def refresh(self) -> KnnIndex:
        # one maintenance actor at a time
        with self._refresh_lock:
            return refresh(self.store, self.publisher.current(), self.publisher)
