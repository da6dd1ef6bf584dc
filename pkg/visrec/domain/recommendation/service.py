import threading
import time
from collections.abc import Callable

from visrec.domain.embedding.service import EmbeddingService
from visrec.domain.index.publisher import GenerationPublisher
from visrec.domain.recommendation.exception import KTooLargeError
from visrec.domain.recommendation.response.similar_items_response import (
    ItemMetadataDto,
    SimilarItemDto,
    SimilarItemsResponse,
)
from visrec.domain.recommendation.response.stats_response import HealthResponse, PartitionStatsDto, StatsResponse

REQUEST_KINDS = ("similar", "extract", "stats")


class RecommendationService:
    """Read-only request handling over the published generation.

    Each request takes the generation once and answers from it alone.
    """

    def __init__(
        self,
        publisher: GenerationPublisher,
        embedding_service: EmbeddingService,
        k_default: int,
        clock: Callable[[], float] = time.monotonic,
    ):
        self.publisher = publisher
        self.embedding_service = embedding_service
        self.k_default = k_default
        self.clock = clock
        self.started_at = clock()
        self._counters = {kind: 0 for kind in REQUEST_KINDS}
        self._lock = threading.Lock()

    def _count(self, kind: str) -> None:
        with self._lock:
            self._counters[kind] += 1

    def handle_similar(self, item_id: str, k: int | None = None) -> SimilarItemsResponse:
        """The cached neighbor list prefix; no distance is computed here."""
        self._count("similar")
        index = self.publisher.current()
        k = self.k_default if k is None else k
        if k > index.k:
            raise KTooLargeError(k, index.k)

        neighbors = index.neighbors(item_id).entries[:k]
        items = []
        for neighbor_id, distance in neighbors:
            metadata = index.item(neighbor_id).metadata
            items.append(
                SimilarItemDto(id=neighbor_id, distance=distance, metadata=ItemMetadataDto(**metadata.to_dict()))
            )
        return SimilarItemsResponse(query_id=item_id, items=items, generation=index.generation, served_from="cache")

    def handle_extract(self, payload: bytes, group: str | None = None) -> str:
        """Embedding JSON, byte-identical to what the embed command prints."""
        self._count("extract")
        return self.embedding_service.extract_payload(payload, group).to_json()

    def handle_stats(self) -> StatsResponse:
        with self._lock:
            requests = dict(self._counters)
            self._counters["stats"] += 1
        index = self.publisher.current()
        partitions = [
            PartitionStatsDto(category_group=key[0], vertical=key[1], gender=key[2], items=count)
            for key, count in index.partition_counts().items()
        ]
        return StatsResponse(
            generation=index.generation,
            items=len(index),
            partitions=partitions,
            uptime_seconds=self.clock() - self.started_at,
            requests=requests,
        )

    def handle_health(self) -> HealthResponse:
        return HealthResponse(status="ok", generation=self.publisher.current().generation)
