import logging
from dataclasses import dataclass
from pathlib import Path

from visrec.config import load_config
from visrec.core.exception.base import ConfigError
from visrec.domain.embedding.repository import ModelRegistry
from visrec.domain.embedding.service import EmbeddingService
from visrec.domain.index.knn import KnnIndex
from visrec.domain.index.publisher import GenerationPublisher
from visrec.domain.index.repository import load_index
from visrec.domain.ingest.repository import FeatureStore
from visrec.domain.ingest.service import IngestService
from visrec.domain.recommendation.config import ServiceConfig
from visrec.domain.recommendation.service import RecommendationService
from visrec.worker.ingestion.worker import EventLogTailer, IngestionWorker

logger = logging.getLogger(__name__)


@dataclass
class Container:
    config: ServiceConfig
    model_registry: ModelRegistry
    embedding_service: EmbeddingService
    publisher: GenerationPublisher
    recommendation_service: RecommendationService
    ingest_service: IngestService | None = None
    ingestion_worker: IngestionWorker | None = None


def _initial_index(config: ServiceConfig, model_registry: ModelRegistry) -> KnnIndex:
    if config.index_snapshot and Path(config.index_snapshot).exists():
        index = load_index(config.index_snapshot)
        logger.info(f"Loaded index snapshot {config.index_snapshot}: generation {index.generation}, {len(index)} items")
        return index
    dims = model_registry.dims()
    if len(dims) != 1:
        raise ConfigError(f"Cannot start an empty index: models disagree on the embedding dim {sorted(dims)}")
    return KnnIndex.empty(dim=dims.pop(), k=config.index_k)


def build_container(config: ServiceConfig) -> Container:
    model_registry = ModelRegistry.from_path(config.model_path)
    embedding_service = EmbeddingService(model_registry)
    publisher = GenerationPublisher(_initial_index(config, model_registry))

    index = publisher.current()
    if config.k_default > index.k:
        raise ConfigError(f"k_default={config.k_default} exceeds the index k={index.k}")

    recommendation_service = RecommendationService(
        publisher=publisher, embedding_service=embedding_service, k_default=config.k_default
    )
    container = Container(
        config=config,
        model_registry=model_registry,
        embedding_service=embedding_service,
        publisher=publisher,
        recommendation_service=recommendation_service,
    )

    if config.ingest is not None:
        settings = config.ingest
        paths = load_config().paths
        dead_letter_path = settings.dead_letter or paths.resolve(paths.dead_letter)
        container.ingest_service = IngestService(
            store=FeatureStore(settings.store),
            extractor=embedding_service,
            dead_letter_path=dead_letter_path,
            publisher=publisher,
            workers=settings.workers,
        )
        # whatever the store already holds is served from the first request on
        container.ingest_service.refresh()
        container.ingestion_worker = IngestionWorker(
            tailer=EventLogTailer(settings.events), ingest_service=container.ingest_service, policy=settings.refresh
        )
    return container
